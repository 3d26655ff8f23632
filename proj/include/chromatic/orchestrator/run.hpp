#pragma once

// Run directories.
//
//   config.json          effective TrainConfig
//   log.jsonl            one IterationRecord per line
//   curve.csv            iteration,mean_reward,max_reward
//   timing.csv           iteration,wall_ms (kept apart so logs are reproducible)
//   partitions.jsonl     best partitioning and parameters at each phase end
//   checkpoints/ckpt-NNNNNNNN.json, checkpoints/latest.json
//   policy.json          final policy
//   manifest.json        files written, checked after the run

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "chromatic/orchestrator/trainer.hpp"

namespace chromatic::orchestrator {

struct RunOptions {
    std::filesystem::path out_dir;
    const std::atomic<bool>* stop = nullptr;  // polled between iterations
    std::ostream* progress = nullptr;
    /// Stop after this many iterations of the current invocation (testing).
    std::optional<std::uint64_t> max_iterations_this_call;
};

struct RunSummary {
    std::uint64_t iterations_completed = 0;  // total, including earlier invocations
    bool interrupted = false;
    std::optional<IterationRecord> last;
};

/// Starts a fresh run; refuses a directory that already holds a log.
RunSummary train_run(const TrainConfig& config, WorkerPool& pool, const RunOptions& options);

/// Continues from checkpoints/latest.json, truncating logs to the checkpoint.
RunSummary resume_run(WorkerPool& pool, const RunOptions& options);

TrainState load_latest_checkpoint(const std::filesystem::path& run_dir);
TrainConfig load_run_config(const std::filesystem::path& run_dir);

/// Required artifacts that are missing; empty when the run directory is complete.
std::vector<std::string> manifest_gaps(const std::filesystem::path& run_dir);
/// Throws Error listing the gaps.
void check_manifest(const std::filesystem::path& run_dir);

std::vector<IterationRecord> read_log(const std::filesystem::path& run_dir);
IterationRecord record_from_json(const json& j);

}  // namespace chromatic::orchestrator
