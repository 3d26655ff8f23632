#include "chromatic/orchestrator/run.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chromatic/orchestrator/checkpoint.hpp"
#include "chromatic/orchestrator/policy_io.hpp"

namespace chromatic::orchestrator {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> lines;
    if (!fs::exists(path)) return lines;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t iteration) {
    char name[40];
    std::snprintf(name, sizeof name, "ckpt-%08llu.json", static_cast<unsigned long long>(iteration));
    return dir / "checkpoints" / name;
}

void write_checkpoint(const TrainState& state, const fs::path& dir) {
    fs::create_directories(dir / "checkpoints");
    save_checkpoint(state, checkpoint_path(dir, state.iteration));
    save_checkpoint(state, dir / "checkpoints" / "latest.json");
}

/// Keeps JSONL lines whose "iteration" is below `limit`.
void truncate_jsonl(const fs::path& path, std::uint64_t limit) {
    if (!fs::exists(path)) return;
    std::string kept;
    for (const auto& line : read_lines(path)) {
        if (json::parse(line).at("iteration").get<std::uint64_t>() < limit) kept += line + "\n";
    }
    write_file_atomic(path, kept);
}

/// Keeps the header and rows whose first column is below `limit`.
void truncate_csv(const fs::path& path, std::uint64_t limit) {
    if (!fs::exists(path)) return;
    const auto lines = read_lines(path);
    std::string kept;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == 0) {
            kept += lines[i] + "\n";
            continue;
        }
        if (std::stoull(lines[i].substr(0, lines[i].find(','))) < limit) kept += lines[i] + "\n";
    }
    write_file_atomic(path, kept);
}

void ensure_header(const fs::path& path, const char* header) {
    if (fs::exists(path) && fs::file_size(path) > 0) return;
    std::ofstream(path) << header << "\n";
}

RunSummary drive(TrainState& state, WorkerPool& pool, const RunOptions& options) {
    const fs::path& dir = options.out_dir;
    const TrainConfig& cfg = state.config;
    ensure_header(dir / "curve.csv", "iteration,mean_reward,max_reward");
    ensure_header(dir / "timing.csv", "iteration,wall_ms");
    std::ofstream log(dir / "log.jsonl", std::ios::app);
    std::ofstream curve(dir / "curve.csv", std::ios::app);
    std::ofstream timing(dir / "timing.csv", std::ios::app);
    std::ofstream partitions(dir / "partitions.jsonl", std::ios::app);
    if (!log || !curve || !timing || !partitions) throw Error("cannot open log files in " + dir.string());

    RunSummary summary;
    std::uint64_t this_call = 0;
    while (state.iteration < cfg.iterations) {
        if ((options.stop != nullptr && options.stop->load()) ||
            (options.max_iterations_this_call && this_call >= *options.max_iterations_this_call)) {
            summary.interrupted = true;
            break;
        }
        IterationRecord record = run_iteration(state, pool);
        ++this_call;
        log << record_to_json(record).dump() << "\n" << std::flush;
        curve << record.iteration << "," << format_double(record.mean_reward) << ","
              << format_double(record.max_reward) << "\n"
              << std::flush;
        timing << record.iteration << "," << format_double(record.wall_ms) << "\n" << std::flush;
        if (record.phase) {
            const PartitionScore& best = record.phase->best;
            json event;
            event["iteration"] = record.phase->iteration;
            event["partition_id"] = best.id;
            event["max_reward"] = best.max_reward ? json(*best.max_reward) : json(nullptr);
            event["rollouts"] = best.rollouts;
            event["num_partitions"] = best.partitioning.num_partitions;
            event["assignment"] = best.partitioning.assignment;
            event["params"] = state.params;
            partitions << event.dump() << "\n" << std::flush;
        }
        if (options.progress != nullptr) {
            *options.progress << "iter " << record.iteration + 1 << "/" << cfg.iterations << "  mean "
                              << record.mean_reward << "  max " << record.max_reward << "  (" << record.wall_ms
                              << " ms)\n";
        }
        if (state.iteration % cfg.checkpoint_every == 0 || state.iteration == cfg.iterations) {
            write_checkpoint(state, dir);
        }
        summary.last = std::move(record);
    }
    if (!fs::exists(checkpoint_path(dir, state.iteration))) write_checkpoint(state, dir);
    save_policy(policy_from_state(state), dir / "policy.json");

    json manifest;
    manifest["iterations_completed"] = state.iteration;
    manifest["complete"] = state.iteration >= cfg.iterations;
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
            files.push_back(fs::relative(entry.path(), dir).generic_string());
        }
    }
    std::sort(files.begin(), files.end());
    manifest["files"] = files;
    write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
    check_manifest(dir);

    summary.iterations_completed = state.iteration;
    return summary;
}

}  // namespace

TrainConfig load_run_config(const fs::path& run_dir) {
    const fs::path path = run_dir / "config.json";
    if (!fs::exists(path)) throw ConfigError("no config.json in " + run_dir.string());
    try {
        return config_from_json(json::parse(read_text(path)));
    } catch (const json::exception& e) {
        throw CorruptFile("config.json is malformed: " + std::string(e.what()));
    }
}

TrainState load_latest_checkpoint(const fs::path& run_dir) {
    const fs::path path = run_dir / "checkpoints" / "latest.json";
    if (!fs::exists(path)) throw Error("no checkpoint in " + run_dir.string());
    return load_checkpoint(path);
}

RunSummary train_run(const TrainConfig& config, WorkerPool& pool, const RunOptions& options) {
    config.validate();
    const fs::path& dir = options.out_dir;
    if (dir.empty()) throw ConfigError("an output directory is required");
    if (fs::exists(dir / "log.jsonl")) {
        throw ConfigError(dir.string() + " already holds a run; use --resume to continue it");
    }
    fs::create_directories(dir / "checkpoints");
    write_file_atomic(dir / "config.json", to_json(config).dump(2) + "\n");
    for (const char* name : {"log.jsonl", "partitions.jsonl"}) std::ofstream(dir / name, std::ios::trunc);
    TrainState state = make_initial_state(config);
    return drive(state, pool, options);
}

RunSummary resume_run(WorkerPool& pool, const RunOptions& options) {
    const fs::path& dir = options.out_dir;
    const TrainConfig config = load_run_config(dir);
    TrainState state = load_latest_checkpoint(dir);
    if (to_json(state.config) != to_json(config)) {
        throw CorruptFile("checkpoint configuration does not match " + (dir / "config.json").string());
    }
    truncate_jsonl(dir / "log.jsonl", state.iteration);
    truncate_jsonl(dir / "partitions.jsonl", state.iteration);
    truncate_csv(dir / "curve.csv", state.iteration);
    truncate_csv(dir / "timing.csv", state.iteration);
    return drive(state, pool, options);
}

std::vector<std::string> manifest_gaps(const fs::path& run_dir) {
    std::vector<std::string> gaps;
    for (const char* name : {"config.json", "log.jsonl", "curve.csv", "policy.json"}) {
        if (!fs::exists(run_dir / name)) gaps.emplace_back(name);
    }
    bool any_checkpoint = false;
    if (fs::exists(run_dir / "checkpoints")) {
        for (const auto& e : fs::directory_iterator(run_dir / "checkpoints")) {
            if (e.path().filename().string().rfind("ckpt-", 0) == 0) any_checkpoint = true;
        }
    }
    if (!any_checkpoint) gaps.emplace_back("checkpoints/ckpt-*.json");
    return gaps;
}

void check_manifest(const fs::path& run_dir) {
    const auto gaps = manifest_gaps(run_dir);
    if (gaps.empty()) return;
    std::string list;
    for (const auto& g : gaps) list += (list.empty() ? "" : ", ") + g;
    throw Error("run directory " + run_dir.string() + " is incomplete; missing: " + list);
}

IterationRecord record_from_json(const json& j) {
    IterationRecord r;
    r.iteration = j.at("iteration").get<std::uint64_t>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.max_reward = j.at("max_reward").get<double>();
    r.controller_entropy = j.at("controller_entropy").get<double>();
    r.pivot = j.at("pivot").get<double>();
    r.weight_params = j.at("weight_params").get<std::size_t>();
    r.eta = j.at("eta").get<double>();
    r.beta = j.at("beta").get<double>();
    r.color_histogram = j.at("color_histogram").get<std::vector<std::uint64_t>>();
    return r;
}

std::vector<IterationRecord> read_log(const fs::path& run_dir) {
    std::vector<IterationRecord> out;
    const fs::path path = run_dir / "log.jsonl";
    if (!fs::exists(path)) throw Error("no log.jsonl in " + run_dir.string());
    for (const auto& line : read_lines(path)) {
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw CorruptFile("log.jsonl: " + std::string(e.what()));
        }
    }
    return out;
}

}  // namespace chromatic::orchestrator
