#pragma once

// Portable policy files:
//   {"format":"chromatic-policy","schema_version":1,"kind","layer_dims",
//    "num_partitions","mask_alpha","assignment","params","normalizer","env"}

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chromatic/es.hpp"
#include "chromatic/orchestrator/config.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::orchestrator {

struct TrainState;

inline constexpr int kPolicySchemaVersion = 1;

struct PolicyFile {
    topology::PolicyModel model;
    std::vector<double> params;
    std::vector<std::uint32_t> assignment;
    es::Normalizer normalizer;
    std::string env;
};

json policy_to_json(const PolicyFile& policy);
PolicyFile policy_from_json(const json& j);
void save_policy(const PolicyFile& policy, const std::filesystem::path& path);
PolicyFile load_policy(const std::filesystem::path& path);

/// Current parameters with the best-ranked partitioning of the population.
PolicyFile policy_from_state(const TrainState& state);

struct EvalSummary {
    std::vector<std::uint64_t> seeds;
    std::vector<double> rewards;
    double mean = 0.0;
    double max = 0.0;
};

/// One episode per seed with the stored normalizer frozen. Throws
/// DimensionError if the policy does not fit the environment.
EvalSummary evaluate_policy(const PolicyFile& policy, const std::string& env, std::span<const std::uint64_t> seeds,
                            int horizon = 0);

json eval_summary_to_json(const EvalSummary& summary);

}  // namespace chromatic::orchestrator
