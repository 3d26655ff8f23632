#include "chromatic/orchestrator/policy_io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "chromatic/envs.hpp"
#include "chromatic/orchestrator/checkpoint.hpp"
#include "chromatic/orchestrator/protocol.hpp"
#include "chromatic/orchestrator/trainer.hpp"

namespace chromatic::orchestrator {

json policy_to_json(const PolicyFile& p) {
    json j;
    j["format"] = "chromatic-policy";
    j["schema_version"] = kPolicySchemaVersion;
    j["kind"] = std::string(topology::to_string(p.model.kind()));
    j["layer_dims"] = p.model.topology().layer_dims;
    j["num_partitions"] = p.model.num_partitions();
    j["mask_alpha"] = p.model.mask_alpha();
    j["env"] = p.env;
    j["assignment"] = p.assignment;
    j["params"] = p.params;
    j["normalizer"] = normalizer_to_json(p.normalizer);
    return j;
}

PolicyFile policy_from_json(const json& j) {
    if (!j.is_object() || j.value("format", std::string()) != "chromatic-policy") throw CorruptFile("not a policy file");
    const int version = j.value("schema_version", -1);
    if (version != kPolicySchemaVersion) {
        throw VersionMismatch("policy schema version " + std::to_string(version) + " is not supported");
    }
    try {
        topology::NetworkTopology topo{j.at("layer_dims").get<std::vector<std::size_t>>()};
        topology::PolicyModel model(topology::parse_policy_kind(j.at("kind").get<std::string>()), topo,
                                    j.at("num_partitions").get<std::uint32_t>(), j.at("mask_alpha").get<double>());
        PolicyFile p{model, j.at("params").get<std::vector<double>>(),
                     j.at("assignment").get<std::vector<std::uint32_t>>(), normalizer_from_json(j.at("normalizer")),
                     j.at("env").get<std::string>()};
        if (p.params.size() != p.model.param_count()) throw CorruptFile("policy parameter vector has the wrong length");
        if (p.model.kind() == topology::PolicyKind::chromatic) {
            topology::Partitioning{p.model.num_partitions(), p.assignment}.validate(topo);
        }
        return p;
    } catch (const CorruptFile&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptFile(std::string("policy file is inconsistent: ") + e.what());
    }
}

void save_policy(const PolicyFile& policy, const std::filesystem::path& path) {
    write_file_atomic(path, policy_to_json(policy).dump(1) + "\n");
}

PolicyFile load_policy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open policy " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return policy_from_json(json::parse(buffer.str()));
    } catch (const json::exception& e) {
        throw CorruptFile("policy " + path.string() + " is malformed: " + e.what());
    }
}

PolicyFile policy_from_state(const TrainState& state) {
    const auto order = rank_population(state.population);
    std::vector<std::uint32_t> assignment;
    if (state.is_chromatic()) assignment = state.population[order.front()].partitioning.assignment;
    return PolicyFile{state.model, state.params, std::move(assignment), state.normalizer, state.config.env};
}

EvalSummary evaluate_policy(const PolicyFile& policy, const std::string& env, std::span<const std::uint64_t> seeds,
                            int horizon) {
    if (seeds.empty()) throw ValueError("evaluation needs at least one seed");
    const envs::EnvSpec spec = envs::env_spec(env);
    const auto& topo = policy.model.topology();
    if (topo.input_dim() != spec.obs_dim || topo.output_dim() != spec.act_dim) {
        throw DimensionError("policy maps " + std::to_string(topo.input_dim()) + " -> " +
                             std::to_string(topo.output_dim()) + " but env '" + env + "' has obs dim " +
                             std::to_string(spec.obs_dim) + " and action dim " + std::to_string(spec.act_dim));
    }
    const topology::RealizedPolicy realized = policy.model.realize(policy.params, policy.assignment);
    const envs::PolicyFn fn = [&](std::span<const double> obs) { return topology::policy_forward(topo, realized, obs); };
    envs::RolloutOptions options;
    if (policy.normalizer.dim() == spec.obs_dim) options.normalizer = &policy.normalizer;
    EvalSummary summary;
    summary.seeds.assign(seeds.begin(), seeds.end());
    for (std::uint64_t seed : seeds) {
        summary.rewards.push_back(envs::rollout(fn, env, seed, options, horizon).total_reward);
    }
    // Sum in sorted order so the mean does not depend on the order seeds were given in.
    std::vector<double> sorted = summary.rewards;
    std::sort(sorted.begin(), sorted.end());
    summary.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    summary.max = sorted.back();
    return summary;
}

json eval_summary_to_json(const EvalSummary& s) {
    json j;
    j["episodes"] = s.seeds.size();
    j["mean_reward"] = s.mean;
    j["max_reward"] = s.max;
    j["seeds"] = s.seeds;
    j["rewards"] = s.rewards;
    return j;
}

}  // namespace chromatic::orchestrator
