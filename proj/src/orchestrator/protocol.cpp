#include "chromatic/orchestrator/protocol.hpp"

#include <string>

#ifndef CHROMATIC_BUILD_ID
#define CHROMATIC_BUILD_ID "chromatic-dev"
#endif

namespace chromatic::orchestrator {

std::string build_id() { return CHROMATIC_BUILD_ID; }

namespace {

template <class T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("message field '") + key + "': " + e.what());
    }
}

}  // namespace

json task_to_json(const Task& t) {
    json j;
    j["type"] = "task";
    j["task_id"] = t.task_id;
    j["kind"] = std::string(to_string(t.kind));
    j["weights_version"] = t.weights_version;
    j["perturb_seed"] = t.perturb_seed;
    j["assignment"] = t.assignment;
    j["env"] = t.env;
    j["env_seed"] = t.env_seed;
    j["horizon"] = t.horizon;
    return j;
}

Task task_from_json(const json& j) {
    Task t;
    t.task_id = field<std::uint64_t>(j, "task_id");
    t.kind = parse_task_kind(field<std::string>(j, "kind"));
    t.weights_version = field<std::uint64_t>(j, "weights_version");
    t.perturb_seed = field<std::uint64_t>(j, "perturb_seed");
    t.assignment = field<std::vector<std::uint32_t>>(j, "assignment");
    t.env = field<std::string>(j, "env");
    t.env_seed = field<std::uint64_t>(j, "env_seed");
    t.horizon = field<int>(j, "horizon");
    return t;
}

json normalizer_to_json(const es::Normalizer& n) {
    json j;
    j["dim"] = n.dim();
    j["count"] = n.count();
    j["mean"] = std::vector<double>(n.mean().begin(), n.mean().end());
    j["m2"] = std::vector<double>(n.m2().begin(), n.m2().end());
    return j;
}

es::Normalizer normalizer_from_json(const json& j) {
    const auto dim = field<std::size_t>(j, "dim");
    const auto count = field<std::uint64_t>(j, "count");
    auto mean = field<std::vector<double>>(j, "mean");
    auto m2 = field<std::vector<double>>(j, "m2");
    if (mean.size() != dim || m2.size() != dim) throw ProtocolError("normalizer arrays do not match its dim");
    if (dim == 0) return {};
    return es::Normalizer::from_state(count, std::move(mean), std::move(m2));
}

json result_to_json(const TaskResult& r) {
    json j;
    j["type"] = "result";
    j["task_id"] = r.task_id;
    j["reward"] = r.reward;
    j["steps"] = r.steps;
    j["terminated_early"] = r.terminated_early;
    j["obs_stats"] = normalizer_to_json(r.obs_stats);
    return j;
}

TaskResult result_from_json(const json& j) {
    TaskResult r;
    r.task_id = field<std::uint64_t>(j, "task_id");
    r.reward = field<double>(j, "reward");
    r.steps = field<int>(j, "steps");
    if (j.contains("terminated_early")) r.terminated_early = field<bool>(j, "terminated_early");
    if (j.contains("obs_stats")) r.obs_stats = normalizer_from_json(j.at("obs_stats"));
    return r;
}

json context_to_json(const EvalContext& c) {
    json j;
    j["type"] = "context";
    j["weights_version"] = c.weights_version;
    j["kind"] = std::string(topology::to_string(c.model.kind()));
    j["layer_dims"] = c.model.topology().layer_dims;
    j["num_partitions"] = c.model.num_partitions();
    j["mask_alpha"] = c.model.mask_alpha();
    j["sigma"] = c.sigma;
    j["perturb_dim"] = c.perturb_dim;
    j["params"] = c.params;
    j["normalizer"] = normalizer_to_json(c.normalizer);
    return j;
}

EvalContext context_from_json(const json& j) {
    try {
        topology::NetworkTopology topo{field<std::vector<std::size_t>>(j, "layer_dims")};
        topology::PolicyModel model(topology::parse_policy_kind(field<std::string>(j, "kind")), topo,
                                    field<std::uint32_t>(j, "num_partitions"), field<double>(j, "mask_alpha"));
        EvalContext c{model,
                      field<std::vector<double>>(j, "params"),
                      normalizer_from_json(j.at("normalizer")),
                      field<double>(j, "sigma"),
                      field<std::size_t>(j, "perturb_dim"),
                      field<std::uint64_t>(j, "weights_version")};
        if (c.params.size() != c.model.param_count()) throw ProtocolError("context parameter vector has the wrong length");
        return c;
    } catch (const ProtocolError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("invalid context: ") + e.what());
    }
}

std::string encode_line(const json& j) { return j.dump(); }

json decode_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw ProtocolError("message without a type");
    }
    return j;
}

}  // namespace chromatic::orchestrator
