#include "chromatic/orchestrator/checkpoint.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "chromatic/orchestrator/protocol.hpp"

namespace chromatic::orchestrator {

namespace {

constexpr const char* kFormat = "chromatic-checkpoint";

json partitioning_to_json(const topology::Partitioning& p) {
    return json{{"num_partitions", p.num_partitions}, {"assignment", p.assignment}};
}

topology::Partitioning partitioning_from_json(const json& j) {
    return {j.at("num_partitions").get<std::uint32_t>(), j.at("assignment").get<std::vector<std::uint32_t>>()};
}

json controller_to_json(const controller::ControllerState& c) {
    json j;
    j["hidden_size"] = c.layout.hidden;
    j["embed_dim"] = c.layout.embed;
    j["edges"] = c.layout.edges;
    j["colors"] = c.layout.colors;
    j["baseline"] = c.baseline;
    j["adam_step"] = c.adam_step;
    j["updates"] = c.updates;
    j["params"] = c.params;
    j["adam_m"] = c.adam_m;
    j["adam_v"] = c.adam_v;
    return j;
}

controller::ControllerState controller_from_json(const json& j, const controller::ControllerConfig& config) {
    controller::ControllerState c;
    c.config = config;
    c.layout = controller::ControllerLayout(j.at("hidden_size").get<std::size_t>(), j.at("embed_dim").get<std::size_t>(),
                                            j.at("edges").get<std::size_t>(), j.at("colors").get<std::size_t>());
    c.baseline = j.at("baseline").get<double>();
    c.adam_step = j.at("adam_step").get<std::uint64_t>();
    c.updates = j.at("updates").get<std::uint64_t>();
    c.params = j.at("params").get<std::vector<double>>();
    c.adam_m = j.at("adam_m").get<std::vector<double>>();
    c.adam_v = j.at("adam_v").get<std::vector<double>>();
    c.validate();
    return c;
}

json score_to_json(const PartitionScore& s) {
    json j;
    j["id"] = s.id;
    j["max_reward"] = s.max_reward ? json(*s.max_reward) : json(nullptr);
    j["rollouts"] = s.rollouts;
    j["born_iteration"] = s.born_iteration;
    j["entropy"] = s.entropy;
    j["partitioning"] = partitioning_to_json(s.partitioning);
    return j;
}

PartitionScore score_from_json(const json& j) {
    PartitionScore s;
    s.id = j.at("id").get<std::uint64_t>();
    if (!j.at("max_reward").is_null()) s.max_reward = j.at("max_reward").get<double>();
    s.rollouts = j.at("rollouts").get<std::uint64_t>();
    s.born_iteration = j.at("born_iteration").get<std::uint64_t>();
    s.entropy = j.at("entropy").get<double>();
    s.partitioning = partitioning_from_json(j.at("partitioning"));
    return s;
}

}  // namespace

json checkpoint_to_json(const TrainState& s) {
    json j;
    j["format"] = kFormat;
    j["schema_version"] = kCheckpointSchemaVersion;
    j["iteration"] = s.iteration;
    j["weights_version"] = s.weights_version;
    j["next_partition_id"] = s.next_partition_id;
    // Every random stream is derive_seed(seed, purpose, iteration, slot), so
    // the base seed plus the iteration counter is the whole generator state.
    j["rng"] = {{"scheme", "splitmix64-derived mt19937_64"}, {"seed", s.config.seed}};
    j["config"] = to_json(s.config);
    j["params"] = s.params;
    j["normalizer"] = normalizer_to_json(s.normalizer);
    j["controller"] = s.controller ? controller_to_json(*s.controller) : json(nullptr);
    j["fixed_partitioning"] = s.fixed_partitioning ? partitioning_to_json(*s.fixed_partitioning) : json(nullptr);
    json population = json::array();
    for (const auto& member : s.population) population.push_back(score_to_json(member));
    j["population"] = std::move(population);
    return j;
}

TrainState checkpoint_from_json(const json& j) {
    if (!j.is_object() || j.value("format", std::string()) != kFormat) {
        throw CorruptFile("not a chromatic checkpoint");
    }
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer()) {
        throw CorruptFile("checkpoint has no schema version");
    }
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
        throw VersionMismatch("checkpoint schema version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointSchemaVersion) + ")");
    }
    try {
        TrainState s(config_from_json(j.at("config")));
        s.iteration = j.at("iteration").get<std::uint64_t>();
        s.weights_version = j.at("weights_version").get<std::uint64_t>();
        s.next_partition_id = j.at("next_partition_id").get<std::uint64_t>();
        if (j.at("rng").at("seed").get<std::uint64_t>() != s.config.seed) throw CorruptFile("rng seed disagrees with config");
        s.params = j.at("params").get<std::vector<double>>();
        if (s.params.size() != s.model.param_count()) throw CorruptFile("parameter vector has the wrong length");
        require_finite(s.params, "checkpoint parameters");
        s.normalizer = normalizer_from_json(j.at("normalizer"));
        if (!j.at("controller").is_null()) s.controller = controller_from_json(j.at("controller"), s.config.controller);
        if (!j.at("fixed_partitioning").is_null()) s.fixed_partitioning = partitioning_from_json(j.at("fixed_partitioning"));
        for (const auto& m : j.at("population")) s.population.push_back(score_from_json(m));
        if (s.population.empty()) throw CorruptFile("checkpoint population is empty");
        if (s.is_chromatic()) {
            for (const auto& m : s.population) m.partitioning.validate(s.model.topology());
        }
        return s;
    } catch (const CorruptFile&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptFile(std::string("checkpoint is inconsistent: ") + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    write_file_atomic(path, checkpoint_to_json(state).dump() + "\n");
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    json j;
    try {
        j = json::parse(buffer.str());
    } catch (const json::exception& e) {
        throw CorruptFile("checkpoint " + path.string() + " is truncated or malformed: " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace chromatic::orchestrator
