#include "chromatic/orchestrator/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "chromatic/envs.hpp"

namespace chromatic::orchestrator {

std::string_view to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::enas: return "enas";
        case Mode::random_controller: return "random-controller";
        case Mode::fixed_random_population: return "fixed-random-population";
        case Mode::fixed_partition: return "fixed-partition";
    }
    return "?";
}

Mode parse_mode(std::string_view name) {
    for (Mode m : {Mode::enas, Mode::random_controller, Mode::fixed_random_population, Mode::fixed_partition}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown mode '" + std::string(name) +
                      "' (expected enas, random-controller, fixed-random-population or fixed-partition)");
}

void TrainConfig::validate() const {
    const auto t = topology();  // checks env and arch
    if (partitions < 1) throw ConfigError("partitions must be >= 1");
    if (population < 1) throw ConfigError("population must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (rollouts_per_partition < 1) throw ConfigError("rollouts per partition must be >= 1");
    if (controller_period < 1) throw ConfigError("controller period must be >= 1");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (horizon < 0) throw ConfigError("horizon must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint interval must be >= 1");
    if (!(task_timeout_s > 0.0)) throw ConfigError("task timeout must be positive");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw ConfigError("init scale must be >= 0");
    if (!(survivor_fraction >= 0.0 && survivor_fraction < 1.0)) {
        throw ConfigError("survivor fraction must lie in [0, 1)");
    }
    if (!(mask_alpha > 0.0)) throw ConfigError("mask alpha must be positive");
    if (!(beta_floor >= 0.0 && beta_floor <= 1.0)) throw ConfigError("beta floor must lie in [0, 1]");
    es.validate();
    controller.validate();
    if (policy == topology::PolicyKind::chromatic && mode == Mode::fixed_partition) {
        if (fixed_assignment.empty()) throw ConfigError("fixed-partition mode needs an assignment");
        topology::Partitioning p{partitions, fixed_assignment};
        try {
            p.validate(t);
        } catch (const Error& e) {
            throw ConfigError(std::string("fixed assignment: ") + e.what());
        }
    }
}

topology::NetworkTopology TrainConfig::topology() const {
    envs::EnvSpec spec;
    try {
        spec = envs::env_spec(env);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    try {
        return topology::NetworkTopology::from_arch(arch, spec.obs_dim, spec.act_dim);
    } catch (const Error& e) {
        throw ConfigError(std::string("architecture '") + arch + "': " + e.what());
    }
}

topology::PolicyModel TrainConfig::model() const {
    const std::uint32_t m = policy == topology::PolicyKind::chromatic ? partitions : 1;
    return topology::PolicyModel(policy, topology(), m, mask_alpha);
}

double TrainConfig::beta_at(std::size_t iteration) const {
    const double half = static_cast<double>(iterations) / 2.0;
    if (half <= 0.0) return beta_floor;
    const double frac = std::min(1.0, static_cast<double>(iteration) / half);
    return 1.0 - (1.0 - beta_floor) * frac;
}

json to_json(const TrainConfig& c) {
    json j;
    j["env"] = c.env;
    j["arch"] = c.arch;
    j["policy"] = std::string(topology::to_string(c.policy));
    j["partitions"] = c.partitions;
    j["population"] = c.population;
    j["workers"] = c.workers;
    j["rollouts_per_partition"] = c.rollouts_per_partition;
    j["controller_period"] = c.controller_period;
    j["mode"] = std::string(to_string(c.mode));
    j["iterations"] = c.iterations;
    j["seed"] = c.seed;
    j["horizon"] = c.horizon;
    j["es"] = {{"sigma", c.es.sigma}, {"step_size", c.es.step_size}, {"perturb_biases", c.es.perturb_biases}};
    j["normalize_observations"] = c.normalize_observations;
    j["normalize_rewards"] = c.normalize_rewards;
    j["init_scale"] = c.init_scale;
    const auto& k = c.controller;
    j["controller"] = {{"hidden_size", k.hidden_size},
                       {"embed_dim", k.embed_dim},
                       {"learning_rate", k.learning_rate},
                       {"entropy_weight", k.entropy_weight},
                       {"critic_decay", k.critic_decay},
                       {"temperature", k.temperature},
                       {"init_range", k.init_range},
                       {"optimizer", controller::to_string(k.optimizer)},
                       {"adam_beta1", k.adam_beta1},
                       {"adam_beta2", k.adam_beta2},
                       {"adam_epsilon", k.adam_epsilon},
                       {"baseline_warm_start", k.baseline_warm_start}};
    j["survivor_fraction"] = c.survivor_fraction;
    j["mask_alpha"] = c.mask_alpha;
    j["beta_floor"] = c.beta_floor;
    j["fixed_assignment"] = c.fixed_assignment;
    j["checkpoint_every"] = c.checkpoint_every;
    j["task_timeout_s"] = c.task_timeout_s;
    return j;
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const json& reference, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!reference.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    }
}

}  // namespace

TrainConfig config_from_json(const json& j, TrainConfig c) {
    const json reference = to_json(TrainConfig{});
    reject_unknown(j, reference, "");
    read(j, "env", c.env);
    read(j, "arch", c.arch);
    if (j.contains("policy")) c.policy = topology::parse_policy_kind(j.at("policy").get<std::string>());
    read(j, "partitions", c.partitions);
    read(j, "population", c.population);
    read(j, "workers", c.workers);
    read(j, "rollouts_per_partition", c.rollouts_per_partition);
    read(j, "controller_period", c.controller_period);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    read(j, "iterations", c.iterations);
    read(j, "seed", c.seed);
    read(j, "horizon", c.horizon);
    if (j.contains("es")) {
        const json& e = j.at("es");
        reject_unknown(e, reference.at("es"), "es.");
        read(e, "sigma", c.es.sigma);
        read(e, "step_size", c.es.step_size);
        read(e, "perturb_biases", c.es.perturb_biases);
    }
    read(j, "normalize_observations", c.normalize_observations);
    read(j, "normalize_rewards", c.normalize_rewards);
    read(j, "init_scale", c.init_scale);
    if (j.contains("controller")) {
        const json& k = j.at("controller");
        reject_unknown(k, reference.at("controller"), "controller.");
        read(k, "hidden_size", c.controller.hidden_size);
        read(k, "embed_dim", c.controller.embed_dim);
        read(k, "learning_rate", c.controller.learning_rate);
        read(k, "entropy_weight", c.controller.entropy_weight);
        read(k, "critic_decay", c.controller.critic_decay);
        read(k, "temperature", c.controller.temperature);
        read(k, "init_range", c.controller.init_range);
        if (k.contains("optimizer")) c.controller.optimizer = controller::parse_optimizer(k.at("optimizer").get<std::string>());
        read(k, "adam_beta1", c.controller.adam_beta1);
        read(k, "adam_beta2", c.controller.adam_beta2);
        read(k, "adam_epsilon", c.controller.adam_epsilon);
        read(k, "baseline_warm_start", c.controller.baseline_warm_start);
    }
    read(j, "survivor_fraction", c.survivor_fraction);
    read(j, "mask_alpha", c.mask_alpha);
    read(j, "beta_floor", c.beta_floor);
    read(j, "fixed_assignment", c.fixed_assignment);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "task_timeout_s", c.task_timeout_s);
    return c;
}

}  // namespace chromatic::orchestrator
