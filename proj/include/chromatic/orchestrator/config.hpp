#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chromatic/controller.hpp"
#include "chromatic/es.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::orchestrator {

using json = nlohmann::ordered_json;

enum class Mode { enas, random_controller, fixed_random_population, fixed_partition };

std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view name);

struct TrainConfig {
    std::string env = "point-reacher";
    std::string arch = "L";
    topology::PolicyKind policy = topology::PolicyKind::chromatic;
    std::uint32_t partitions = 8;
    /// Perturbation pairs per iteration and, in sampled modes, the number
    /// of partitionings in the population.
    std::size_t population = 301;
    /// Evaluation threads of the in-process pool.
    std::size_t workers = 1;
    std::size_t rollouts_per_partition = 1;
    std::size_t controller_period = 10;
    Mode mode = Mode::enas;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    int horizon = 0;  // 0: environment default

    es::EsConfig es;
    bool normalize_observations = true;
    bool normalize_rewards = true;
    double init_scale = 0.1;

    controller::ControllerConfig controller;
    double survivor_fraction = 0.1;

    double mask_alpha = 0.01;
    double beta_floor = 0.9;

    std::vector<std::uint32_t> fixed_assignment;  // fixed-partition mode

    std::size_t checkpoint_every = 50;
    double task_timeout_s = 60.0;

    /// Checks ranges and environment/architecture consistency.
    void validate() const;

    topology::NetworkTopology topology() const;
    topology::PolicyModel model() const;
    /// Number of (pivot, perturbed) task pairs per iteration.
    std::size_t perturbations_per_iteration() const noexcept { return population * rollouts_per_partition; }
    /// Masked-policy combination coefficient at `iteration`: linear from 1 to
    /// beta_floor over the first half of training, constant afterwards.
    double beta_at(std::size_t iteration) const;
};

json to_json(const TrainConfig& config);
/// Keys not listed in to_json() are rejected; missing keys keep defaults.
TrainConfig config_from_json(const json& j, TrainConfig base = {});

}  // namespace chromatic::orchestrator
