#pragma once

// Alternating optimization. Each iteration evaluates t = population *
// rollouts_per_partition (pivot, perturbed) task pairs, slot i using
// partitioning i mod |population|, and takes one ES step on the shared
// parameters. Every controller_period iterations the population is refreshed
// according to the mode.
//
// Seeds are pure functions of (config seed, purpose, iteration, slot), so a
// run is reproducible regardless of pool type, worker count or resumption.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "chromatic/controller.hpp"
#include "chromatic/es.hpp"
#include "chromatic/orchestrator/config.hpp"
#include "chromatic/orchestrator/pool.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::orchestrator {

// Purpose tags for derive_seed.
enum SeedTag : std::uint64_t {
    kTagParams = 1,
    kTagController = 2,
    kTagSample = 3,
    kTagEnv = 4,
    kTagPerturb = 5,
};

struct PartitionScore {
    std::uint64_t id = 0;  // sample order; smaller is earlier
    topology::Partitioning partitioning;
    std::optional<double> max_reward;  // R^max, empty until first rollout
    std::uint64_t rollouts = 0;
    std::uint64_t born_iteration = 0;
    double entropy = 0.0;  // controller sampling entropy (nats), 0 for other samplers

    void observe(double reward);

    friend bool operator==(const PartitionScore&, const PartitionScore&) = default;
};

struct DrawnPartitions {
    std::vector<topology::Partitioning> partitionings;
    std::vector<double> entropies;
};

/// Where a mode's partitionings come from.
class PartitionSource {
public:
    virtual ~PartitionSource() = default;
    virtual DrawnPartitions draw(std::size_t count, std::uint64_t seed) const = 0;
    /// False if the population is drawn once and kept.
    virtual bool resamples() const noexcept = 0;
};

/// `controller` must outlive the source in enas mode; `fixed` is required in
/// fixed-partition mode. Non-chromatic models use a single empty assignment.
std::unique_ptr<PartitionSource> sampler_for_mode(Mode mode, const TrainConfig& config,
                                                  const controller::ControllerState* controller,
                                                  const topology::Partitioning* fixed);

struct PhaseEvent {
    std::uint64_t iteration = 0;  // iteration that closed the phase
    PartitionScore best;
};

struct IterationRecord {
    std::uint64_t iteration = 0;
    double mean_reward = 0.0;  // over all 2t rollouts
    double max_reward = 0.0;
    double controller_entropy = 0.0;  // mean sampling entropy of the population (nats)
    double pivot = 0.0;
    std::vector<std::uint64_t> color_histogram;
    std::size_t weight_params = 0;
    double eta = 1.0;   // active mask fraction (masked models)
    double beta = 1.0;  // masked objective coefficient
    double wall_ms = 0.0;  // excluded from the JSON log
    std::optional<PhaseEvent> phase;

    friend bool operator==(const IterationRecord& a, const IterationRecord& b);
};

json record_to_json(const IterationRecord& record);

struct TrainState {
    TrainConfig config;
    topology::PolicyModel model;
    std::vector<double> params;
    es::Normalizer normalizer;
    std::optional<controller::ControllerState> controller;
    std::optional<topology::Partitioning> fixed_partitioning;
    std::vector<PartitionScore> population;
    std::uint64_t next_partition_id = 0;
    std::uint64_t iteration = 0;  // next iteration to run
    std::uint64_t weights_version = 0;

    explicit TrainState(TrainConfig cfg);
    bool is_chromatic() const noexcept { return model.kind() == topology::PolicyKind::chromatic; }
};

/// Fresh state: seeded parameters and controller, initial population drawn.
TrainState make_initial_state(const TrainConfig& config);

std::vector<Task> make_tasks(const TrainState& state);
EvalContext make_context(const TrainState& state);

IterationRecord run_iteration(TrainState& state, WorkerPool& pool);

/// Mean of values; exact when all values are equal.
double exact_mean(std::span<const double> values);

/// Population indices ordered by R^max descending, ties by earlier sample;
/// unscored partitions last.
std::vector<std::size_t> rank_population(std::span<const PartitionScore> population);

/// The k best partitionings. If k exceeds the population, all are returned
/// and a warning goes to `warn`.
std::vector<topology::Partitioning> transfer_top_k(std::span<const PartitionScore> population, std::size_t k,
                                                   std::ostream* warn = nullptr);

}  // namespace chromatic::orchestrator
