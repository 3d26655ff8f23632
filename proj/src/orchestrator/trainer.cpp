#include "chromatic/orchestrator/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace chromatic::orchestrator {

void PartitionScore::observe(double reward) {
    ++rollouts;
    if (!max_reward || reward > *max_reward) max_reward = reward;
}

bool operator==(const IterationRecord& a, const IterationRecord& b) {
    // wall_ms is a measurement, not part of the run's trajectory.
    return a.iteration == b.iteration && a.mean_reward == b.mean_reward && a.max_reward == b.max_reward &&
           a.controller_entropy == b.controller_entropy && a.pivot == b.pivot &&
           a.color_histogram == b.color_histogram && a.weight_params == b.weight_params && a.eta == b.eta &&
           a.beta == b.beta && a.phase.has_value() == b.phase.has_value() &&
           (!a.phase || (a.phase->iteration == b.phase->iteration && a.phase->best == b.phase->best));
}

json record_to_json(const IterationRecord& r) {
    json j;
    j["iteration"] = r.iteration;
    j["mean_reward"] = r.mean_reward;
    j["max_reward"] = r.max_reward;
    j["controller_entropy"] = r.controller_entropy;
    j["pivot"] = r.pivot;
    j["weight_params"] = r.weight_params;
    j["eta"] = r.eta;
    j["beta"] = r.beta;
    j["color_histogram"] = r.color_histogram;
    j["controller_phase"] = r.phase.has_value();
    return j;
}

// ---------------------------------------------------------------------------

namespace {

class ControllerSource final : public PartitionSource {
public:
    explicit ControllerSource(const controller::ControllerState& state) : state_(state) {}
    DrawnPartitions draw(std::size_t count, std::uint64_t seed) const override {
        auto batch = controller::sample_partitionings(state_, count, seed);
        return {std::move(batch.partitionings), std::move(batch.entropies)};
    }
    bool resamples() const noexcept override { return true; }

private:
    const controller::ControllerState& state_;
};

class UniformSource final : public PartitionSource {
public:
    UniformSource(topology::NetworkTopology topology, std::uint32_t m, bool resample)
        : topology_(std::move(topology)), m_(m), resample_(resample) {}
    DrawnPartitions draw(std::size_t count, std::uint64_t seed) const override {
        DrawnPartitions out;
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng(derive_seed(seed, {i}));
            out.partitionings.push_back(topology::uniform_random_partitioning(topology_, m_, rng));
            out.entropies.push_back(0.0);
        }
        return out;
    }
    bool resamples() const noexcept override { return resample_; }

private:
    topology::NetworkTopology topology_;
    std::uint32_t m_;
    bool resample_;
};

/// A single partitioning regardless of the requested count.
class FixedSource final : public PartitionSource {
public:
    explicit FixedSource(topology::Partitioning p) : p_(std::move(p)) {}
    DrawnPartitions draw(std::size_t, std::uint64_t) const override { return {{p_}, {0.0}}; }
    bool resamples() const noexcept override { return false; }

private:
    topology::Partitioning p_;
};

void refresh_population(TrainState& s, bool initial) {
    const TrainConfig& cfg = s.config;
    const auto source = sampler_for_mode(cfg.mode, cfg, s.controller ? &*s.controller : nullptr,
                                         s.fixed_partitioning ? &*s.fixed_partitioning : nullptr);
    if (!initial && !source->resamples()) return;
    std::vector<PartitionScore> next;
    if (!initial) {
        const std::size_t keep = static_cast<std::size_t>(std::floor(cfg.survivor_fraction * cfg.population));
        const auto order = rank_population(s.population);
        for (std::size_t k = 0; k < std::min(keep, order.size()); ++k) {
            if (s.population[order[k]].max_reward) next.push_back(s.population[order[k]]);
        }
    }
    const std::size_t want = cfg.population - next.size();
    DrawnPartitions drawn = source->draw(want, derive_seed(cfg.seed, {kTagSample, s.iteration}));
    for (std::size_t i = 0; i < drawn.partitionings.size(); ++i) {
        PartitionScore score;
        score.id = s.next_partition_id++;
        score.partitioning = std::move(drawn.partitionings[i]);
        score.born_iteration = s.iteration;
        score.entropy = drawn.entropies[i];
        next.push_back(std::move(score));
    }
    s.population = std::move(next);
}

std::size_t perturb_dim(const TrainState& s) {
    return s.config.es.perturb_biases ? s.model.param_count() : s.model.structural_param_count();
}

}  // namespace

std::unique_ptr<PartitionSource> sampler_for_mode(Mode mode, const TrainConfig& config,
                                                  const controller::ControllerState* controller,
                                                  const topology::Partitioning* fixed) {
    if (config.policy != topology::PolicyKind::chromatic) {
        return std::make_unique<FixedSource>(topology::Partitioning{1, {}});
    }
    switch (mode) {
        case Mode::enas:
            if (controller == nullptr) throw ConfigError("enas mode needs a controller");
            return std::make_unique<ControllerSource>(*controller);
        case Mode::random_controller:
            return std::make_unique<UniformSource>(config.topology(), config.partitions, true);
        case Mode::fixed_random_population:
            return std::make_unique<UniformSource>(config.topology(), config.partitions, false);
        case Mode::fixed_partition:
            if (fixed == nullptr) throw ConfigError("fixed-partition mode needs a partitioning");
            return std::make_unique<FixedSource>(*fixed);
    }
    throw ConfigError("unknown mode");
}

TrainState::TrainState(TrainConfig cfg) : config(std::move(cfg)), model(config.model()) {}

TrainState make_initial_state(const TrainConfig& config) {
    config.validate();
    TrainState s(config);
    s.params = s.model.initial_params(derive_seed(config.seed, {kTagParams}), config.init_scale);
    if (config.normalize_observations) s.normalizer = es::Normalizer(s.model.topology().input_dim());
    if (s.is_chromatic() && config.mode == Mode::enas) {
        s.controller = controller::make_controller(config.controller, s.model.topology().edge_count(),
                                                   config.partitions, derive_seed(config.seed, {kTagController}));
    }
    if (s.is_chromatic() && config.mode == Mode::fixed_partition) {
        s.fixed_partitioning = topology::Partitioning{config.partitions, config.fixed_assignment};
    }
    refresh_population(s, true);
    return s;
}

std::vector<Task> make_tasks(const TrainState& s) {
    const TrainConfig& cfg = s.config;
    const std::size_t t = cfg.perturbations_per_iteration();
    const std::size_t p = s.population.size();
    std::vector<Task> tasks;
    tasks.reserve(2 * t);
    for (std::size_t i = 0; i < t; ++i) {
        const auto& assignment = s.population[i % p].partitioning.assignment;
        Task pivot;
        pivot.kind = TaskKind::pivot;
        pivot.weights_version = s.weights_version;
        pivot.assignment = s.is_chromatic() ? assignment : std::vector<std::uint32_t>{};
        pivot.env = cfg.env;
        pivot.env_seed = derive_seed(cfg.seed, {kTagEnv, s.iteration, i});
        pivot.horizon = cfg.horizon;
        pivot.task_id = s.iteration * 2 * t + 2 * i;
        Task perturbed = pivot;
        perturbed.kind = TaskKind::perturbed;
        perturbed.perturb_seed = derive_seed(cfg.seed, {kTagPerturb, s.iteration, i});
        perturbed.task_id = pivot.task_id + 1;
        tasks.push_back(std::move(pivot));
        tasks.push_back(std::move(perturbed));
    }
    return tasks;
}

EvalContext make_context(const TrainState& s) {
    return EvalContext{s.model,
                       s.params,
                       s.config.normalize_observations ? s.normalizer : es::Normalizer{},
                       s.config.es.sigma,
                       perturb_dim(s),
                       s.weights_version};
}

double exact_mean(std::span<const double> values) {
    if (values.empty()) throw ValueError("mean of an empty set");
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return values.front();
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::vector<std::size_t> rank_population(std::span<const PartitionScore> population) {
    std::vector<std::size_t> order(population.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = population[a];
        const auto& y = population[b];
        if (x.max_reward.has_value() != y.max_reward.has_value()) return x.max_reward.has_value();
        if (x.max_reward && *x.max_reward != *y.max_reward) return *x.max_reward > *y.max_reward;
        return x.id < y.id;
    });
    return order;
}

std::vector<topology::Partitioning> transfer_top_k(std::span<const PartitionScore> population, std::size_t k,
                                                   std::ostream* warn) {
    if (k > population.size()) {
        if (warn != nullptr) {
            *warn << "warning: requested top " << k << " partitionings but the population holds "
                  << population.size() << "; returning all\n";
        }
        k = population.size();
    }
    const auto order = rank_population(population);
    std::vector<topology::Partitioning> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(population[order[i]].partitioning);
    return out;
}

IterationRecord run_iteration(TrainState& s, WorkerPool& pool) {
    const auto started = std::chrono::steady_clock::now();
    const TrainConfig& cfg = s.config;
    const bool masked = s.model.kind() == topology::PolicyKind::masked;

    IterationRecord record;
    record.iteration = s.iteration;
    record.weight_params = s.model.weight_param_count(s.params);
    record.beta = masked ? cfg.beta_at(s.iteration) : 1.0;
    record.eta = masked ? s.model.mask_eta(s.params) : 1.0;
    if (s.is_chromatic()) {
        record.color_histogram.assign(cfg.partitions, 0);
        for (const auto& member : s.population) {
            for (std::uint32_t c : member.partitioning.assignment) ++record.color_histogram[c];
        }
    }
    double entropy_sum = 0.0;
    for (const auto& member : s.population) entropy_sum += member.entropy;
    record.controller_entropy = entropy_sum / static_cast<double>(s.population.size());

    const std::vector<Task> tasks = make_tasks(s);
    const EvalContext context = make_context(s);
    const std::vector<TaskResult> results = pool.dispatch(context, tasks);
    if (results.size() != tasks.size()) throw WorkerFailure("pool returned the wrong number of results");
    for (std::size_t j = 0; j < tasks.size(); ++j) {
        if (results[j].task_id != tasks[j].task_id) throw WorkerFailure("pool returned results out of task order");
    }

    const std::size_t t = tasks.size() / 2;
    const std::size_t dim = context.perturb_dim;
    std::vector<double> raw(tasks.size());
    for (std::size_t j = 0; j < tasks.size(); ++j) raw[j] = results[j].reward;

    std::vector<std::vector<double>> directions(t);
    for (std::size_t i = 0; i < t; ++i) directions[i] = es::perturbation_from_seed(tasks[2 * i + 1].perturb_seed, dim);

    std::vector<double> objective;
    if (masked) {
        std::vector<double> etas(tasks.size());
        std::vector<double> shifted = s.params;
        for (std::size_t i = 0; i < t; ++i) {
            etas[2 * i] = record.eta;
            std::copy(s.params.begin(), s.params.end(), shifted.begin());
            for (std::size_t d = 0; d < dim; ++d) shifted[d] += cfg.es.sigma * directions[i][d];
            etas[2 * i + 1] = s.model.mask_eta(shifted);
        }
        objective = topology::masked_objective_batch(raw, etas, record.beta);
    } else if (cfg.normalize_rewards) {
        objective = es::normalize_rewards(raw);
    } else {
        objective = raw;
    }

    std::vector<double> pivot_losses(t);
    std::vector<es::PerturbedLoss> perturbed(t);
    for (std::size_t i = 0; i < t; ++i) {
        pivot_losses[i] = -objective[2 * i];
        perturbed[i] = {directions[i], -objective[2 * i + 1]};
    }
    record.pivot = exact_mean(pivot_losses);
    const std::vector<double> gradient = es::es_gradient(cfg.es, perturbed, record.pivot);
    es::apply_update(s.params, gradient, cfg.es);

    if (cfg.normalize_observations) {
        for (const auto& r : results) s.normalizer.merge(r.obs_stats);
    }

    const std::size_t p = s.population.size();
    for (std::size_t i = 0; i < t; ++i) {
        s.population[i % p].observe(raw[2 * i]);
        s.population[i % p].observe(raw[2 * i + 1]);
    }
    record.mean_reward = exact_mean(raw);
    record.max_reward = *std::max_element(raw.begin(), raw.end());

    ++s.iteration;
    ++s.weights_version;

    if (s.iteration % cfg.controller_period == 0) {
        const auto order = rank_population(s.population);
        record.phase = PhaseEvent{record.iteration, s.population[order.front()]};
        if (s.controller) {
            std::vector<topology::Partitioning> parts;
            std::vector<double> rewards;
            for (const auto& member : s.population) {
                if (!member.max_reward) continue;
                parts.push_back(member.partitioning);
                rewards.push_back(*member.max_reward);
            }
            if (!parts.empty()) controller::controller_update(*s.controller, parts, rewards);
        }
        refresh_population(s, false);
    }

    record.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return record;
}

}  // namespace chromatic::orchestrator
