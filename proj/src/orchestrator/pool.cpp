#include "chromatic/orchestrator/pool.hpp"

#include <atomic>
#include <optional>
#include <string>
#include <thread>

#include "chromatic/envs.hpp"

namespace chromatic::orchestrator {

std::string_view to_string(TaskKind kind) noexcept { return kind == TaskKind::pivot ? "pivot" : "perturbed"; }

TaskKind parse_task_kind(std::string_view name) {
    if (name == "pivot") return TaskKind::pivot;
    if (name == "perturbed") return TaskKind::perturbed;
    throw ProtocolError("unknown task kind '" + std::string(name) + "'");
}

std::vector<double> task_params(const EvalContext& context, const Task& task) {
    std::vector<double> params = context.params;
    if (task.kind == TaskKind::perturbed) {
        if (context.perturb_dim > params.size()) throw DimensionError("perturbation longer than parameter vector");
        const std::vector<double> g = es::perturbation_from_seed(task.perturb_seed, context.perturb_dim);
        for (std::size_t i = 0; i < g.size(); ++i) params[i] += context.sigma * g[i];
    }
    return params;
}

TaskResult evaluate_task(const EvalContext& context, const Task& task) {
    if (task.weights_version != context.weights_version) {
        throw ProtocolError("task " + std::to_string(task.task_id) + " targets weights version " +
                            std::to_string(task.weights_version) + ", context holds " +
                            std::to_string(context.weights_version));
    }
    const std::vector<double> params = task_params(context, task);
    const topology::RealizedPolicy realized = context.model.realize(params, task.assignment);
    const topology::NetworkTopology& topo = context.model.topology();
    const envs::PolicyFn policy = [&](std::span<const double> obs) {
        return topology::policy_forward(topo, realized, obs);
    };
    TaskResult result;
    result.task_id = task.task_id;
    result.obs_stats = es::Normalizer(topo.input_dim());
    envs::RolloutOptions options;
    options.normalizer = &context.normalizer;
    options.observation_stats = &result.obs_stats;
    const envs::RolloutResult r = envs::rollout(policy, task.env, task.env_seed, options, task.horizon);
    result.reward = r.total_reward;
    result.steps = r.steps;
    result.terminated_early = r.terminated_early;
    return result;
}

InProcessPool::InProcessPool(std::size_t threads, Evaluator evaluator)
    : threads_(threads), evaluator_(std::move(evaluator)) {
    if (threads_ == 0) throw ConfigError("in-process pool needs at least one thread");
}

std::string InProcessPool::describe() const { return "in-process pool, " + std::to_string(threads_) + " thread(s)"; }

std::vector<TaskResult> InProcessPool::dispatch(const EvalContext& context, std::span<const Task> tasks) {
    const std::size_t n = tasks.size();
    std::vector<TaskResult> results(n);
    std::vector<std::optional<std::string>> failures(n);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            std::string last_error;
            bool ok = false;
            for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
                try {
                    TaskResult r = evaluator_(context, tasks[i]);
                    if (r.task_id != tasks[i].task_id) throw ProtocolError("result id does not match task id");
                    results[i] = std::move(r);
                    ok = true;
                } catch (const std::exception& e) {
                    last_error = e.what();
                }
            }
            if (!ok) failures[i] = std::move(last_error);
        }
    };

    const std::size_t count = std::min(threads_, n);
    if (count <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(count);
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (failures[i]) {
            throw WorkerFailure("task " + std::to_string(tasks[i].task_id) + " failed twice: " + *failures[i]);
        }
    }
    return results;
}

}  // namespace chromatic::orchestrator
