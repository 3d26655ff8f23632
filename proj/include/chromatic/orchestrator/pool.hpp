#pragma once

// Evaluation tasks and worker pools.
//
// A task is one episode of one policy: the current parameters, optionally
// shifted by sigma * g where g is regenerated from perturb_seed, realized
// with the task's assignment. Workers are stateless apart from the broadcast
// EvalContext; results are matched to tasks by id so completion order never
// reaches the aggregation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromatic/es.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::orchestrator {

enum class TaskKind { pivot, perturbed };

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view name);

struct Task {
    std::uint64_t task_id = 0;
    TaskKind kind = TaskKind::pivot;
    std::uint64_t weights_version = 0;
    std::uint64_t perturb_seed = 0;
    std::vector<std::uint32_t> assignment;  // empty for non-chromatic models
    std::string env;
    std::uint64_t env_seed = 0;
    int horizon = 0;  // 0: environment default

    friend bool operator==(const Task&, const Task&) = default;
};

struct TaskResult {
    std::uint64_t task_id = 0;
    double reward = 0.0;
    int steps = 0;
    bool terminated_early = false;
    es::Normalizer obs_stats;  // raw observations seen during the episode

    friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

/// Everything a worker needs besides the task itself; broadcast once per
/// weights_version.
struct EvalContext {
    topology::PolicyModel model;
    std::vector<double> params;
    es::Normalizer normalizer;
    double sigma = 0.1;
    std::size_t perturb_dim = 0;  // leading entries of params that are perturbed
    std::uint64_t weights_version = 0;
};

/// Parameters a task evaluates: params, plus sigma * g on the first
/// perturb_dim entries for perturbed tasks.
std::vector<double> task_params(const EvalContext& context, const Task& task);

TaskResult evaluate_task(const EvalContext& context, const Task& task);

using Evaluator = std::function<TaskResult(const EvalContext&, const Task&)>;

class WorkerPool {
public:
    virtual ~WorkerPool() = default;
    /// Returns one result per task, in task order. Each task is attempted at
    /// most twice; a second failure throws WorkerFailure.
    virtual std::vector<TaskResult> dispatch(const EvalContext& context, std::span<const Task> tasks) = 0;
    virtual std::string describe() const = 0;
};

/// Threads pulling task indices from a shared counter.
class InProcessPool final : public WorkerPool {
public:
    explicit InProcessPool(std::size_t threads, Evaluator evaluator = evaluate_task);

    std::vector<TaskResult> dispatch(const EvalContext& context, std::span<const Task> tasks) override;
    std::string describe() const override;
    std::size_t threads() const noexcept { return threads_; }

private:
    std::size_t threads_;
    Evaluator evaluator_;
};

}  // namespace chromatic::orchestrator
