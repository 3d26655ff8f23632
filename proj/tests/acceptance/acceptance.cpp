// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chromatic/analysis.hpp"
#include "chromatic/controller.hpp"
#include "chromatic/envs.hpp"
#include "chromatic/es.hpp"
#include "chromatic/orchestrator/checkpoint.hpp"
#include "chromatic/orchestrator/policy_io.hpp"
#include "chromatic/orchestrator/remote.hpp"
#include "chromatic/orchestrator/trainer.hpp"
#include "chromatic/topology.hpp"

using namespace chromatic;
using namespace chromatic::orchestrator;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream ss;
    ss.precision(precision);
    ss << v;
    return ss.str();
}

// Shared training harness ---------------------------------------------------

const std::vector<std::uint64_t> kSeeds{1, 2, 3};
constexpr std::size_t kWorkers = 8;
constexpr std::size_t kEvalEpisodes = 50;
constexpr std::uint64_t kEvalFirstSeed = 1000;

std::vector<std::uint64_t> eval_seeds() {
    std::vector<std::uint64_t> s(kEvalEpisodes);
    for (std::size_t i = 0; i < kEvalEpisodes; ++i) s[i] = kEvalFirstSeed + i;
    return s;
}

struct RunResult {
    std::vector<IterationRecord> records;
    double eval_mean = 0.0;  // final policy on the held-out evaluation seeds
};

RunResult train(const TrainConfig& cfg) {
    InProcessPool pool(kWorkers);
    TrainState s = make_initial_state(cfg);
    RunResult r;
    for (std::size_t i = 0; i < cfg.iterations; ++i) r.records.push_back(run_iteration(s, pool));
    const auto seeds = eval_seeds();
    r.eval_mean = evaluate_policy(policy_from_state(s), cfg.env, seeds).mean;
    return r;
}

struct ZeroBand {
    double mean = 0.0;
    double se = 0.0;
};

ZeroBand zero_policy(const std::string& env) {
    const std::size_t act = envs::env_spec(env).act_dim;
    const envs::PolicyFn zero = [act](std::span<const double>) { return std::vector<double>(act, 0.0); };
    std::vector<double> rewards;
    for (auto seed : eval_seeds()) rewards.push_back(envs::rollout(zero, env, seed).total_reward);
    double mean = 0.0;
    for (double v : rewards) mean += v;
    mean /= static_cast<double>(rewards.size());
    double ss = 0.0;
    for (double v : rewards) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(rewards.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(rewards.size()))};
}

// Settings shared by the end-to-end runs: defaults except a controller phase
// every iteration and a larger controller step, so the controller gets enough
// updates to matter within 300 iterations.
TrainConfig e2e_config(const std::string& env, Mode mode, std::uint64_t seed) {
    TrainConfig c;
    c.env = env;
    c.arch = "L";
    c.partitions = 8;
    c.population = 301;
    c.iterations = 300;
    c.workers = kWorkers;
    c.mode = mode;
    c.seed = seed;
    c.controller_period = 1;
    c.controller.learning_rate = 0.05;
    return c;
}

TrainConfig unstructured_config(std::uint64_t seed) {
    TrainConfig c = e2e_config("pendulum-swingup", Mode::fixed_partition, seed);
    c.policy = topology::PolicyKind::unstructured;
    return c;
}

// Pendulum runs are shared between criteria 5 and 6.
std::map<std::string, std::vector<RunResult>>& pendulum_cache() {
    static std::map<std::string, std::vector<RunResult>> cache;
    return cache;
}

const std::vector<RunResult>& pendulum_runs(const std::string& name) {
    auto& cache = pendulum_cache();
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    std::vector<RunResult> runs;
    for (auto seed : kSeeds) {
        const TrainConfig cfg =
            name == "unstructured" ? unstructured_config(seed) : e2e_config("pendulum-swingup", parse_mode(name), seed);
        runs.push_back(train(cfg));
    }
    return cache.emplace(name, std::move(runs)).first->second;
}

double mean_eval(const std::vector<RunResult>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.eval_mean;
    return s / static_cast<double>(runs.size());
}

double mean_final_max(const std::vector<RunResult>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.records.back().max_reward;
    return s / static_cast<double>(runs.size());
}

// Criteria ------------------------------------------------------------------

Verdict parameter_counts() {
    using namespace topology;
    const NetworkTopology striker{{23, 41, 7}}, cheetah{{17, 41, 6}}, hopper{{11, 41, 3}};
    std::vector<std::pair<std::size_t, std::size_t>> got_want{
        {toeplitz_param_count(striker), 110},
        {toeplitz_param_count(NetworkTopology{{23, 41}}) + toeplitz_param_count(NetworkTopology{{41, 7}}), 63 + 47},
        {toeplitz_param_count(cheetah), 103},
        {toeplitz_param_count(hopper), 94},
        {circulant_param_count(striker), 82},
        {circulant_param_count(cheetah), 82},
        {circulant_param_count(hopper), 82},
        {unstructured_param_count(striker), 1230},
        {unstructured_param_count(cheetah), 943},
        {unstructured_param_count(hopper), 574},
        {PolicyModel(PolicyKind::chromatic, striker, 23).structural_param_count(), 23},
        {PolicyModel(PolicyKind::chromatic, cheetah, 17).structural_param_count(), 17},
        {PolicyModel(PolicyKind::chromatic, hopper, 11).structural_param_count(), 11},
    };
    std::size_t bad = 0;
    for (const auto& [got, want] : got_want) bad += got != want ? 1 : 0;
    return {bad == 0, std::to_string(got_want.size() - bad) + "/" + std::to_string(got_want.size()) + " counts exact"};
}

Verdict es_estimator() {
    auto relative_error = [](const std::vector<double>& got, const std::vector<double>& want) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            num += (got[i] - want[i]) * (got[i] - want[i]);
            den += want[i] * want[i];
        }
        return std::sqrt(num / den);
    };
    auto estimate = [](const std::vector<double>& w, const std::function<double(const std::vector<double>&)>& loss,
                       std::uint64_t base) {
        es::EsConfig cfg;
        const std::size_t n = 100000;
        std::vector<std::vector<double>> directions(n);
        std::vector<es::PerturbedLoss> samples;
        std::vector<double> shifted(w.size());
        for (std::size_t i = 0; i < n; ++i) {
            directions[i] = es::perturbation_from_seed(derive_seed(base, {i}), w.size());
            for (std::size_t d = 0; d < w.size(); ++d) shifted[d] = w[d] + cfg.sigma * directions[i][d];
            samples.push_back({directions[i], loss(shifted)});
        }
        return es::es_gradient(cfg, samples, loss(w));
    };
    const std::vector<double> c{1.0, -2.0, 0.5, 3.0, -1.5};
    const auto linear = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * x[i];
        return s;
    };
    const auto quadratic = [](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; };
    const double e1 = relative_error(estimate({0.3, 0.1, -0.7, 0.2, 0.0}, linear, 77), c);
    const double e2 = relative_error(estimate({1.0, 0.0}, quadratic, 78), {2.0, 0.0});
    return {e1 <= 0.02 && e2 <= 0.05, "linear rel err " + fmt(e1) + " (<= 0.02), quadratic " + fmt(e2) + " (<= 0.05)"};
}

std::vector<topology::Partitioning> enumerate_all(std::size_t edges, std::uint32_t m) {
    std::vector<topology::Partitioning> out;
    std::size_t total = 1;
    for (std::size_t e = 0; e < edges; ++e) total *= m;
    for (std::size_t code = 0; code < total; ++code) {
        topology::Partitioning p{m, std::vector<std::uint32_t>(edges)};
        std::size_t rest = code;
        for (std::size_t e = 0; e < edges; ++e) {
            p.assignment[e] = static_cast<std::uint32_t>(rest % m);
            rest /= m;
        }
        out.push_back(std::move(p));
    }
    return out;
}

Verdict controller_gradient() {
    using namespace controller;
    const ControllerState s = make_controller({}, 3, 2, 5);
    const auto all = enumerate_all(3, 2);
    double mass = 0.0;
    for (const auto& p : all) mass += std::exp(log_prob(s, p));
    std::vector<double> rewards;
    for (std::size_t i = 0; i < all.size(); ++i) rewards.push_back(3.0 * std::sin(1.7 * static_cast<double>(i)));
    const double baseline = 0.4;
    const auto grad = surrogate_gradient(s, all, rewards, baseline);
    const double h = 1e-5;
    double worst = 0.0;
    ControllerState probe = s;
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        probe.params[i] = s.params[i] + h;
        const double up = surrogate_objective(probe, all, rewards, baseline);
        probe.params[i] = s.params[i] - h;
        const double down = surrogate_objective(probe, all, rewards, baseline);
        probe.params[i] = s.params[i];
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
    }
    const bool ok = worst <= 1e-4 && std::abs(mass - 1.0) <= 1e-10;
    return {ok, "max rel err " + fmt(worst, 3) + " over " + std::to_string(s.params.size()) +
                    " params (<= 1e-4), |mass - 1| = " + fmt(std::abs(mass - 1.0), 3)};
}

Verdict controller_learning() {
    using namespace controller;
    ControllerState s = make_controller({}, 3, 2, 11);
    std::size_t reached = 0;
    double p = 0.0;
    for (std::size_t u = 0; u < 200; ++u) {
        const auto b = sample_partitionings(s, 100, derive_seed(12, {u}));
        std::vector<double> rewards;
        for (const auto& part : b.partitionings) rewards.push_back(part.assignment[0] == 0 ? 1.0 : 0.0);
        controller_update(s, b, rewards);
        p = evaluate_sequence(s, std::vector<std::uint32_t>(3, 0), true).step_probabilities[0][0];
        if (reached == 0 && p >= 0.95) reached = u + 1;
    }
    return {reached != 0 && p >= 0.95,
            "p(edge 0 -> color 0) = " + fmt(p) + " after 200 updates" +
                (reached ? ", first >= 0.95 at update " + std::to_string(reached) : std::string())};
}

Verdict end_to_end() {
    // Pendulum: improvement over the zero policy, enas relative to the
    // unstructured baseline, final policies evaluated on held-out seeds.
    const ZeroBand zero = zero_policy("pendulum-swingup");
    const auto& enas = pendulum_runs("enas");
    const auto& dense = pendulum_runs("unstructured");
    const double e = mean_eval(enas), u = mean_eval(dense);
    const double fraction = (e - zero.mean) / (u - zero.mean);
    const bool pendulum_ok = u > zero.mean && fraction >= 0.9;

    // Point reacher: best mean worker reward within 300 iterations.
    const RunResult reacher = train(e2e_config("point-reacher", Mode::enas, 1));
    double best = -1e300;
    for (const auto& r : reacher.records) best = std::max(best, r.mean_reward);
    const bool reacher_ok = best >= -8.0;

    return {pendulum_ok && reacher_ok,
            "pendulum eval enas " + fmt(e) + " vs unstructured " + fmt(u) + " (zero policy " + fmt(zero.mean) +
                "), improvement ratio " + fmt(fraction, 3) + " (>= 0.9) " + (pendulum_ok ? "ok" : "FAILED") +
                "; final max enas " + fmt(mean_final_max(enas)) + " vs " + fmt(mean_final_max(dense)) +
                "; point-reacher best mean " + fmt(best) + " (>= -8) " + (reacher_ok ? "ok" : "FAILED") +
                ", eval " + fmt(reacher.eval_mean)};
}

Verdict ablation() {
    const ZeroBand zero = zero_policy("pendulum-swingup");
    const auto& enas = pendulum_runs("enas");
    const auto& fixed = pendulum_runs("fixed-random-population");
    const auto& random = pendulum_runs("random-controller");
    const double e = mean_eval(enas), f = mean_eval(fixed), r = mean_eval(random);
    const bool ordered = e >= f && mean_final_max(enas) >= mean_final_max(fixed);
    const double gain = e - zero.mean;
    const double f_share = (f - zero.mean) / gain, r_share = (r - zero.mean) / gain;
    const bool nontrivial = gain > 0.0 && f_share > 0.5 && r_share > 0.5;
    return {ordered && nontrivial,
            "eval enas " + fmt(e) + ", fixed-random-population " + fmt(f) + ", random-controller " + fmt(r) +
                " (zero policy " + fmt(zero.mean) + "); final max " + fmt(mean_final_max(enas)) + " / " +
                fmt(mean_final_max(fixed)) + " / " + fmt(mean_final_max(random)) + "; ordering " +
                (ordered ? "ok" : "FAILED") + "; share of enas improvement: fixed " + fmt(f_share, 3) + ", random " +
                fmt(r_share, 3) + " (> 0.5) " + (nontrivial ? "ok" : "FAILED")};
}

Verdict displacement() {
    using namespace analysis;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    std::size_t worst_toeplitz = 0, least_gaussian = 100;
    for (std::size_t n = 4; n <= 8; ++n) {
        const auto [f, a] = band_pair(BandPair::sylvester, n);
        for (int k = 0; k < 10; ++k) {
            std::vector<double> diag(2 * n - 1);
            for (auto& d : diag) d = normal(rng);
            Matrix t(n, n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) t(i, j) = diag[i + n - 1 - j];
            worst_toeplitz = std::max(worst_toeplitz, displacement_rank(t, f, a, 0.0));
        }
    }
    bool gaussian_ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 g(seed);
        Matrix r(8, 8);
        for (double& v : r.data()) v = normal(g);
        const auto [f, a] = band_pair(BandPair::sylvester, 8);
        const std::size_t rank = displacement_rank(r, f, a, 0.0);
        least_gaussian = std::min(least_gaussian, rank);
        gaussian_ok = gaussian_ok && rank >= 6;
    }
    return {worst_toeplitz <= 2 && gaussian_ok, "max Toeplitz rank " + std::to_string(worst_toeplitz) +
                                                    " (<= 2), min Gaussian rank " + std::to_string(least_gaussian) +
                                                    " (>= 6)"};
}

Verdict metrics() {
    using namespace analysis;
    using L = std::vector<std::uint32_t>;
    std::vector<bool> exact{
        partition_entropy(L{1, 1, 1, 1}) == 0.0,
        std::abs(partition_entropy(L{0, 0, 1, 1, 2, 2, 3, 3}) - 2.0) < 1e-15,
        std::abs(partition_entropy(L{0, 0, 0, 1}) + (0.75 * std::log2(0.75) + 0.25 * std::log2(0.25))) < 1e-15,
        rand_index(L{0, 1, 0, 1}, L{0, 1, 0, 1}) == 1.0,
        rand_index(L{0, 0, 0, 0}, L{0, 1, 2, 3}) == 0.0,
        std::abs(rand_index(L{0, 0, 1, 1}, L{0, 1, 0, 1}) - 1.0 / 3.0) < 1e-15,
        variation_of_information(L{0, 0, 1, 1}, L{0, 0, 1, 1}) == 0.0,
        std::abs(variation_of_information(L{0, 0, 1, 1}, L{0, 1, 0, 1}) - 2.0) < 1e-15,
        partition_distance(L{2, 0, 1}, L{2, 0, 1}) == 0,
        partition_distance(L{0, 0, 1}, L{0, 1, 1}) == 1,
        partition_distance(L{0, 1, 1, 0, 1}, L{1, 0, 0, 1, 0}) == 5,
    };
    const auto examples_ok = std::all_of(exact.begin(), exact.end(), [](bool b) { return b; });

    std::mt19937_64 rng(1000);
    std::uniform_int_distribution<std::uint32_t> pick4(0, 3), pick17(0, 16);
    auto labels = [&](std::size_t n, auto& dist) {
        L out(n);
        for (auto& v : out) v = dist(rng);
        return out;
    };
    std::size_t violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const L x = labels(30, pick4), y = labels(30, pick4), z = labels(30, pick4);
        if (variation_of_information(x, z) > variation_of_information(x, y) + variation_of_information(y, z) + 1e-12)
            ++violations;
    }
    double worst_gap = 0.0;
    for (int i = 0; i < 20; ++i) {
        worst_gap = std::max(worst_gap, std::abs(std::log2(17.0) - partition_entropy(labels(943, pick17))));
    }
    return {examples_ok && violations == 0 && worst_gap <= 0.05,
            std::to_string(std::count(exact.begin(), exact.end(), true)) + "/" + std::to_string(exact.size()) +
                " examples exact, " + std::to_string(violations) + " triangle violations in 1000 triples, max |H - log2 17| " +
                fmt(worst_gap, 3) + " (<= 0.05)"};
}

std::vector<std::string> log_lines(const std::vector<IterationRecord>& records) {
    std::vector<std::string> out;
    for (const auto& r : records) out.push_back(record_to_json(r).dump());
    return out;
}

std::vector<IterationRecord> run_small(const TrainConfig& cfg, WorkerPool& pool) {
    TrainState s = make_initial_state(cfg);
    std::vector<IterationRecord> out;
    for (std::size_t i = 0; i < cfg.iterations; ++i) out.push_back(run_iteration(s, pool));
    return out;
}

Verdict equivalence() {
    using namespace topology;
    Rng rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t rows = 1 + rng.below(40), cols = 1 + rng.below(12);
        const std::uint32_t m = 1 + rng.below(20);
        const NetworkTopology topo{{rows, cols}};
        const auto part = uniform_random_partitioning(topo, m, rng);
        SharedWeightPool pool = zero_pool(topo, m);
        for (auto& w : pool.weights) w = rng.uniform(-1.0, 1.0);
        std::vector<double> x(rows);
        for (auto& v : x) v = rng.uniform(-5.0, 5.0);
        const Matrix w = build_weight_matrices(topo, part, pool)[0];
        const auto y = color_grouped_matvec(ColorGroupedLayer(topo, part, 0), pool.weights, x);
        for (std::size_t j = 0; j < cols; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < rows; ++i) s += x[i] * w(i, j);
            worst = std::max(worst, std::abs(y[j] - s));
        }
    }
    const bool matvec_ok = worst <= 1e-12;

    TrainConfig cfg;
    cfg.env = "point-reacher";
    cfg.partitions = 4;
    cfg.population = 24;
    cfg.controller_period = 2;
    cfg.iterations = 6;
    cfg.seed = 9;
    cfg.horizon = 40;
    InProcessPool one(1), four(4), eight(8);
    const auto reference = log_lines(run_small(cfg, one));
    const bool workers_ok = log_lines(run_small(cfg, four)) == reference && log_lines(run_small(cfg, eight)) == reference;

    bool tcp_ok = false;
    {
        RemotePoolOptions po;
        po.min_workers = 2;
        RemotePool pool(po);
        std::ostringstream log_a, log_b;
        WorkerOptions wo;
        wo.port = pool.port();
        std::thread a([&] { run_worker(wo, log_a); });
        std::thread b([&] { run_worker(wo, log_b); });
        pool.wait_for_workers(2, 30.0);
        tcp_ok = log_lines(run_small(cfg, pool)) == reference;
        pool.shutdown();
        a.join();
        b.join();
    }

    TrainState straight = make_initial_state(cfg);
    for (int i = 0; i < 3; ++i) run_iteration(straight, one);
    TrainState restored = checkpoint_from_json(json::parse(checkpoint_to_json(straight).dump()));
    const bool resume_ok = run_iteration(restored, one) == run_iteration(straight, one);

    return {matvec_ok && workers_ok && tcp_ok && resume_ok,
            "matvec max err " + fmt(worst, 3) + " (<= 1e-12); workers 1/4/8 " + (workers_ok ? "identical" : "DIFFER") +
                "; loopback TCP " + (tcp_ok ? "identical" : "DIFFERS") + "; resume next record " +
                (resume_ok ? "identical" : "DIFFERS")};
}

Verdict masked() {
    TrainConfig cfg;
    cfg.env = "point-reacher";
    cfg.policy = topology::PolicyKind::masked;
    cfg.mode = Mode::fixed_partition;
    cfg.iterations = 300;
    cfg.workers = kWorkers;
    cfg.seed = 1;
    const RunResult run = train(cfg);
    const double eta0 = run.records.front().eta, eta1 = run.records.back().eta;
    const ZeroBand zero = zero_policy(cfg.env);
    const double band_top = zero.mean + 2.0 * zero.se;
    const bool ok = std::abs(eta0 - 0.5) <= 0.02 && eta1 < eta0 && run.eval_mean > band_top;
    return {ok, "eta " + fmt(eta0) + " -> " + fmt(eta1) + ", eval " + fmt(run.eval_mean) +
                    " vs zero-policy band " + fmt(zero.mean) + " +- " + fmt(2.0 * zero.se) + ", beta floor " +
                    fmt(cfg.beta_floor)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"parameter counts", parameter_counts},
        {"ES estimator", es_estimator},
        {"controller gradient", controller_gradient},
        {"controller learning", controller_learning},
        {"end-to-end training", end_to_end},
        {"ablation ordering", ablation},
        {"displacement rank", displacement},
        {"metrics", metrics},
        {"equivalence and determinism", equivalence},
        {"masked baseline", masked},
    };
    std::set<std::size_t> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::stoul(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!wanted.empty() && wanted.count(i + 1) == 0) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (v.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << v.detail << " ["
                  << fmt(secs, 3) << " s]" << std::endl;
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
