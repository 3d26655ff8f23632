#include "chromatic/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chromatic/simd.hpp"

namespace chromatic::controller {

std::string to_string(Optimizer opt) { return opt == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adam") return Optimizer::adam;
    throw ConfigError("unknown controller optimizer '" + name + "'");
}

void ControllerConfig::validate() const {
    if (hidden_size == 0 || embed_dim == 0) throw ConfigError("controller sizes must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("controller learning rate must be positive");
    if (!(temperature > 0.0)) throw ConfigError("controller temperature must be positive");
    if (!(entropy_weight >= 0.0)) throw ConfigError("controller entropy weight must be non-negative");
    if (!(critic_decay >= 0.0 && critic_decay <= 1.0)) throw ConfigError("critic decay must lie in [0, 1]");
}

ControllerLayout::ControllerLayout(std::size_t h, std::size_t d, std::size_t e, std::size_t m)
    : hidden(h), embed(d), edges(e), colors(m) {
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        const std::size_t offset = at;
        at += n;
        return offset;
    };
    w_input = take(4 * h * 2 * d);
    w_hidden = take(4 * h * h);
    b_gates = take(4 * h);
    edge_embed = take(e * d);
    partition_embed = take(m * d);
    start_embed = take(d);
    w_out = take(m * h);
    b_out = take(m);
    total = at;
}

void ControllerState::validate() const {
    config.validate();
    if (params.size() != layout.total) throw DimensionError("controller parameter vector has the wrong length");
    require_finite(params, "controller parameters");
    if (!std::isfinite(baseline)) throw ValueError("controller baseline is not finite");
    if (adam_m.size() != layout.total || adam_v.size() != layout.total) {
        throw DimensionError("controller optimizer state has the wrong length");
    }
}

ControllerState make_controller(const ControllerConfig& config, std::size_t edge_count, std::uint32_t num_partitions,
                                std::uint64_t seed) {
    config.validate();
    if (edge_count == 0) throw ConfigError("controller needs at least one edge");
    if (num_partitions == 0) throw ConfigError("controller needs M >= 1");
    ControllerState s;
    s.config = config;
    s.layout = ControllerLayout(config.hidden_size, config.embed_dim, edge_count, num_partitions);
    s.params.resize(s.layout.total);
    Rng rng(seed);
    for (double& p : s.params) p = rng.uniform(-config.init_range, config.init_range);
    s.adam_m.assign(s.layout.total, 0.0);
    s.adam_v.assign(s.layout.total, 0.0);
    return s;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
    std::vector<double> x;      // 2d input
    std::vector<double> gates;  // activated i, f, g, o (4H)
    std::vector<double> c;      // cell after update
    std::vector<double> tanh_c;
    std::vector<double> h;
    std::vector<double> log_p;  // M
    std::vector<double> p;      // M
    std::uint32_t choice = 0;
    double entropy = 0.0;
};

/// Unrolls the decoder. With `forced` non-empty the choices are taken from
/// it; otherwise they are drawn from `rng`.
class Decoder {
public:
    explicit Decoder(const ControllerState& s) : s_(s), L_(s.layout), k_(simd::kernels()) {}

    double log_prob = 0.0;
    double entropy = 0.0;
    std::vector<StepCache> steps;

    void run(std::span<const std::uint32_t> forced, Rng* rng, bool keep_cache) {
        const std::size_t H = L_.hidden, d = L_.embed, M = L_.colors;
        const double* P = s_.params.data();
        std::vector<double> h(H, 0.0), c(H, 0.0), z(4 * H), tmp(4 * H), logits(M);
        StepCache cur;
        if (keep_cache) steps.reserve(L_.edges);
        std::uint32_t prev = 0;
        for (std::size_t t = 0; t < L_.edges; ++t) {
            cur.x.resize(2 * d);
            std::copy_n(P + L_.edge_embed + t * d, d, cur.x.begin());
            const double* prev_embed = t == 0 ? P + L_.start_embed : P + L_.partition_embed + prev * d;
            std::copy_n(prev_embed, d, cur.x.begin() + static_cast<std::ptrdiff_t>(d));

            k_.gemv(P + L_.w_input, 4 * H, 2 * d, cur.x.data(), z.data());
            k_.gemv(P + L_.w_hidden, 4 * H, H, h.data(), tmp.data());
            cur.gates.resize(4 * H);
            for (std::size_t j = 0; j < 4 * H; ++j) {
                const double v = z[j] + tmp[j] + P[L_.b_gates + j];
                cur.gates[j] = (j >= 2 * H && j < 3 * H) ? std::tanh(v) : sigmoid(v);
            }
            cur.c.resize(H);
            cur.tanh_c.resize(H);
            cur.h.resize(H);
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = cur.gates[j], fg = cur.gates[H + j], gg = cur.gates[2 * H + j],
                             og = cur.gates[3 * H + j];
                cur.c[j] = fg * c[j] + ig * gg;
                cur.tanh_c[j] = std::tanh(cur.c[j]);
                cur.h[j] = og * cur.tanh_c[j];
            }

            k_.gemv(P + L_.w_out, M, H, cur.h.data(), logits.data());
            double mx = -INFINITY;
            for (std::size_t m = 0; m < M; ++m) {
                logits[m] = (logits[m] + P[L_.b_out + m]) / s_.config.temperature;
                mx = std::max(mx, logits[m]);
            }
            double z_sum = 0.0;
            for (std::size_t m = 0; m < M; ++m) z_sum += std::exp(logits[m] - mx);
            const double lse = mx + std::log(z_sum);
            cur.log_p.resize(M);
            cur.p.resize(M);
            double ent = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                cur.log_p[m] = logits[m] - lse;
                cur.p[m] = std::exp(cur.log_p[m]);
                ent -= cur.p[m] * cur.log_p[m];
            }
            cur.entropy = ent;

            std::uint32_t choice = 0;
            if (!forced.empty()) {
                choice = forced[t];
                if (choice >= M) throw ValueError("controller: color out of range in assignment");
            } else if (M > 1) {
                const double u = rng->uniform();
                double acc = 0.0;
                choice = static_cast<std::uint32_t>(M - 1);
                for (std::size_t m = 0; m < M; ++m) {
                    acc += cur.p[m];
                    if (u < acc) {
                        choice = static_cast<std::uint32_t>(m);
                        break;
                    }
                }
            }
            cur.choice = choice;
            log_prob += cur.log_p[choice];
            entropy += ent;

            h = cur.h;
            c = cur.c;
            prev = choice;
            if (keep_cache) {
                steps.push_back(cur);
            } else {
                choices_.push_back(choice);
                probs_.push_back(cur.p);
            }
        }
    }

    std::vector<std::uint32_t> choices_;
    std::vector<std::vector<double>> probs_;

    /// Accumulates coef_lp * d(log p)/dtheta + coef_ent * d(entropy)/dtheta into grad.
    void backward(double coef_lp, double coef_ent, std::vector<double>& grad) const {
        const std::size_t H = L_.hidden, d = L_.embed, M = L_.colors;
        const double* P = s_.params.data();
        double* G = grad.data();
        const double inv_t = 1.0 / s_.config.temperature;
        std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dh(H), dz(4 * H), da(M), dx(2 * d), tmp(H);
        const std::vector<double> zeros(H, 0.0);
        for (std::size_t t = L_.edges; t-- > 0;) {
            const StepCache& st = steps[t];
            // d/d(pre-temperature logits)
            for (std::size_t m = 0; m < M; ++m) {
                const double onehot = m == st.choice ? 1.0 : 0.0;
                const double d_lp = onehot - st.p[m];
                const double d_ent = -st.p[m] * (st.log_p[m] + st.entropy);
                da[m] = (coef_lp * d_lp + coef_ent * d_ent) * inv_t;
            }
            for (std::size_t m = 0; m < M; ++m) {
                if (da[m] != 0.0) k_.axpy(da[m], st.h.data(), G + L_.w_out + m * H, H);
                G[L_.b_out + m] += da[m];
            }
            k_.gemv_t(P + L_.w_out, M, H, da.data(), dh.data());
            for (std::size_t j = 0; j < H; ++j) dh[j] += dh_next[j];

            const std::vector<double>& c_prev = t == 0 ? zeros : steps[t - 1].c;
            const std::vector<double>& h_prev = t == 0 ? zeros : steps[t - 1].h;
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = st.gates[j], fg = st.gates[H + j], gg = st.gates[2 * H + j],
                             og = st.gates[3 * H + j];
                const double dc = dh[j] * og * (1.0 - st.tanh_c[j] * st.tanh_c[j]) + dc_next[j];
                dz[j] = dc * gg * ig * (1.0 - ig);
                dz[H + j] = dc * c_prev[j] * fg * (1.0 - fg);
                dz[2 * H + j] = dc * ig * (1.0 - gg * gg);
                dz[3 * H + j] = dh[j] * st.tanh_c[j] * og * (1.0 - og);
                dc_next[j] = dc * fg;
            }
            for (std::size_t r = 0; r < 4 * H; ++r) {
                if (dz[r] == 0.0) continue;
                k_.axpy(dz[r], st.x.data(), G + L_.w_input + r * 2 * d, 2 * d);
                if (t > 0) k_.axpy(dz[r], h_prev.data(), G + L_.w_hidden + r * H, H);
                G[L_.b_gates + r] += dz[r];
            }
            k_.gemv_t(P + L_.w_input, 4 * H, 2 * d, dz.data(), dx.data());
            k_.gemv_t(P + L_.w_hidden, 4 * H, H, dz.data(), tmp.data());
            dh_next = tmp;
            for (std::size_t j = 0; j < d; ++j) G[L_.edge_embed + t * d + j] += dx[j];
            const std::size_t prev_off = t == 0 ? L_.start_embed : L_.partition_embed + steps[t - 1].choice * d;
            for (std::size_t j = 0; j < d; ++j) G[prev_off + j] += dx[d + j];
        }
    }

private:
    const ControllerState& s_;
    const ControllerLayout& L_;
    const simd::KernelTable& k_;
};

void check_batch(const ControllerState& state, std::span<const topology::Partitioning> parts,
                 std::span<const double> rewards) {
    if (parts.size() != rewards.size()) throw DimensionError("controller: rewards length != batch size");
    if (parts.empty()) throw ValueError("controller: empty batch");
    require_finite(rewards, "controller rewards");
    for (const auto& p : parts) {
        if (p.assignment.size() != state.edge_count()) throw DimensionError("controller: assignment length mismatch");
        if (p.num_partitions != state.num_partitions()) throw DimensionError("controller: partition count mismatch");
    }
}

}  // namespace

SampleBatch sample_partitionings(const ControllerState& state, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ValueError("sample_partitionings: k must be >= 1");
    SampleBatch batch;
    batch.partitionings.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        Rng rng(derive_seed(seed, {i}));
        Decoder dec(state);
        dec.run({}, &rng, false);
        batch.partitionings.push_back({state.num_partitions(), std::move(dec.choices_)});
        batch.log_probs.push_back(dec.log_prob);
        batch.entropies.push_back(dec.entropy);
    }
    return batch;
}

SequenceEvaluation evaluate_sequence(const ControllerState& state, std::span<const std::uint32_t> assignment,
                                     bool keep_step_probabilities) {
    if (assignment.size() != state.edge_count()) {
        throw DimensionError("controller: assignment length " + std::to_string(assignment.size()) +
                             " != edge count " + std::to_string(state.edge_count()));
    }
    Decoder dec(state);
    dec.run(assignment, nullptr, false);
    SequenceEvaluation out{dec.log_prob, dec.entropy, {}};
    if (keep_step_probabilities) out.step_probabilities = std::move(dec.probs_);
    return out;
}

double log_prob(const ControllerState& state, const topology::Partitioning& partitioning) {
    if (partitioning.num_partitions != state.num_partitions()) throw DimensionError("controller: partition count mismatch");
    return evaluate_sequence(state, partitioning.assignment).log_prob;
}

double surrogate_objective(const ControllerState& state, std::span<const topology::Partitioning> partitionings,
                           std::span<const double> rewards, double baseline) {
    check_batch(state, partitionings, rewards);
    const double inv_k = 1.0 / static_cast<double>(partitionings.size());
    double j = 0.0;
    for (std::size_t i = 0; i < partitionings.size(); ++i) {
        const auto ev = evaluate_sequence(state, partitionings[i].assignment);
        j += inv_k * (rewards[i] - baseline) * ev.log_prob + state.config.entropy_weight * inv_k * ev.entropy;
    }
    return j;
}

std::vector<double> surrogate_gradient(const ControllerState& state,
                                       std::span<const topology::Partitioning> partitionings,
                                       std::span<const double> rewards, double baseline) {
    check_batch(state, partitionings, rewards);
    std::vector<double> grad(state.layout.total, 0.0);
    const double inv_k = 1.0 / static_cast<double>(partitionings.size());
    for (std::size_t i = 0; i < partitionings.size(); ++i) {
        const double coef_lp = inv_k * (rewards[i] - baseline);
        const double coef_ent = inv_k * state.config.entropy_weight;
        if (coef_lp == 0.0 && coef_ent == 0.0) continue;
        Decoder dec(state);
        dec.run(partitionings[i].assignment, nullptr, true);
        dec.backward(coef_lp, coef_ent, grad);
    }
    return grad;
}

void controller_update(ControllerState& state, std::span<const topology::Partitioning> partitionings,
                       std::span<const double> rewards) {
    const auto& cfg = state.config;
    const double mean_r = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    if (cfg.baseline_warm_start && state.updates == 0) state.baseline = mean_r;
    const auto grad = surrogate_gradient(state, partitionings, rewards, state.baseline);
    if (cfg.optimizer == Optimizer::sgd) {
        simd::kernels().axpy(cfg.learning_rate, grad.data(), state.params.data(), grad.size());
    } else {
        ++state.adam_step;
        const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.adam_step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.adam_step));
        for (std::size_t i = 0; i < grad.size(); ++i) {
            state.adam_m[i] = b1 * state.adam_m[i] + (1.0 - b1) * grad[i];
            state.adam_v[i] = b2 * state.adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
            const double m_hat = state.adam_m[i] / c1;
            const double v_hat = state.adam_v[i] / c2;
            state.params[i] += cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        }
    }
    state.baseline = cfg.critic_decay * state.baseline + (1.0 - cfg.critic_decay) * mean_r;
    ++state.updates;
}

}  // namespace chromatic::controller
