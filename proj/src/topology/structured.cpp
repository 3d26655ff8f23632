#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "chromatic/topology.hpp"

namespace chromatic::topology {

std::size_t toeplitz_param_count(std::size_t a, std::size_t b) {
    if (a == 0 || b == 0) throw DimensionError("toeplitz: dimensions must be positive");
    return a + b - 1;
}

Matrix toeplitz_build(std::size_t a, std::size_t b, std::span<const double> params) {
    if (params.size() != toeplitz_param_count(a, b)) {
        throw DimensionError("toeplitz " + std::to_string(a) + "x" + std::to_string(b) + " needs " +
                             std::to_string(a + b - 1) + " params, got " + std::to_string(params.size()));
    }
    Matrix m(a, b);
    for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) m(i, j) = j >= i ? params[j - i] : params[b - 1 + (i - j)];
    }
    return m;
}

std::size_t circulant_param_count(std::size_t a, std::size_t b) {
    if (a == 0 || b == 0) throw DimensionError("circulant: dimensions must be positive");
    return std::max(a, b);
}

Matrix circulant_build(std::size_t a, std::size_t b, std::span<const double> params) {
    const std::size_t n = circulant_param_count(a, b);
    if (params.size() != n) {
        throw DimensionError("circulant " + std::to_string(a) + "x" + std::to_string(b) + " needs " +
                             std::to_string(n) + " params, got " + std::to_string(params.size()));
    }
    Matrix m(a, b);
    for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) m(i, j) = params[(j + n - i) % n];
    }
    return m;
}

std::size_t toeplitz_param_count(const NetworkTopology& topology) {
    topology.validate();
    std::size_t n = 0;
    for (std::size_t l = 0; l < topology.num_matrices(); ++l) {
        n += toeplitz_param_count(topology.matrix_rows(l), topology.matrix_cols(l));
    }
    return n;
}

std::size_t circulant_param_count(const NetworkTopology& topology) {
    topology.validate();
    std::size_t n = 0;
    for (std::size_t l = 0; l < topology.num_matrices(); ++l) {
        n += circulant_param_count(topology.matrix_rows(l), topology.matrix_cols(l));
    }
    return n;
}

std::size_t unstructured_param_count(const NetworkTopology& topology) { return topology.edge_count(); }

// ---------------------------------------------------------------------------

void MaskedPolicyState::validate(const NetworkTopology& topology) const {
    if (!(alpha > 0.0)) throw ValueError("masked policy: alpha must be positive");
    if (dense_weights.size() != topology.num_matrices() || mask_logits.size() != topology.num_matrices()) {
        throw DimensionError("masked policy: matrix count does not match topology");
    }
    for (std::size_t l = 0; l < dense_weights.size(); ++l) {
        const auto r = topology.matrix_rows(l);
        const auto c = topology.matrix_cols(l);
        if (dense_weights[l].rows() != r || dense_weights[l].cols() != c || mask_logits[l].rows() != r ||
            mask_logits[l].cols() != c) {
            throw DimensionError("masked policy: weight/mask shape mismatch at layer " + std::to_string(l));
        }
    }
}

double mask_gate(double logit, double alpha) { return 1.0 / (1.0 + std::exp(-logit / alpha)); }

bool mask_active(double logit, double alpha) { return mask_gate(logit, alpha) >= 0.5; }

std::vector<Matrix> masked_effective_matrices(const MaskedPolicyState& state) {
    std::vector<Matrix> out;
    out.reserve(state.dense_weights.size());
    for (std::size_t l = 0; l < state.dense_weights.size(); ++l) {
        Matrix m = state.dense_weights[l];
        const auto logits = state.mask_logits[l].data();
        auto values = m.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!mask_active(logits[i], state.alpha)) values[i] = 0.0;
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> masked_forward(const MaskedPolicyState& state, const NetworkTopology& topology,
                                   std::span<const double> observation) {
    state.validate(topology);
    const auto matrices = masked_effective_matrices(state);
    return dense_forward(topology, matrices, state.biases, observation);
}

MaskedParams masked_effective_params(const MaskedPolicyState& state) {
    std::size_t total = 0;
    std::size_t active = 0;
    for (const auto& m : state.mask_logits) {
        for (double s : m.data()) {
            ++total;
            if (mask_active(s, state.alpha)) ++active;
        }
    }
    return {active, total == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(total)};
}

double masked_objective(double reward_normalized, double eta, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValueError("masked objective: beta must lie in [0, 1]");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ValueError("masked objective: eta must lie in [0, 1]");
    return beta * reward_normalized + (1.0 - beta) * (1.0 - eta);
}

namespace {

std::vector<double> standardize(std::span<const double> v) {
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
        return std::vector<double>(v.size(), 0.0);
    }
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
}

}  // namespace

std::vector<double> masked_objective_batch(std::span<const double> rewards, std::span<const double> etas,
                                           double beta) {
    if (rewards.size() != etas.size()) throw DimensionError("masked objective: rewards/etas length mismatch");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValueError("masked objective: beta must lie in [0, 1]");
    if (rewards.empty()) return {};
    std::vector<double> sparsity(etas.size());
    for (std::size_t i = 0; i < etas.size(); ++i) sparsity[i] = 1.0 - etas[i];
    const auto r = standardize(rewards);
    const auto s = standardize(sparsity);
    std::vector<double> out(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = beta * r[i] + (1.0 - beta) * s[i];
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(PolicyKind kind) noexcept {
    switch (kind) {
        case PolicyKind::chromatic: return "chromatic";
        case PolicyKind::toeplitz: return "toeplitz";
        case PolicyKind::circulant: return "circulant";
        case PolicyKind::masked: return "masked";
        case PolicyKind::unstructured: return "unstructured";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
    for (auto k : {PolicyKind::chromatic, PolicyKind::toeplitz, PolicyKind::circulant, PolicyKind::masked,
                   PolicyKind::unstructured}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown policy kind '" + std::string(name) + "'");
}

std::uint64_t bits_estimate(PolicyKind kind, const NetworkTopology& topology, std::size_t count) {
    topology.validate();
    const std::uint64_t biases = topology.bias_count();
    const std::uint64_t edges = topology.edge_count();
    switch (kind) {
        case PolicyKind::chromatic: {
            if (count == 0) throw ValueError("bits_estimate: chromatic policy needs M >= 1");
            // ceil(log2 M)
            const std::uint64_t index_bits = count <= 1 ? 0 : std::bit_width(static_cast<std::uint64_t>(count - 1));
            return 32 * (count + biases) + edges * index_bits;
        }
        case PolicyKind::masked: return 32 * (count + biases) + edges;
        case PolicyKind::toeplitz: return 32 * (toeplitz_param_count(topology) + biases);
        case PolicyKind::circulant: return 32 * (circulant_param_count(topology) + biases);
        case PolicyKind::unstructured: return 32 * (unstructured_param_count(topology) + biases);
    }
    return 0;
}

}  // namespace chromatic::topology
