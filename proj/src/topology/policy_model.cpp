#include <algorithm>
#include <numeric>
#include <string>

#include "chromatic/topology.hpp"

namespace chromatic::topology {

PolicyModel::PolicyModel(PolicyKind kind, NetworkTopology topology, std::uint32_t num_partitions, double mask_alpha)
    : kind_(kind), topology_(std::move(topology)), num_partitions_(num_partitions), mask_alpha_(mask_alpha) {
    topology_.validate();
    switch (kind_) {
        case PolicyKind::chromatic:
            if (num_partitions_ == 0) throw ConfigError("chromatic policy needs M >= 1");
            structural_ = num_partitions_;
            break;
        case PolicyKind::toeplitz: structural_ = toeplitz_param_count(topology_); break;
        case PolicyKind::circulant: structural_ = circulant_param_count(topology_); break;
        case PolicyKind::unstructured: structural_ = unstructured_param_count(topology_); break;
        case PolicyKind::masked:
            if (!(mask_alpha_ > 0.0)) throw ConfigError("masked policy needs alpha > 0");
            structural_ = 2 * topology_.edge_count();
            break;
    }
}

std::size_t PolicyModel::weight_param_count(std::span<const double> params) const {
    if (kind_ == PolicyKind::masked) return masked_effective_params(to_masked_state(params)).count;
    if (kind_ == PolicyKind::chromatic) return num_partitions_;
    return structural_;
}

namespace {

std::vector<std::vector<double>> read_biases(const NetworkTopology& t, std::span<const double> params,
                                             std::size_t offset) {
    std::vector<std::vector<double>> biases;
    for (std::size_t l = 0; l < t.num_matrices(); ++l) {
        const auto n = t.matrix_cols(l);
        biases.emplace_back(params.begin() + static_cast<std::ptrdiff_t>(offset),
                            params.begin() + static_cast<std::ptrdiff_t>(offset + n));
        offset += n;
    }
    return biases;
}

}  // namespace

RealizedPolicy PolicyModel::realize(std::span<const double> params, std::span<const std::uint32_t> assignment) const {
    if (params.size() != param_count()) {
        throw DimensionError("policy expects " + std::to_string(param_count()) + " params, got " +
                             std::to_string(params.size()));
    }
    RealizedPolicy out;
    out.biases = read_biases(topology_, params, structural_);
    const auto& t = topology_;
    std::size_t offset = 0;
    switch (kind_) {
        case PolicyKind::chromatic: {
            if (assignment.size() != t.edge_count()) {
                throw DimensionError("chromatic policy: assignment length " + std::to_string(assignment.size()) +
                                     " != edge count " + std::to_string(t.edge_count()));
            }
            std::size_t e = 0;
            for (std::size_t l = 0; l < t.num_matrices(); ++l) {
                Matrix m(t.matrix_rows(l), t.matrix_cols(l));
                for (double& v : m.data()) {
                    const auto c = assignment[e++];
                    if (c >= num_partitions_) throw ValueError("chromatic policy: color out of range");
                    v = params[c];
                }
                out.matrices.push_back(std::move(m));
            }
            break;
        }
        case PolicyKind::toeplitz:
            for (std::size_t l = 0; l < t.num_matrices(); ++l) {
                const auto a = t.matrix_rows(l), b = t.matrix_cols(l);
                const auto n = toeplitz_param_count(a, b);
                out.matrices.push_back(toeplitz_build(a, b, params.subspan(offset, n)));
                offset += n;
            }
            break;
        case PolicyKind::circulant:
            for (std::size_t l = 0; l < t.num_matrices(); ++l) {
                const auto a = t.matrix_rows(l), b = t.matrix_cols(l);
                const auto n = circulant_param_count(a, b);
                out.matrices.push_back(circulant_build(a, b, params.subspan(offset, n)));
                offset += n;
            }
            break;
        case PolicyKind::unstructured:
            for (std::size_t l = 0; l < t.num_matrices(); ++l) {
                Matrix m(t.matrix_rows(l), t.matrix_cols(l));
                std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.data().begin());
                offset += m.size();
                out.matrices.push_back(std::move(m));
            }
            break;
        case PolicyKind::masked: out.matrices = masked_effective_matrices(to_masked_state(params)); break;
    }
    return out;
}

SharedWeightPool PolicyModel::to_pool(std::span<const double> params) const {
    if (kind_ != PolicyKind::chromatic) throw ConfigError("to_pool: not a chromatic policy");
    if (params.size() != param_count()) throw DimensionError("to_pool: parameter length mismatch");
    SharedWeightPool pool;
    pool.weights.assign(params.begin(), params.begin() + num_partitions_);
    pool.biases = read_biases(topology_, params, structural_);
    return pool;
}

MaskedPolicyState PolicyModel::to_masked_state(std::span<const double> params) const {
    if (kind_ != PolicyKind::masked) throw ConfigError("to_masked_state: not a masked policy");
    if (params.size() != param_count()) throw DimensionError("to_masked_state: parameter length mismatch");
    MaskedPolicyState s;
    s.alpha = mask_alpha_;
    const auto& t = topology_;
    std::size_t offset = 0;
    for (auto* target : {&s.dense_weights, &s.mask_logits}) {
        for (std::size_t l = 0; l < t.num_matrices(); ++l) {
            Matrix m(t.matrix_rows(l), t.matrix_cols(l));
            std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.data().begin());
            offset += m.size();
            target->push_back(std::move(m));
        }
    }
    s.biases = read_biases(t, params, structural_);
    return s;
}

double PolicyModel::mask_eta(std::span<const double> params) const {
    if (kind_ != PolicyKind::masked) throw ConfigError("mask_eta: not a masked policy");
    if (params.size() != param_count()) throw DimensionError("mask_eta: parameter length mismatch");
    const std::size_t edges = topology_.edge_count();
    std::size_t active = 0;
    for (std::size_t i = edges; i < 2 * edges; ++i) active += mask_active(params[i], mask_alpha_) ? 1 : 0;
    return static_cast<double>(active) / static_cast<double>(edges);
}

std::vector<double> PolicyModel::initial_params(std::uint64_t seed, double init_scale) const {
    Rng rng(seed);
    std::vector<double> params(param_count(), 0.0);
    const std::size_t weights = kind_ == PolicyKind::masked ? topology_.edge_count() : structural_;
    for (std::size_t i = 0; i < weights; ++i) params[i] = init_scale * rng.normal();
    if (kind_ == PolicyKind::masked) {
        const std::size_t edges = topology_.edge_count();
        // Exactly half the gates open, chosen by a seeded shuffle.
        std::vector<std::size_t> order(edges);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = edges; i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
        for (std::size_t k = 0; k < edges; ++k) {
            const double magnitude = rng.uniform(0.05, 0.15);
            params[edges + order[k]] = k < edges / 2 ? magnitude : -magnitude;
        }
    }
    return params;
}

}  // namespace chromatic::topology
