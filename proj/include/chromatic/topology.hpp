#pragma once

// Feedforward policy architectures and their weight parameterizations.
//
// A layer matrix of shape a x b maps an input of dimension a to an output of
// dimension b: out[j] = tanh(sum_i in[i] * W(i, j) + bias[j]). tanh follows
// every layer including the output layer.
//
// Edges are enumerated layer by layer and row-major inside each matrix; an
// edge's position in that enumeration is its index into a Partitioning.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromatic/common.hpp"

namespace chromatic::topology {

struct NetworkTopology {
    std::vector<std::size_t> layer_dims;

    /// Throws InvalidTopology for fewer than two layers or a zero dimension.
    void validate() const;

    std::size_t num_matrices() const noexcept { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t matrix_rows(std::size_t layer) const { return layer_dims.at(layer); }
    std::size_t matrix_cols(std::size_t layer) const { return layer_dims.at(layer + 1); }

    std::size_t edge_count() const noexcept;
    std::size_t bias_count() const noexcept;
    /// Index of the first edge of `layer` in the global enumeration.
    std::size_t edge_offset(std::size_t layer) const;

    /// "L", "H41", "H41,H41" (any hidden sizes), or explicit hidden dims
    /// such as "64,32". Input/output dims come from the environment.
    static NetworkTopology from_arch(std::string_view arch, std::size_t input_dim, std::size_t output_dim);

    friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;
};

std::string describe(const NetworkTopology& topology);

struct EdgeRef {
    std::size_t layer;
    std::size_t row;
    std::size_t col;

    friend bool operator==(const EdgeRef&, const EdgeRef&) = default;
};

std::vector<EdgeRef> enumerate_edges(const NetworkTopology& topology);

struct Partitioning {
    std::uint32_t num_partitions = 1;
    std::vector<std::uint32_t> assignment;

    /// Throws DimensionError / ValueError on length or color-range violations.
    void validate(const NetworkTopology& topology) const;

    friend bool operator==(const Partitioning&, const Partitioning&) = default;
};

Partitioning uniform_random_partitioning(const NetworkTopology& topology, std::uint32_t num_partitions, Rng& rng);

struct SharedWeightPool {
    std::vector<double> weights;
    std::vector<std::vector<double>> biases;
};

/// Zero biases, zero weights, shaped for the topology.
SharedWeightPool zero_pool(const NetworkTopology& topology, std::uint32_t num_partitions);

std::vector<Matrix> build_weight_matrices(const NetworkTopology& topology, const Partitioning& partitioning,
                                          const SharedWeightPool& pool);

/// Forward pass through explicit matrices; tanh after every layer.
std::vector<double> dense_forward(const NetworkTopology& topology, std::span<const Matrix> matrices,
                                  std::span<const std::vector<double>> biases, std::span<const double> observation);

std::vector<double> chromatic_forward(const NetworkTopology& topology, const Partitioning& partitioning,
                                      const SharedWeightPool& pool, std::span<const double> observation);

/// One layer of a chromatic network regrouped by color: for each output
/// column the input rows are bucketed by color, so
///   y[j] = sum_c weights[c] * sum_{rows r with color c in column j} x[r].
/// The row buckets are summed with the gather kernel.
class ColorGroupedLayer {
public:
    ColorGroupedLayer(const NetworkTopology& topology, const Partitioning& partitioning, std::size_t layer);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::uint32_t num_partitions() const noexcept { return num_partitions_; }

    std::vector<double> apply(std::span<const double> weights, std::span<const double> x) const;

private:
    struct Group {
        std::uint32_t color;
        std::uint32_t begin;  // into rows_by_group_
        std::uint32_t end;
    };
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::uint32_t num_partitions_ = 0;
    std::vector<std::uint32_t> column_begin_;  // cols_ + 1 offsets into groups_
    std::vector<Group> groups_;
    std::vector<std::uint32_t> rows_by_group_;
};

std::vector<double> color_grouped_matvec(const ColorGroupedLayer& layer, std::span<const double> weights,
                                         std::span<const double> x);

// ---------------------------------------------------------------------------
// Structured baselines
// ---------------------------------------------------------------------------

/// a x b matrix constant along diagonals: entry(i, j) = params[j - i] for
/// j >= i, params[b - 1 + i - j] for i > j.
Matrix toeplitz_build(std::size_t a, std::size_t b, std::span<const double> params);
std::size_t toeplitz_param_count(std::size_t a, std::size_t b);

/// Top-left a x b block of the n x n circulant (n = max(a, b)) whose row i
/// is row 0 cyclically right-shifted by i: entry(i, j) = params[(j - i) mod n].
Matrix circulant_build(std::size_t a, std::size_t b, std::span<const double> params);
std::size_t circulant_param_count(std::size_t a, std::size_t b);

std::size_t toeplitz_param_count(const NetworkTopology& topology);
std::size_t circulant_param_count(const NetworkTopology& topology);
std::size_t unstructured_param_count(const NetworkTopology& topology);

// ---------------------------------------------------------------------------
// Masked (pruned) policies
// ---------------------------------------------------------------------------

struct MaskedPolicyState {
    std::vector<Matrix> dense_weights;
    std::vector<Matrix> mask_logits;
    std::vector<std::vector<double>> biases;
    double alpha = 0.01;
    double beta = 1.0;

    void validate(const NetworkTopology& topology) const;
};

/// Two-way softmax of (logit, 0) at temperature alpha: logistic(logit / alpha).
double mask_gate(double logit, double alpha);
/// Binarized gate used in the forward pass.
bool mask_active(double logit, double alpha);

std::vector<Matrix> masked_effective_matrices(const MaskedPolicyState& state);
std::vector<double> masked_forward(const MaskedPolicyState& state, const NetworkTopology& topology,
                                   std::span<const double> observation);

struct MaskedParams {
    std::size_t count;  // active gates
    double eta;         // active fraction
};
MaskedParams masked_effective_params(const MaskedPolicyState& state);

/// beta * reward + (1 - beta) * (1 - eta); inputs taken as already normalized.
double masked_objective(double reward_normalized, double eta, double beta);

/// Batch form: standardizes rewards and (1 - eta) across the batch
/// (mean-centred, divided by max(std, 1e-8)) then combines with beta.
std::vector<double> masked_objective_batch(std::span<const double> rewards, std::span<const double> etas, double beta);

// ---------------------------------------------------------------------------
// Parameterized policy models
// ---------------------------------------------------------------------------

enum class PolicyKind { chromatic, toeplitz, circulant, masked, unstructured };

std::string_view to_string(PolicyKind kind) noexcept;
PolicyKind parse_policy_kind(std::string_view name);

/// Bits to store a policy with float32 values. chromatic: 32*(M + biases) +
/// edges*ceil(log2 M); masked: 32*(active + biases) + one bit per edge;
/// others: 32*(weight params + biases). `count` is M for chromatic, the
/// active weight count for masked, ignored otherwise.
std::uint64_t bits_estimate(PolicyKind kind, const NetworkTopology& topology, std::size_t count);

struct RealizedPolicy {
    std::vector<Matrix> matrices;
    std::vector<std::vector<double>> biases;
};

/// Binds a topology and parameterization to a flat trainable vector theta:
///   [structural params ... | biases (layer by layer)]
/// where the structural block is
///   chromatic    M shared weights
///   toeplitz     per layer a+b-1 diagonal values
///   circulant    per layer max(a,b) values
///   unstructured per layer a*b values (row-major)
///   masked       per layer a*b weights, then per layer a*b mask logits
class PolicyModel {
public:
    PolicyModel(PolicyKind kind, NetworkTopology topology, std::uint32_t num_partitions = 1, double mask_alpha = 0.01);

    PolicyKind kind() const noexcept { return kind_; }
    const NetworkTopology& topology() const noexcept { return topology_; }
    std::uint32_t num_partitions() const noexcept { return num_partitions_; }
    double mask_alpha() const noexcept { return mask_alpha_; }

    std::size_t structural_param_count() const noexcept { return structural_; }
    std::size_t param_count() const noexcept { return structural_ + topology_.bias_count(); }

    /// "# weight-params": M, the structured counts, or active mask entries.
    std::size_t weight_param_count(std::span<const double> params) const;

    /// `assignment` is required (and only used) for chromatic models.
    RealizedPolicy realize(std::span<const double> params, std::span<const std::uint32_t> assignment = {}) const;

    SharedWeightPool to_pool(std::span<const double> params) const;
    MaskedPolicyState to_masked_state(std::span<const double> params) const;

    /// Fraction of active mask gates (masked models only).
    double mask_eta(std::span<const double> params) const;

    /// Seeded initial theta: structural weights ~ N(0, init_scale^2), biases
    /// zero; masked logits are +-U(0.05, 0.15) with exactly floor(n/2) positive.
    std::vector<double> initial_params(std::uint64_t seed, double init_scale) const;

private:
    PolicyKind kind_;
    NetworkTopology topology_;
    std::uint32_t num_partitions_;
    double mask_alpha_;
    std::size_t structural_ = 0;
};

std::vector<double> policy_forward(const NetworkTopology& topology, const RealizedPolicy& realized,
                                   std::span<const double> observation);

}  // namespace chromatic::topology
