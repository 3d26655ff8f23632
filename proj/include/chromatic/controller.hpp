#pragma once

// Autoregressive recurrent controller defining a distribution over
// partitionings of a fixed edge set into M colors.
//
// Decoding visits edges in canonical order. The step-t input is
//   [ V_edge[e_t] ; V_partition[c_{t-1}] ]   (start token at t = 0)
// fed through a single LSTM cell; the hidden state is projected to M logits,
// divided by the temperature, and c_t is drawn from the softmax.
//
// All trainable parameters live in one flat vector (see ControllerLayout) so
// optimizers, finite-difference checks and checkpoints handle them uniformly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chromatic/common.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::controller {

enum class Optimizer { sgd, adam };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& name);

struct ControllerConfig {
    std::size_t hidden_size = 64;
    std::size_t embed_dim = 16;
    double learning_rate = 0.001;
    double entropy_weight = 0.3;
    double critic_decay = 0.99;
    double temperature = 1.0;
    double init_range = 0.1;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Set the baseline to the first batch's mean reward before the first
    /// update instead of starting from zero.
    bool baseline_warm_start = true;

    void validate() const;
};

/// Offsets of each parameter block inside the flat vector. Matrices are
/// row-major; LSTM gate rows are ordered (input, forget, cell, output).
struct ControllerLayout {
    std::size_t hidden = 0, embed = 0, edges = 0, colors = 0;
    std::size_t w_input = 0;   // 4H x 2d
    std::size_t w_hidden = 0;  // 4H x H
    std::size_t b_gates = 0;   // 4H
    std::size_t edge_embed = 0;       // E x d
    std::size_t partition_embed = 0;  // M x d
    std::size_t start_embed = 0;      // d
    std::size_t w_out = 0;  // M x H
    std::size_t b_out = 0;  // M
    std::size_t total = 0;

    ControllerLayout() = default;
    ControllerLayout(std::size_t hidden, std::size_t embed, std::size_t edges, std::size_t colors);
};

struct ControllerState {
    ControllerConfig config;
    ControllerLayout layout;
    std::vector<double> params;
    double baseline = 0.0;
    // Adam moments and step counter (unused by SGD).
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::uint64_t adam_step = 0;
    std::uint64_t updates = 0;

    std::size_t edge_count() const noexcept { return layout.edges; }
    std::uint32_t num_partitions() const noexcept { return static_cast<std::uint32_t>(layout.colors); }

    std::span<double> block(std::size_t offset, std::size_t size) { return {params.data() + offset, size}; }
    std::span<double> output_weights() { return block(layout.w_out, layout.colors * layout.hidden); }
    std::span<double> output_bias() { return block(layout.b_out, layout.colors); }

    void validate() const;
};

/// Parameters uniform(-init_range, init_range) from `seed`; baseline 0.
ControllerState make_controller(const ControllerConfig& config, std::size_t edge_count, std::uint32_t num_partitions,
                                std::uint64_t seed);

struct SampleBatch {
    std::vector<topology::Partitioning> partitionings;
    std::vector<double> log_probs;
    std::vector<double> entropies;  // sum over steps of the per-step categorical entropy (nats)
};

/// Sample i is drawn with Rng(derive_seed(seed, {i})), so samples are
/// independent of each other and of k.
SampleBatch sample_partitionings(const ControllerState& state, std::size_t k, std::uint64_t seed);

struct SequenceEvaluation {
    double log_prob = 0.0;
    double entropy = 0.0;
    std::vector<std::vector<double>> step_probabilities;  // filled on request
};

/// Teacher-forced decoding of `assignment`.
SequenceEvaluation evaluate_sequence(const ControllerState& state, std::span<const std::uint32_t> assignment,
                                     bool keep_step_probabilities = false);

double log_prob(const ControllerState& state, const topology::Partitioning& partitioning);

/// J = (1/k) sum_i (R_i - baseline) log p(P_i) + w_ent (1/k) sum_i H(P_i)
double surrogate_objective(const ControllerState& state, std::span<const topology::Partitioning> partitionings,
                           std::span<const double> rewards, double baseline);

/// dJ/dtheta by backpropagation through the unrolled decoder (entropy terms
/// differentiated along the given prefixes).
std::vector<double> surrogate_gradient(const ControllerState& state,
                                       std::span<const topology::Partitioning> partitionings,
                                       std::span<const double> rewards, double baseline);

/// One ascent step on J at the current baseline (warm-started on the first
/// update if configured), then
/// baseline <- decay * baseline + (1 - decay) * mean(R).
void controller_update(ControllerState& state, std::span<const topology::Partitioning> partitionings,
                       std::span<const double> rewards);

inline void controller_update(ControllerState& state, const SampleBatch& batch, std::span<const double> rewards) {
    controller_update(state, batch.partitionings, rewards);
}

}  // namespace chromatic::controller
