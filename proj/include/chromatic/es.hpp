#pragma once

// Evolution-strategies weight optimizer: seeded Gaussian perturbations, the
// forward finite-difference gradient estimator with an externally supplied
// pivot, plain gradient steps, and observation/reward normalization.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chromatic/common.hpp"

namespace chromatic::es {

struct EsConfig {
    double sigma = 0.1;
    double step_size = 0.01;
    std::size_t num_perturbations = 1;
    bool perturb_biases = true;

    void validate() const;
};

/// g ~ N(0, I_dim) as a pure function of (seed, dim): an Rng seeded with
/// `seed` produces Box-Muller normals in order. A longer vector from the same
/// seed extends a shorter one.
std::vector<double> perturbation_from_seed(std::uint64_t seed, std::size_t dim);

struct PerturbedLoss {
    std::span<const double> direction;  // g_i
    double loss;                        // L(w + sigma g_i)
};

/// (1/t) * sum_i g_i * (L_i - pivot) / sigma
std::vector<double> es_gradient(const EsConfig& config, std::span<const PerturbedLoss> perturbed, double pivot);

/// params[i] -= step_size * gradient[i] for i < gradient.size(); the gradient
/// may cover a prefix of params (biases excluded when not perturbed).
void apply_update(std::span<double> params, std::span<const double> gradient, const EsConfig& config);

/// Running per-dimension mean / M2 (Welford), mergeable with Chan's formula.
class Normalizer {
public:
    Normalizer() = default;
    explicit Normalizer(std::size_t dim);

    std::size_t dim() const noexcept { return mean_.size(); }
    std::uint64_t count() const noexcept { return count_; }
    std::span<const double> mean() const noexcept { return mean_; }
    std::span<const double> m2() const noexcept { return m2_; }

    void update(std::span<const double> obs);
    void merge(const Normalizer& other);

    /// Sample standard deviation sqrt(M2 / (n - 1)) per dimension.
    std::vector<double> stddev() const;

    /// Identity until count >= 2, then (obs - mean) / max(std, 1e-8).
    std::vector<double> normalize(std::span<const double> obs) const;
    void normalize_into(std::span<const double> obs, std::span<double> out) const;

    /// Restores a serialized state; validates shapes and ranges.
    static Normalizer from_state(std::uint64_t count, std::vector<double> mean, std::vector<double> m2);

    friend bool operator==(const Normalizer&, const Normalizer&) = default;

private:
    std::uint64_t count_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

inline Normalizer update_normalizer(Normalizer norm, std::span<const double> obs) {
    norm.update(obs);
    return norm;
}

inline std::vector<double> normalize_observation(const Normalizer& norm, std::span<const double> obs) {
    return norm.normalize(obs);
}

/// (r - mean) / max(std, 1e-8) with the population standard deviation.
std::vector<double> normalize_rewards(std::span<const double> rewards);

}  // namespace chromatic::es
