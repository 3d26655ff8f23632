#include "chromatic/es.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "chromatic/simd.hpp"

namespace chromatic::es {

void EsConfig::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("ES sigma must be positive");
    if (!(step_size > 0.0)) throw ConfigError("ES step size must be positive");
    if (num_perturbations == 0) throw ConfigError("ES needs at least one perturbation");
}

std::vector<double> perturbation_from_seed(std::uint64_t seed, std::size_t dim) {
    if (dim == 0) throw DimensionError("perturbation dimension must be positive");
    Rng rng(seed);
    std::vector<double> g(dim);
    for (double& v : g) v = rng.normal();
    return g;
}

std::vector<double> es_gradient(const EsConfig& config, std::span<const PerturbedLoss> perturbed, double pivot) {
    if (!(config.sigma > 0.0)) throw ConfigError("ES sigma must be positive");
    if (perturbed.empty()) throw ValueError("es_gradient: no perturbations");
    if (!std::isfinite(pivot)) throw ValueError("es_gradient: non-finite pivot");
    const std::size_t dim = perturbed.front().direction.size();
    const auto& k = simd::kernels();
    std::vector<double> grad(dim, 0.0);
    const double scale = 1.0 / (static_cast<double>(perturbed.size()) * config.sigma);
    for (const auto& p : perturbed) {
        if (p.direction.size() != dim) throw DimensionError("es_gradient: perturbation dimensions differ");
        if (!std::isfinite(p.loss)) throw ValueError("es_gradient: non-finite loss");
        k.axpy((p.loss - pivot) * scale, p.direction.data(), grad.data(), dim);
    }
    return grad;
}

void apply_update(std::span<double> params, std::span<const double> gradient, const EsConfig& config) {
    if (gradient.size() > params.size()) {
        throw DimensionError("apply_update: gradient has " + std::to_string(gradient.size()) +
                             " entries for " + std::to_string(params.size()) + " params");
    }
    simd::kernels().axpy(-config.step_size, gradient.data(), params.data(), gradient.size());
}

Normalizer::Normalizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void Normalizer::update(std::span<const double> obs) {
    if (obs.size() != dim()) throw DimensionError("normalizer: observation dimension mismatch");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const double delta = obs[i] - mean_[i];
        mean_[i] += delta / n;
        m2_[i] += delta * (obs[i] - mean_[i]);
    }
}

void Normalizer::merge(const Normalizer& other) {
    if (other.count_ == 0) return;
    if (other.dim() != dim()) throw DimensionError("normalizer: merge dimension mismatch");
    if (count_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    for (std::size_t i = 0; i < dim(); ++i) {
        const double delta = other.mean_[i] - mean_[i];
        mean_[i] += delta * nb / n;
        m2_[i] += other.m2_[i] + delta * delta * na * nb / n;
    }
    count_ += other.count_;
}

std::vector<double> Normalizer::stddev() const {
    std::vector<double> sd(dim(), 0.0);
    if (count_ < 2) return sd;
    for (std::size_t i = 0; i < dim(); ++i) sd[i] = std::sqrt(std::max(m2_[i], 0.0) / static_cast<double>(count_ - 1));
    return sd;
}

std::vector<double> Normalizer::normalize(std::span<const double> obs) const {
    std::vector<double> out(obs.size());
    normalize_into(obs, out);
    return out;
}

void Normalizer::normalize_into(std::span<const double> obs, std::span<double> out) const {
    if (obs.size() != dim() || out.size() != dim()) throw DimensionError("normalizer: observation dimension mismatch");
    if (count_ < 2) {
        std::copy(obs.begin(), obs.end(), out.begin());
        return;
    }
    const double denom = static_cast<double>(count_ - 1);
    for (std::size_t i = 0; i < dim(); ++i) {
        const double sd = std::sqrt(std::max(m2_[i], 0.0) / denom);
        out[i] = (obs[i] - mean_[i]) / std::max(sd, 1e-8);
    }
}

Normalizer Normalizer::from_state(std::uint64_t count, std::vector<double> mean, std::vector<double> m2) {
    if (mean.size() != m2.size()) throw DimensionError("normalizer: mean/M2 length mismatch");
    require_finite(mean, "normalizer mean");
    require_finite(m2, "normalizer M2");
    for (double v : m2) {
        if (v < 0.0) throw ValueError("normalizer: negative M2");
    }
    Normalizer n;
    n.count_ = count;
    n.mean_ = std::move(mean);
    n.m2_ = std::move(m2);
    return n;
}

std::vector<double> normalize_rewards(std::span<const double> rewards) {
    if (rewards.empty()) return {};
    require_finite(rewards, "rewards");
    // A constant batch maps to exact zeros (the floating mean may be off by an ulp).
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) {
        return std::vector<double>(rewards.size(), 0.0);
    }
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

}  // namespace chromatic::es
