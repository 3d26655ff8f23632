#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "chromatic/es.hpp"

using namespace chromatic;
using namespace chromatic::es;

namespace {

struct Sampled {
    std::vector<std::vector<double>> directions;
    std::vector<double> losses;
};

template <class Loss>
Sampled sample(std::size_t n, std::size_t dim, const std::vector<double>& w, double sigma, Loss loss,
               std::uint64_t base) {
    Sampled s;
    s.directions.reserve(n);
    s.losses.reserve(n);
    std::vector<double> shifted(dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = perturbation_from_seed(derive_seed(base, {i}), dim);
        for (std::size_t d = 0; d < dim; ++d) shifted[d] = w[d] + sigma * g[d];
        s.losses.push_back(loss(shifted));
        s.directions.push_back(std::move(g));
    }
    return s;
}

std::vector<double> estimate(const Sampled& s, double sigma, double pivot) {
    std::vector<PerturbedLoss> pl;
    for (std::size_t i = 0; i < s.losses.size(); ++i) pl.push_back({s.directions[i], s.losses[i]});
    EsConfig cfg;
    cfg.sigma = sigma;
    return es_gradient(cfg, pl, pivot);
}

double relative_error(const std::vector<double>& got, const std::vector<double>& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_SUITE("es") {

TEST_CASE("perturbations are deterministic and distinct") {
    CHECK(perturbation_from_seed(42, 7) == perturbation_from_seed(42, 7));
    CHECK(perturbation_from_seed(42, 7) != perturbation_from_seed(43, 7));
    const auto longer = perturbation_from_seed(42, 9);
    const auto shorter = perturbation_from_seed(42, 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(longer[i] == shorter[i]);
}

TEST_CASE("perturbation moments over 1e5 seeds") {
    const std::size_t n = 100000, dim = 4;
    std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = perturbation_from_seed(derive_seed(2024, {i}), dim);
        for (std::size_t d = 0; d < dim; ++d) {
            sum[d] += g[d];
            sq[d] += g[d] * g[d];
        }
    }
    for (std::size_t d = 0; d < dim; ++d) {
        const double mean = sum[d] / n;
        const double var = sq[d] / n - mean * mean;
        CHECK(mean > -0.02);
        CHECK(mean < 0.02);
        CHECK(var > 0.97);
        CHECK(var < 1.03);
    }
}

TEST_CASE("estimator arithmetic") {
    const std::vector<double> g1{1.0, -2.0}, g2{0.5, 0.0};
    EsConfig cfg;
    cfg.sigma = 0.5;
    SUBCASE("equal losses give zero") {
        const std::vector<PerturbedLoss> pl{{g1, 3.0}, {g2, 3.0}};
        for (double v : es_gradient(cfg, pl, 3.0)) CHECK(v == 0.0);
    }
    SUBCASE("formula") {
        const std::vector<PerturbedLoss> pl{{g1, 4.0}, {g2, 1.0}};
        const auto grad = es_gradient(cfg, pl, 2.0);
        // (1/2) * [ (1,-2)*(2)/0.5 + (0.5,0)*(-1)/0.5 ]
        CHECK(grad[0] == doctest::Approx(0.5 * (4.0 - 1.0)));
        CHECK(grad[1] == doctest::Approx(0.5 * (-8.0)));
    }
    SUBCASE("shifting every loss and the pivot together changes nothing") {
        const std::vector<PerturbedLoss> a{{g1, 4.0}, {g2, 1.0}};
        const std::vector<PerturbedLoss> b{{g1, 14.0}, {g2, 11.0}};
        const auto ga = es_gradient(cfg, a, 2.0);
        const auto gb = es_gradient(cfg, b, 12.0);
        for (std::size_t i = 0; i < 2; ++i) CHECK(ga[i] == doctest::Approx(gb[i]));
    }
    SUBCASE("linear in the losses") {
        const std::vector<PerturbedLoss> a{{g1, 4.0}, {g2, 1.0}};
        const std::vector<PerturbedLoss> b{{g1, 12.0}, {g2, 3.0}};
        const auto ga = es_gradient(cfg, a, 0.0);
        const auto gb = es_gradient(cfg, b, 0.0);
        for (std::size_t i = 0; i < 2; ++i) CHECK(gb[i] == doctest::Approx(3.0 * ga[i]));
    }
    SUBCASE("errors") {
        CHECK_THROWS(es_gradient(cfg, std::vector<PerturbedLoss>{}, 0.0));
        const std::vector<PerturbedLoss> bad{{g1, std::numeric_limits<double>::infinity()}};
        CHECK_THROWS(es_gradient(cfg, bad, 0.0));
        CHECK_THROWS(es_gradient(cfg, std::vector<PerturbedLoss>{{g1, 1.0}}, std::nan("")));
    }
}

TEST_CASE("estimator is unbiased for a linear loss") {
    const std::vector<double> c{1.0, -2.0, 0.5, 3.0, -1.5};
    const std::vector<double> w{0.3, 0.1, -0.7, 0.2, 0.0};
    auto loss = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * x[i];
        return s;
    };
    const auto s = sample(100000, 5, w, 0.1, loss, 77);
    CHECK(relative_error(estimate(s, 0.1, loss(w)), c) <= 0.02);
}

TEST_CASE("estimator recovers the smoothed gradient of a quadratic") {
    const std::vector<double> w{1.0, 0.0};
    auto loss = [](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; };
    const auto s = sample(100000, 2, w, 0.1, loss, 78);
    CHECK(relative_error(estimate(s, 0.1, loss(w)), {2.0, 0.0}) <= 0.05);
}

TEST_CASE("apply_update") {
    EsConfig cfg;
    std::vector<double> p{1.0, 2.0, 3.0};
    apply_update(p, std::vector<double>{0.0, 0.0, 0.0}, cfg);
    CHECK(p == std::vector<double>{1.0, 2.0, 3.0});
    apply_update(p, std::vector<double>{1.0, 1.0, 1.0}, cfg);
    CHECK(p[0] == doctest::Approx(0.99));
    CHECK(p[2] == doctest::Approx(2.99));

    std::vector<double> a{0.5, -0.5}, b{0.5, -0.5};
    const std::vector<double> g1{0.3, 1.1}, g2{-2.0, 0.7};
    apply_update(a, g1, cfg);
    apply_update(a, g2, cfg);
    apply_update(b, std::vector<double>{g1[0] + g2[0], g1[1] + g2[1]}, cfg);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-14));

    std::vector<double> prefix{1.0, 1.0, 1.0};
    apply_update(prefix, std::vector<double>{1.0}, cfg);
    CHECK(prefix == std::vector<double>{0.99, 1.0, 1.0});
    CHECK_THROWS_AS(apply_update(prefix, std::vector<double>(4, 0.0), cfg), DimensionError);
}

TEST_CASE("config validation") {
    EsConfig cfg;
    CHECK(cfg.sigma == 0.1);
    CHECK(cfg.step_size == 0.01);
    CHECK(cfg.perturb_biases);
    cfg.sigma = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.sigma = 0.1;
    cfg.step_size = -1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("normalizer") {
    SUBCASE("identity before two observations") {
        Normalizer n(2);
        const std::vector<double> x{3.0, -4.0};
        CHECK(n.normalize(x) == x);
        n.update(x);
        CHECK(n.normalize(x) == x);
    }
    SUBCASE("hand computation") {
        Normalizer n(1);
        n.update(std::vector<double>{1.0});
        n.update(std::vector<double>{3.0});
        CHECK(n.mean()[0] == 2.0);
        CHECK(n.m2()[0] == 2.0);
        // Sample standard deviation sqrt(M2 / (n - 1)) = sqrt(2).
        CHECK(n.stddev()[0] == doctest::Approx(std::sqrt(2.0)));
        CHECK(n.normalize(std::vector<double>{3.0})[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    }
    SUBCASE("constant stream normalizes to zero") {
        Normalizer n(1);
        for (int i = 0; i < 10; ++i) n.update(std::vector<double>{5.0});
        CHECK(n.normalize(std::vector<double>{5.0})[0] == 0.0);
    }
    SUBCASE("matches a two-pass computation") {
        Rng rng(1);
        Normalizer n(3);
        std::vector<std::vector<double>> xs;
        for (int i = 0; i < 5000; ++i) {
            xs.push_back({rng.uniform(-1, 1) * 1000 + 1e6, rng.normal(), rng.uniform(0, 1e-3)});
            n.update(xs.back());
        }
        for (std::size_t d = 0; d < 3; ++d) {
            double mean = 0.0;
            for (const auto& x : xs) mean += x[d];
            mean /= xs.size();
            double ss = 0.0;
            for (const auto& x : xs) ss += (x[d] - mean) * (x[d] - mean);
            const double sd = std::sqrt(ss / (xs.size() - 1));
            CHECK(std::abs(n.mean()[d] - mean) <= 1e-9 * std::abs(mean));
            CHECK(std::abs(n.stddev()[d] - sd) <= 1e-9 * sd);
        }
    }
    SUBCASE("merge equals sequential updates") {
        Rng rng(2);
        Normalizer all(2), left(2), right(2);
        for (int i = 0; i < 300; ++i) {
            const std::vector<double> x{rng.normal(), rng.uniform(-5, 5)};
            all.update(x);
            (i < 120 ? left : right).update(x);
        }
        left.merge(right);
        CHECK(left.count() == all.count());
        for (std::size_t d = 0; d < 2; ++d) {
            CHECK(left.mean()[d] == doctest::Approx(all.mean()[d]).epsilon(1e-12));
            CHECK(left.m2()[d] == doctest::Approx(all.m2()[d]).epsilon(1e-12));
        }
        Normalizer empty;
        Normalizer copy = all;
        copy.merge(empty);
        CHECK(copy == all);
    }
    SUBCASE("state restore is validated") {
        CHECK_THROWS(Normalizer::from_state(3, {0.0}, {0.0, 1.0}));
        CHECK_THROWS(Normalizer::from_state(3, {0.0}, {-1.0}));
        CHECK_NOTHROW(Normalizer::from_state(3, {0.0}, {1.0}));
    }
}

TEST_CASE("reward normalization") {
    for (double v : normalize_rewards(std::vector<double>{4.0, 4.0, 4.0})) CHECK(v == 0.0);
    const auto two = normalize_rewards(std::vector<double>{0.0, 2.0});
    CHECK(two[0] == doctest::Approx(-1.0));
    CHECK(two[1] == doctest::Approx(1.0));

    const std::vector<double> r{-3.0, 1.0, 7.5, 2.0};
    std::vector<double> affine;
    for (double v : r) affine.push_back(10.0 * v + 4.0);
    const auto a = normalize_rewards(r);
    const auto b = normalize_rewards(affine);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

}  // TEST_SUITE
