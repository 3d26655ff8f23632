#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "chromatic/analysis.hpp"

namespace chromatic::analysis {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    }
    return out;
}

}  // namespace

std::string_view to_string(BandPair pair) noexcept { return pair == BandPair::sylvester ? "sylvester" : "hankel"; }

BandPair parse_band_pair(std::string_view name) {
    if (name == "sylvester") return BandPair::sylvester;
    if (name == "hankel") return BandPair::hankel;
    throw ConfigError("unknown band pair '" + std::string(name) + "' (expected sylvester or hankel)");
}

Matrix shift_matrix(std::size_t n, double corner) {
    Matrix z(n, n);
    for (std::size_t i = 1; i < n; ++i) z(i, i - 1) = 1.0;
    if (n > 0) z(0, n - 1) += corner;
    return z;
}

std::pair<Matrix, Matrix> band_pair(BandPair pair, std::size_t n) {
    Matrix f = shift_matrix(n, 1.0);
    Matrix a = shift_matrix(n, 0.0);
    if (pair == BandPair::hankel) {
        Matrix t(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) t(i, j) = a(j, i);
        }
        a = std::move(t);
    }
    return {std::move(f), std::move(a)};
}

Matrix embed_square(const Matrix& m) {
    const std::size_t n = std::max(m.rows(), m.cols());
    Matrix out(n, n);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    }
    return out;
}

std::size_t displacement_rank(const Matrix& r, const Matrix& f, const Matrix& a, double threshold) {
    if (!(threshold >= 0.0)) throw ValueError("displacement_rank: threshold must be >= 0");
    if (f.rows() != f.cols() || a.rows() != a.cols() || f.cols() != r.rows() || r.cols() != a.rows()) {
        throw DimensionError("displacement_rank: F (" + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                             "), R (" + std::to_string(r.rows()) + "x" + std::to_string(r.cols()) + ") and A (" +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ") are not conformable");
    }
    if (r.size() == 0) return 0;
    const Eigen::MatrixXd er = to_eigen(r);
    Eigen::MatrixXd d = to_eigen(f) * er - er * to_eigen(a);
    d = d.unaryExpr([threshold](double x) { return std::abs(x) < threshold ? 0.0 : x; });
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cutoff = 1e-10 * s(0);
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > cutoff ? 1 : 0;
    return rank;
}

std::size_t layer_displacement_rank(const Matrix& weights, BandPair pair, double threshold) {
    const Matrix square = embed_square(weights);
    const auto [f, a] = band_pair(pair, square.rows());
    return displacement_rank(square, f, a, threshold);
}

}  // namespace chromatic::analysis
