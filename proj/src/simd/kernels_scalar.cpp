#include "chromatic/simd.hpp"

namespace chromatic::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(a + r * cols, x, cols);
}

void gemv_t_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], a + r * cols, y, cols);
}

double gather_sum_scalar(const double* x, const std::uint32_t* idx, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += x[idx[k]];
    return s;
}

}  // namespace

const KernelTable scalar_table{
    Isa::scalar, dot_scalar, axpy_scalar, gemv_scalar, gemv_t_scalar, gather_sum_scalar,
};

}  // namespace chromatic::simd::detail
