#include "chromatic/simd.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace chromatic::simd::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_neon(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_neon(a + r * cols, x, cols);
}

void gemv_t_neon(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) axpy_neon(x[r], a + r * cols, y, cols);
}

// No gather instruction on NEON; two independent accumulators.
double gather_sum_neon(const double* x, const std::uint32_t* idx, std::size_t n) {
    double s0 = 0.0;
    double s1 = 0.0;
    std::size_t k = 0;
    for (; k + 2 <= n; k += 2) {
        s0 += x[idx[k]];
        s1 += x[idx[k + 1]];
    }
    if (k < n) s0 += x[idx[k]];
    return s0 + s1;
}

}  // namespace

const KernelTable neon_table{
    Isa::neon, dot_neon, axpy_neon, gemv_neon, gemv_t_neon, gather_sum_neon,
};

}  // namespace chromatic::simd::detail

#endif
