#pragma once

// Data-parallel inner loops used by policy inference, the controller's
// recurrent cell and ES gradient accumulation.
//
// Every kernel has a scalar reference implementation; vector variants
// (AVX2+FMA on x86-64, NEON on AArch64) are selected once at startup from
// CPU feature detection and are equivalence-tested against the reference.
// Vector variants reassociate sums, so results agree with the reference to
// rounding, not bit-for-bit. Within one process all callers go through the
// same table, which keeps every run deterministic.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace chromatic::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
    Isa isa;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// y = A x, A row-major rows x cols
    void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
    /// y = A^T x, i.e. y[j] = sum_i x[i] * A[i, j]
    void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
    /// sum_k x[idx[k]]
    double (*gather_sum)(const double* x, const std::uint32_t* idx, std::size_t n);
};

bool isa_supported(Isa isa) noexcept;

/// Table for a specific ISA; throws chromatic::Error if unsupported here.
const KernelTable& kernels_for(Isa isa);

/// Active table (best supported ISA unless overridden).
const KernelTable& kernels() noexcept;
Isa active_isa() noexcept;

/// Replaces the active table until destruction. Not thread-safe against
/// concurrent kernel use; intended for tests and benchmarks.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa);
    ~ScopedIsa();
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    const KernelTable* previous_;
};

// Span conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace detail {
extern const KernelTable scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable avx2_table;
#endif
#if defined(__aarch64__)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace chromatic::simd
