#include <atomic>
#include <cstdlib>
#include <string>

#include "chromatic/common.hpp"
#include "chromatic/simd.hpp"

namespace chromatic::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* best_table() noexcept {
    // CHROMATIC_SIMD=scalar forces the reference kernels.
    if (const char* env = std::getenv("CHROMATIC_SIMD"); env != nullptr && std::string(env) == "scalar") {
        return &detail::scalar_table;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) return &detail::avx2_table;
#endif
#if defined(__aarch64__)
    return &detail::neon_table;
#endif
    return &detail::scalar_table;
}

std::atomic<const KernelTable*>& active_slot() noexcept {
    static std::atomic<const KernelTable*> slot{best_table()};
    return slot;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

bool isa_supported(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2: return cpu_has_avx2();
        case Isa::neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa)) {
        throw Error("SIMD variant not supported on this CPU: " + std::string(to_string(isa)));
    }
    switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx2: return detail::avx2_table;
#endif
#if defined(__aarch64__)
        case Isa::neon: return detail::neon_table;
#endif
        default: return detail::scalar_table;
    }
}

const KernelTable& kernels() noexcept { return *active_slot().load(std::memory_order_acquire); }

Isa active_isa() noexcept { return kernels().isa; }

ScopedIsa::ScopedIsa(Isa isa) : previous_(&kernels()) {
    active_slot().store(&kernels_for(isa), std::memory_order_release);
}

ScopedIsa::~ScopedIsa() { active_slot().store(previous_, std::memory_order_release); }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("simd::dot: length mismatch");
    return kernels().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw DimensionError("simd::axpy: length mismatch");
    kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace chromatic::simd
