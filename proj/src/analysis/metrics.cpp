#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "chromatic/analysis.hpp"

namespace chromatic::analysis {

namespace {

void require_same_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": partitions have lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
}

std::uint64_t pairs(std::uint64_t n) { return n * (n - (n > 0 ? 1 : 0)) / 2; }

struct Contingency {
    std::map<std::uint32_t, std::uint64_t> rows;
    std::map<std::uint32_t, std::uint64_t> cols;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> cells;
};

Contingency contingency(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    Contingency c;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++c.rows[a[i]];
        ++c.cols[b[i]];
        ++c.cells[{a[i], b[i]}];
    }
    return c;
}

}  // namespace

double partition_entropy(std::span<const std::uint32_t> assignment) {
    if (assignment.empty()) throw ValueError("partition_entropy: empty assignment");
    std::unordered_map<std::uint32_t, std::uint64_t> counts;
    for (std::uint32_t c : assignment) ++counts[c];
    if (counts.size() == 1) return 0.0;
    const double n = static_cast<double>(assignment.size());
    double h = 0.0;
    for (const auto& [color, count] : counts) {
        const double p = static_cast<double>(count) / n;
        h -= p * std::log2(p);
    }
    return h;
}

double uniform_entropy(std::uint32_t num_partitions) {
    if (num_partitions == 0) throw ValueError("uniform_entropy: M must be >= 1");
    return std::log2(static_cast<double>(num_partitions));
}

double rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    require_same_length(a, b, "rand_index");
    const std::uint64_t total = pairs(a.size());
    if (total == 0) return 1.0;
    const Contingency c = contingency(a, b);
    std::uint64_t same_both = 0, same_a = 0, same_b = 0;
    for (const auto& [key, n] : c.cells) same_both += pairs(n);
    for (const auto& [key, n] : c.rows) same_a += pairs(n);
    for (const auto& [key, n] : c.cols) same_b += pairs(n);
    // agreements = pairs together in both + pairs apart in both
    const std::uint64_t agree = total + 2 * same_both - same_a - same_b;
    return static_cast<double>(agree) / static_cast<double>(total);
}

double variation_of_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    require_same_length(a, b, "variation_of_information");
    if (a.empty()) return 0.0;
    const Contingency c = contingency(a, b);
    const double n = static_cast<double>(a.size());
    double vi = 0.0;
    for (const auto& [key, count] : c.cells) {
        const double r = static_cast<double>(count) / n;
        const double p = static_cast<double>(c.rows.at(key.first)) / n;
        const double q = static_cast<double>(c.cols.at(key.second)) / n;
        vi -= r * (std::log2(r / p) + std::log2(r / q));
    }
    return vi > 0.0 ? vi : 0.0;
}

std::size_t partition_distance(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    require_same_length(a, b, "partition_distance");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
    return d;
}

}  // namespace chromatic::analysis
