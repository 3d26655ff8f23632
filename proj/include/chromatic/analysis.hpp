#pragma once

// Partition and weight-matrix diagnostics: color entropy, displacement rank,
// and the clustering comparisons RandIndex, Variation of Information and
// Hamming distance. Entropies are in bits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chromatic/common.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::analysis {

/// Shannon entropy of the color frequencies; unused colors contribute 0.
double partition_entropy(std::span<const std::uint32_t> assignment);
inline double partition_entropy(const topology::Partitioning& p) { return partition_entropy(p.assignment); }
/// Entropy of the uniform distribution over M colors: log2 M.
double uniform_entropy(std::uint32_t num_partitions);

/// n x n shift with ones on the subdiagonal and `corner` at (0, n-1).
/// corner 1 gives the unit circulant Z_1, corner 0 the nilpotent Z_0.
Matrix shift_matrix(std::size_t n, double corner);

enum class BandPair {
    sylvester,  // (Z_1, Z_0): Toeplitz matrices have rank <= 2
    hankel,     // (Z_1, Z_0^T): Hankel matrices have rank <= 2
};

std::string_view to_string(BandPair pair) noexcept;
BandPair parse_band_pair(std::string_view name);
std::pair<Matrix, Matrix> band_pair(BandPair pair, std::size_t n);

/// Zero-pads to n x n with n = max(rows, cols).
Matrix embed_square(const Matrix& m);

/// Rank of D = F R - R A after zeroing entries with |d| < threshold;
/// singular values above 1e-10 times the largest count.
std::size_t displacement_rank(const Matrix& r, const Matrix& f, const Matrix& a, double threshold = 0.1);

/// Pads `weights` to square and applies the chosen band pair.
std::size_t layer_displacement_rank(const Matrix& weights, BandPair pair, double threshold = 0.1);

/// Fraction of element pairs co-clustered in both or separated in both.
double rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// H(a) + H(b) - 2 I(a; b) in bits, from the contingency table.
double variation_of_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Number of positions with different labels (label-sensitive).
std::size_t partition_distance(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

struct PartitionMetricsRecord {
    std::uint64_t iteration = 0;
    std::uint64_t partition_id = 0;
    std::optional<double> max_reward;
    std::optional<double> entropy;  // absent for non-chromatic runs
    std::optional<double> uniform_entropy;
    // Against the previous record; absent for the first.
    std::optional<double> rand_index;
    std::optional<double> variation_of_information;
    std::optional<std::size_t> distance;
    std::vector<std::size_t> rank_sylvester;  // per layer
    std::vector<std::size_t> rank_hankel;
};

struct AnalyzeOptions {
    double threshold = 0.1;
    bool sylvester = true;
    bool hankel = true;
};

/// One record per controller phase from partitions.jsonl, pairwise metrics
/// between consecutive best-scoring partitionings. Throws Error listing any
/// missing artifacts.
std::vector<PartitionMetricsRecord> analyze_run(const std::filesystem::path& run_dir, const AnalyzeOptions& options = {});

/// Header:
///   iteration,partition_id,max_reward,entropy_bits,uniform_entropy_bits,
///   rand_index,vi_bits,distance,dr_sylvester_l<k>...,dr_hankel_l<k>...
/// Absent values are empty fields.
std::string metrics_csv(std::span<const PartitionMetricsRecord> records, std::size_t layers,
                        const AnalyzeOptions& options = {});

}  // namespace chromatic::analysis
