#include <charconv>
#include <cmath>
#include <string>

#include "chromatic/simd.hpp"
#include "chromatic/topology.hpp"

namespace chromatic::topology {

void NetworkTopology::validate() const {
    if (layer_dims.size() < 2) {
        throw InvalidTopology("topology needs at least 2 layers, got " + std::to_string(layer_dims.size()));
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw InvalidTopology("topology layer dimensions must be positive");
    }
}

std::size_t NetworkTopology::edge_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) n += layer_dims[l] * layer_dims[l + 1];
    return n;
}

std::size_t NetworkTopology::bias_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_dims.size(); ++l) n += layer_dims[l];
    return n;
}

std::size_t NetworkTopology::edge_offset(std::size_t layer) const {
    if (layer > num_matrices()) throw DimensionError("edge_offset: layer out of range");
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) n += layer_dims[l] * layer_dims[l + 1];
    return n;
}

namespace {

std::size_t parse_dim(std::string_view token, std::string_view arch) {
    std::size_t value = 0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || value == 0) {
        throw InvalidTopology("cannot parse architecture '" + std::string(arch) + "'");
    }
    return value;
}

}  // namespace

NetworkTopology NetworkTopology::from_arch(std::string_view arch, std::size_t input_dim, std::size_t output_dim) {
    NetworkTopology t;
    t.layer_dims.push_back(input_dim);
    if (arch != "L" && arch != "l" && arch != "linear") {
        std::size_t start = 0;
        while (start <= arch.size()) {
            std::size_t end = arch.find(',', start);
            if (end == std::string_view::npos) end = arch.size();
            std::string_view token = arch.substr(start, end - start);
            while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
            while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
            if (!token.empty() && (token.front() == 'H' || token.front() == 'h')) token.remove_prefix(1);
            t.layer_dims.push_back(parse_dim(token, arch));
            start = end + 1;
        }
    }
    t.layer_dims.push_back(output_dim);
    t.validate();
    return t;
}

std::string describe(const NetworkTopology& topology) {
    std::string s = "[";
    for (std::size_t i = 0; i < topology.layer_dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(topology.layer_dims[i]);
    }
    return s + "]";
}

std::vector<EdgeRef> enumerate_edges(const NetworkTopology& topology) {
    topology.validate();
    std::vector<EdgeRef> edges;
    edges.reserve(topology.edge_count());
    for (std::size_t l = 0; l < topology.num_matrices(); ++l) {
        for (std::size_t r = 0; r < topology.matrix_rows(l); ++r) {
            for (std::size_t c = 0; c < topology.matrix_cols(l); ++c) edges.push_back({l, r, c});
        }
    }
    return edges;
}

void Partitioning::validate(const NetworkTopology& topology) const {
    if (num_partitions == 0) throw ValueError("partitioning needs at least one color");
    if (assignment.size() != topology.edge_count()) {
        throw DimensionError("partitioning length " + std::to_string(assignment.size()) + " != edge count " +
                             std::to_string(topology.edge_count()));
    }
    for (std::uint32_t c : assignment) {
        if (c >= num_partitions) {
            throw ValueError("partitioning color " + std::to_string(c) + " out of range for M=" +
                             std::to_string(num_partitions));
        }
    }
}

Partitioning uniform_random_partitioning(const NetworkTopology& topology, std::uint32_t num_partitions, Rng& rng) {
    Partitioning p{num_partitions, std::vector<std::uint32_t>(topology.edge_count())};
    for (auto& c : p.assignment) c = rng.below(num_partitions);
    return p;
}

SharedWeightPool zero_pool(const NetworkTopology& topology, std::uint32_t num_partitions) {
    SharedWeightPool pool;
    pool.weights.assign(num_partitions, 0.0);
    for (std::size_t l = 1; l < topology.layer_dims.size(); ++l) pool.biases.emplace_back(topology.layer_dims[l], 0.0);
    return pool;
}

namespace {

void check_biases(const NetworkTopology& topology, std::span<const std::vector<double>> biases) {
    if (biases.size() != topology.num_matrices()) throw DimensionError("bias vector count does not match topology");
    for (std::size_t l = 0; l < biases.size(); ++l) {
        if (biases[l].size() != topology.matrix_cols(l)) throw DimensionError("bias length does not match layer size");
    }
}

}  // namespace

std::vector<Matrix> build_weight_matrices(const NetworkTopology& topology, const Partitioning& partitioning,
                                          const SharedWeightPool& pool) {
    topology.validate();
    partitioning.validate(topology);
    if (pool.weights.size() != partitioning.num_partitions) {
        throw DimensionError("pool has " + std::to_string(pool.weights.size()) + " weights, partitioning has M=" +
                             std::to_string(partitioning.num_partitions));
    }
    std::vector<Matrix> out;
    out.reserve(topology.num_matrices());
    std::size_t e = 0;
    for (std::size_t l = 0; l < topology.num_matrices(); ++l) {
        Matrix m(topology.matrix_rows(l), topology.matrix_cols(l));
        for (double& v : m.data()) v = pool.weights[partitioning.assignment[e++]];
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> dense_forward(const NetworkTopology& topology, std::span<const Matrix> matrices,
                                  std::span<const std::vector<double>> biases, std::span<const double> observation) {
    if (matrices.size() != topology.num_matrices()) throw DimensionError("matrix count does not match topology");
    check_biases(topology, biases);
    if (observation.size() != topology.input_dim()) {
        throw DimensionError("observation length " + std::to_string(observation.size()) + " != input dim " +
                             std::to_string(topology.input_dim()));
    }
    require_finite(observation, "observation");
    const auto& k = simd::kernels();
    std::vector<double> x(observation.begin(), observation.end());
    std::vector<double> y;
    for (std::size_t l = 0; l < matrices.size(); ++l) {
        const Matrix& w = matrices[l];
        if (w.rows() != topology.matrix_rows(l) || w.cols() != topology.matrix_cols(l)) {
            throw DimensionError("matrix shape does not match topology");
        }
        y.resize(w.cols());
        k.gemv_t(w.data().data(), w.rows(), w.cols(), x.data(), y.data());
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = std::tanh(y[j] + biases[l][j]);
        x.swap(y);
    }
    return x;
}

std::vector<double> chromatic_forward(const NetworkTopology& topology, const Partitioning& partitioning,
                                      const SharedWeightPool& pool, std::span<const double> observation) {
    const auto matrices = build_weight_matrices(topology, partitioning, pool);
    return dense_forward(topology, matrices, pool.biases, observation);
}

ColorGroupedLayer::ColorGroupedLayer(const NetworkTopology& topology, const Partitioning& partitioning,
                                     std::size_t layer)
    : rows_(topology.matrix_rows(layer)), cols_(topology.matrix_cols(layer)),
      num_partitions_(partitioning.num_partitions) {
    partitioning.validate(topology);
    const std::size_t offset = topology.edge_offset(layer);
    // Bucket rows of each column by color, colors ascending.
    std::vector<std::vector<std::uint32_t>> buckets(num_partitions_);
    column_begin_.reserve(cols_ + 1);
    for (std::size_t c = 0; c < cols_; ++c) {
        column_begin_.push_back(static_cast<std::uint32_t>(groups_.size()));
        for (auto& b : buckets) b.clear();
        for (std::size_t r = 0; r < rows_; ++r) {
            buckets[partitioning.assignment[offset + r * cols_ + c]].push_back(static_cast<std::uint32_t>(r));
        }
        for (std::uint32_t color = 0; color < num_partitions_; ++color) {
            if (buckets[color].empty()) continue;
            const auto begin = static_cast<std::uint32_t>(rows_by_group_.size());
            rows_by_group_.insert(rows_by_group_.end(), buckets[color].begin(), buckets[color].end());
            groups_.push_back({color, begin, static_cast<std::uint32_t>(rows_by_group_.size())});
        }
    }
    column_begin_.push_back(static_cast<std::uint32_t>(groups_.size()));
}

std::vector<double> ColorGroupedLayer::apply(std::span<const double> weights, std::span<const double> x) const {
    if (weights.size() != num_partitions_) throw DimensionError("color-grouped matvec: weight count != M");
    if (x.size() != rows_) throw DimensionError("color-grouped matvec: input length != rows");
    const auto& k = simd::kernels();
    std::vector<double> y(cols_, 0.0);
    for (std::size_t c = 0; c < cols_; ++c) {
        double acc = 0.0;
        for (std::uint32_t g = column_begin_[c]; g < column_begin_[c + 1]; ++g) {
            const Group& grp = groups_[g];
            acc += weights[grp.color] * k.gather_sum(x.data(), rows_by_group_.data() + grp.begin, grp.end - grp.begin);
        }
        y[c] = acc;
    }
    return y;
}

std::vector<double> color_grouped_matvec(const ColorGroupedLayer& layer, std::span<const double> weights,
                                         std::span<const double> x) {
    return layer.apply(weights, x);
}

std::vector<double> policy_forward(const NetworkTopology& topology, const RealizedPolicy& realized,
                                   std::span<const double> observation) {
    return dense_forward(topology, realized.matrices, realized.biases, observation);
}

}  // namespace chromatic::topology
