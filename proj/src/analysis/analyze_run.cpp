#include <charconv>
#include <fstream>
#include <sstream>

#include "chromatic/analysis.hpp"
#include "chromatic/orchestrator/run.hpp"

namespace chromatic::analysis {

namespace fs = std::filesystem;
using orchestrator::json;

std::vector<PartitionMetricsRecord> analyze_run(const fs::path& run_dir, const AnalyzeOptions& options) {
    std::vector<std::string> gaps;
    for (const char* name : {"config.json", "log.jsonl", "partitions.jsonl"}) {
        if (!fs::exists(run_dir / name)) gaps.emplace_back(name);
    }
    if (!gaps.empty()) {
        std::string list;
        for (const auto& g : gaps) list += (list.empty() ? "" : ", ") + g;
        throw Error("cannot analyze " + run_dir.string() + "; missing: " + list);
    }
    const orchestrator::TrainConfig config = orchestrator::load_run_config(run_dir);
    const topology::PolicyModel model = config.model();
    const bool chromatic = model.kind() == topology::PolicyKind::chromatic;

    std::vector<PartitionMetricsRecord> records;
    std::vector<std::uint32_t> previous;
    std::ifstream in(run_dir / "partitions.jsonl");
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        json event;
        try {
            event = json::parse(line);
        } catch (const json::exception& e) {
            throw CorruptFile("partitions.jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        PartitionMetricsRecord r;
        r.iteration = event.at("iteration").get<std::uint64_t>();
        r.partition_id = event.at("partition_id").get<std::uint64_t>();
        if (!event.at("max_reward").is_null()) r.max_reward = event.at("max_reward").get<double>();
        const auto assignment = event.at("assignment").get<std::vector<std::uint32_t>>();
        const auto params = event.at("params").get<std::vector<double>>();
        if (chromatic) {
            r.entropy = partition_entropy(assignment);
            r.uniform_entropy = uniform_entropy(config.partitions);
            if (!records.empty()) {
                r.rand_index = rand_index(previous, assignment);
                r.variation_of_information = variation_of_information(previous, assignment);
                r.distance = partition_distance(previous, assignment);
            }
        }
        const topology::RealizedPolicy realized = model.realize(params, assignment);
        for (const Matrix& w : realized.matrices) {
            if (options.sylvester) r.rank_sylvester.push_back(layer_displacement_rank(w, BandPair::sylvester, options.threshold));
            if (options.hankel) r.rank_hankel.push_back(layer_displacement_rank(w, BandPair::hankel, options.threshold));
        }
        previous = assignment;
        records.push_back(std::move(r));
    }
    if (records.empty()) {
        throw Error("cannot analyze " + run_dir.string() + "; partitions.jsonl holds no controller phases");
    }
    return records;
}

namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class T>
std::string opt(const std::optional<T>& v) {
    if (!v) return "";
    if constexpr (std::is_floating_point_v<T>) {
        return num(*v);
    } else {
        return std::to_string(*v);
    }
}

}  // namespace

std::string metrics_csv(std::span<const PartitionMetricsRecord> records, std::size_t layers,
                        const AnalyzeOptions& options) {
    std::ostringstream out;
    out << "iteration,partition_id,max_reward,entropy_bits,uniform_entropy_bits,rand_index,vi_bits,distance";
    if (options.sylvester) {
        for (std::size_t l = 0; l < layers; ++l) out << ",dr_sylvester_l" << l;
    }
    if (options.hankel) {
        for (std::size_t l = 0; l < layers; ++l) out << ",dr_hankel_l" << l;
    }
    out << "\n";
    for (const auto& r : records) {
        out << r.iteration << "," << r.partition_id << "," << opt(r.max_reward) << "," << opt(r.entropy) << ","
            << opt(r.uniform_entropy) << "," << opt(r.rand_index) << "," << opt(r.variation_of_information) << ","
            << opt(r.distance);
        for (std::size_t v : r.rank_sylvester) out << "," << v;
        for (std::size_t v : r.rank_hankel) out << "," << v;
        out << "\n";
    }
    return out.str();
}

}  // namespace chromatic::analysis
