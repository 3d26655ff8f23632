#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "doctest.h"

#include "chromatic/orchestrator/remote.hpp"
#include "chromatic/orchestrator/run.hpp"

namespace fs = std::filesystem;
using chromatic::orchestrator::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "chromatic-cli-tests";

struct Output {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int exit_code(int status) { return WIFEXITED(status) ? WEXITSTATUS(status) : -1; }

Output cli(const std::string& args) {
    fs::create_directories(kRoot);
    const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
    const std::string cmd = std::string(CHROMATIC_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    Output o;
    o.code = exit_code(std::system(cmd.c_str()));
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

fs::path fresh(const std::string& name) {
    const fs::path p = kRoot / name;
    fs::remove_all(p);
    return p;
}

std::vector<json> log_lines(const fs::path& dir) {
    std::vector<json> out;
    std::ifstream in(dir / "log.jsonl");
    for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
    return out;
}

const std::string kBase = " --env point-reacher -M 4 --controller-period 2 --horizon 20 --quiet";
const std::string kSmall = kBase + " -k 12";

}  // namespace

TEST_CASE("envs lists the built-in environments") {
    const Output o = cli("envs");
    CHECK(o.code == 0);
    CHECK(o.out.find("pendulum-swingup  obs 3  act 1  horizon 200") != std::string::npos);
    CHECK(o.out.find("cartpole-continuous") != std::string::npos);
    CHECK(o.out.find("point-reacher  obs 6  act 2  horizon 100") != std::string::npos);
}

TEST_CASE("exit codes") {
    CHECK(cli("").code == 1);
    CHECK(cli("--help").code == 0);
    CHECK(cli("train --bogus-flag").code == 1);
    const Output bad_env = cli("train --env mujoco-ant --out " + fresh("bad-env").string());
    CHECK(bad_env.code == 1);
    CHECK(bad_env.err.find("error:") != std::string::npos);
    CHECK(cli("train --arch 0 --out " + fresh("bad-arch").string()).code == 1);
    CHECK(cli("train -M 0 --out " + fresh("bad-m").string()).code == 1);
    CHECK(cli("train --iters 2").code == 1);  // no --out
    CHECK(cli("baseline --type chromatic --out " + fresh("bad-base").string()).code == 1);
    CHECK(cli("eval --checkpoint " + (kRoot / "does-not-exist").string()).code == 1);

    fs::create_directories(kRoot);
    std::ofstream(kRoot / "broken.json") << "{ not json";
    CHECK(cli("train --config " + (kRoot / "broken.json").string() + " --out " + fresh("x").string()).code == 1);
    std::ofstream(kRoot / "typo.json") << R"({"populaton": 5})";
    CHECK(cli("train --config " + (kRoot / "typo.json").string() + " --out " + fresh("y").string()).code == 1);
}

TEST_CASE("train writes a complete, reproducible run directory") {
    const fs::path a = fresh("train-a"), b = fresh("train-b"), c = fresh("train-c");
    const Output first = cli("train" + kSmall + " --iters 6 --seed 3 --out " + a.string());
    REQUIRE(first.code == 0);
    CHECK(first.out.find("run complete: 6 iterations") != std::string::npos);
    CHECK(cli("train" + kSmall + " --iters 6 --seed 3 --workers 4 --out " + b.string()).code == 0);
    CHECK(cli("train" + kSmall + " --iters 6 --seed 4 --out " + c.string()).code == 0);

    CHECK(log_lines(a).size() == 6);
    CHECK(chromatic::orchestrator::manifest_gaps(a).empty());
    for (const char* f : {"config.json", "log.jsonl", "curve.csv", "timing.csv", "partitions.jsonl", "policy.json",
                          "manifest.json", "checkpoints/latest.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(a / f));
    }
    CHECK(slurp(a / "log.jsonl") == slurp(b / "log.jsonl"));
    CHECK(slurp(a / "log.jsonl") != slurp(c / "log.jsonl"));

    // The effective config is echoed, and flags override a config file.
    const json cfg = json::parse(slurp(a / "config.json"));
    CHECK(cfg.at("population") == 12);
    CHECK(cfg.at("seed") == 3);
    std::ofstream(kRoot / "base.json") << R"({"population": 7, "seed": 9, "iterations": 2})";
    const fs::path d = fresh("train-d");
    CHECK(cli("train --config " + (kRoot / "base.json").string() + " --seed 10 --quiet --horizon 10 --out " +
              d.string())
              .code == 0);
    const json dcfg = json::parse(slurp(d / "config.json"));
    CHECK(dcfg.at("population") == 7);
    CHECK(dcfg.at("seed") == 10);
    CHECK(log_lines(d).size() == 2);

    CHECK(cli("train" + kSmall + " --iters 6 --seed 3 --out " + a.string()).code == 1);
}

TEST_CASE("interrupt and resume reproduce an uninterrupted run") {
    const fs::path whole = fresh("sig-whole"), cut = fresh("sig-cut");
    const std::string flags = " --env point-reacher -M 4 --controller-period 2 --quiet -k 40 --iters 150 --seed 8 "
                              "--checkpoint-every 7";
    REQUIRE(cli("train" + flags + " --out " + whole.string()).code == 0);

    const std::string cmd = std::string(CHROMATIC_CLI_PATH) + " train" + flags + " --out " + cut.string() + " >" +
                            (kRoot / "sig.out").string() + " 2>&1 & pid=$!; while [ $(cat " + (cut / "log.jsonl").string() +
                            " 2>/dev/null | wc -l) -lt 3 ]; do sleep 0.02; done; kill -INT $pid; wait $pid";
    const int code = exit_code(std::system(("sh -c '" + cmd + "'").c_str()));
    CHECK(code == 0);
    const std::string said = slurp(kRoot / "sig.out");
    CHECK(said.find("interrupted after") != std::string::npos);
    const auto partial = log_lines(cut).size();
    CHECK(partial >= 3);
    CHECK(partial < 150);

    REQUIRE(cli("train --resume " + cut.string() + " --quiet").code == 0);
    CHECK(slurp(cut / "log.jsonl") == slurp(whole / "log.jsonl"));
    CHECK(slurp(cut / "policy.json") == slurp(whole / "policy.json"));
}

TEST_CASE("remote worker reproduces the in-process run") {
    const fs::path local = fresh("tcp-local"), remote = fresh("tcp-remote");
    const std::string flags = kSmall + " --iters 4 --seed 6";
    REQUIRE(cli("train" + flags + " --out " + local.string()).code == 0);

    std::uint16_t port;
    {
        chromatic::orchestrator::RemotePool probe;
        port = probe.port();
    }
    const std::string endpoint = "127.0.0.1:" + std::to_string(port);
    const std::string bin = CHROMATIC_CLI_PATH;
    const std::string cmd = bin + " train" + flags + " --listen " + endpoint + " --min-workers 2 --out " +
                            remote.string() + " >" + (kRoot / "coord.out").string() + " 2>&1 & c=$!; " + bin +
                            " worker --connect " + endpoint + " >" + (kRoot / "w1.out").string() + " 2>&1 & w1=$!; " +
                            bin + " worker --connect " + endpoint + " >" + (kRoot / "w2.out").string() +
                            " 2>&1 & w2=$!; wait $c; rc=$?; wait $w1; r1=$?; wait $w2; r2=$?; exit $((rc + 10 * r1 + "
                            "100 * r2))";
    CHECK(exit_code(std::system(("sh -c '" + cmd + "'").c_str())) == 0);
    CHECK(slurp(remote / "log.jsonl") == slurp(local / "log.jsonl"));

    const Output lonely = cli("worker --connect " + endpoint + " --max-attempts 2");
    CHECK(lonely.code == 2);
    CHECK(cli("worker --connect nowhere").code == 1);
}

TEST_CASE("eval") {
    const fs::path run = fresh("eval-run");
    REQUIRE(cli("train" + kSmall + " --iters 3 --seed 2 --out " + run.string()).code == 0);

    const Output o = cli("eval --checkpoint " + run.string() + " --episodes 10 --seed 1 --out " +
                         (kRoot / "eval.json").string());
    REQUIRE(o.code == 0);
    const json j = json::parse(o.out);
    CHECK(j == json::parse(slurp(kRoot / "eval.json")));
    CHECK(j.at("env") == "point-reacher");
    CHECK(j.at("rewards").size() == 10);
    CHECK(j.at("seeds").front() == 1);
    CHECK(j.at("seeds").back() == 10);

    const json one = json::parse(cli("eval --checkpoint " + run.string() + " --seeds 4").out);
    CHECK(one.at("mean_reward") == j.at("rewards")[3]);

    const json reversed = json::parse(cli("eval --checkpoint " + run.string() + " --seeds 10,9,8,7,6,5,4,3,2,1").out);
    double forward = 0.0, backward = 0.0;
    for (const auto& r : j.at("rewards")) forward += r.get<double>();
    for (const auto& r : reversed.at("rewards")) backward += r.get<double>();
    CHECK(reversed.at("rewards")[0] == j.at("rewards")[9]);
    CHECK(backward == doctest::Approx(forward).epsilon(1e-12));

    // A checkpoint file and the policy file evaluate identically.
    const json from_policy = json::parse(cli("eval --checkpoint " + (run / "policy.json").string() + " --seeds 4").out);
    CHECK(from_policy == one);

    const Output mismatch = cli("eval --checkpoint " + run.string() + " --env pendulum-swingup");
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("error:") != std::string::npos);
}

TEST_CASE("eval of a trained pendulum policy matches its training rewards") {
    const fs::path run = fresh("eval-pendulum");
    std::ofstream(kRoot / "pend-assign.json") << "[0, 1, 2]";
    REQUIRE(cli("train --env pendulum-swingup -M 3 -k 50 --mode fixed-partition --assignment " +
                (kRoot / "pend-assign.json").string() + " --iters 60 --seed 1 --quiet --out " + run.string())
                .code == 0);
    const auto log = log_lines(run);
    const double last_mean = log.back().at("mean_reward").get<double>();
    const json e = json::parse(cli("eval --checkpoint " + run.string() + " --episodes 50 --seed 1000").out);
    // The final policy is the unperturbed pivot, so it should do at least as
    // well as the perturbed population did on average, up to a 10% band.
    CHECK(e.at("mean_reward").get<double>() >= last_mean - 0.1 * std::abs(last_mean));
}

TEST_CASE("baselines") {
    const fs::path toeplitz = fresh("base-toeplitz"), dense = fresh("base-dense"), masked = fresh("base-masked");
    const std::string common = " --env point-reacher --arch H41 -k 8 --iters 3 --horizon 10 --quiet --out ";
    REQUIRE(cli("baseline --type toeplitz" + common + toeplitz.string()).code == 0);
    REQUIRE(cli("baseline --type unstructured" + common + dense.string()).code == 0);
    REQUIRE(cli("baseline --type masked" + common + masked.string()).code == 0);
    // [6, 41, 2]: Toeplitz needs a + b - 1 values per layer, dense a * b.
    CHECK(log_lines(toeplitz)[0].at("weight_params") == (6 + 41 - 1) + (41 + 2 - 1));
    CHECK(log_lines(dense)[0].at("weight_params") == 6 * 41 + 41 * 2);
    const auto m = log_lines(masked);
    CHECK(m[0].at("eta").get<double>() == doctest::Approx(0.5).epsilon(0.1));
    CHECK(m[0].at("beta") == 1.0);
    CHECK(cli("baseline --type hexagonal" + common + fresh("base-bad").string()).code == 1);
}

TEST_CASE("analyze") {
    const fs::path run = fresh("analyze-run");
    REQUIRE(cli("train" + kSmall + " --iters 6 --seed 1 --out " + run.string()).code == 0);
    const Output o = cli("analyze --run " + run.string());
    REQUIRE(o.code == 0);
    CHECK(o.out.find("wrote 3 records") != std::string::npos);
    const std::string csv = slurp(run / "analysis.csv");
    CHECK(csv.rfind("iteration,partition_id,", 0) == 0);
    CHECK(cli("analyze --run " + run.string() + " --bands sylvester --out " + (kRoot / "a.csv").string()).code == 0);
    CHECK(slurp(kRoot / "a.csv").find("dr_hankel") == std::string::npos);
    CHECK(cli("analyze --run " + run.string() + " --bands diagonal").code == 1);
    CHECK(cli("analyze --run " + fresh("analyze-missing").string()).code != 0);
}

TEST_CASE("transfer") {
    const fs::path src = fresh("transfer-src"), out = fresh("transfer-out");
    REQUIRE(cli("train --env point-reacher -M 4 -k 12 --controller-period 2 --iters 4 --horizon 15 --quiet --seed 2 "
                "--out " +
                src.string())
                .code == 0);
    const Output o = cli("transfer --from " + src.string() + " --top-k 2 --iters 2 --eval-episodes 3 --quiet --out " +
                         out.string());
    REQUIRE(o.code == 0);
    const std::string csv = slurp(out / "comparison.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4);
    CHECK(csv.find("transfer,0,") != std::string::npos);
    CHECK(csv.find("random,1,") != std::string::npos);

    // K = 1 carries the best partitioning over unchanged.
    const fs::path best = fresh("transfer-best");
    REQUIRE(cli("transfer --from " + src.string() + " --top-k 1 --iters 1 --eval-episodes 1 --quiet --out " +
                best.string())
                .code == 0);
    const auto state = chromatic::orchestrator::load_latest_checkpoint(src);
    const auto top = chromatic::orchestrator::transfer_top_k(state.population, 1);
    const json cfg = json::parse(slurp(best / "transfer-0" / "config.json"));
    CHECK(cfg.at("fixed_assignment").get<std::vector<std::uint32_t>>() == top[0].assignment);

    const Output mismatch = cli("transfer --from " + src.string() + " --env pendulum-swingup --out " +
                                fresh("transfer-bad").string());
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("[6,2]") != std::string::npos);
    CHECK(mismatch.err.find("[3,1]") != std::string::npos);
}
