#include "chromatic/cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "chromatic/analysis.hpp"
#include "chromatic/envs.hpp"
#include "chromatic/orchestrator/checkpoint.hpp"
#include "chromatic/orchestrator/policy_io.hpp"
#include "chromatic/orchestrator/remote.hpp"
#include "chromatic/orchestrator/run.hpp"

namespace chromatic::cli {

namespace fs = std::filesystem;
using namespace chromatic::orchestrator;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

class InterruptGuard {
public:
    InterruptGuard() {
        g_stop.store(false);
        previous_ = std::signal(SIGINT, on_interrupt);
    }
    ~InterruptGuard() { std::signal(SIGINT, previous_); }

private:
    void (*previous_)(int) = SIG_DFL;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json_file(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
}

/// Flags shared by train, baseline and transfer. Each option records how it
/// overrides a TrainConfig; options not given on the command line leave the
/// config (defaults or --config file) untouched.
struct TrainFlags {
    std::string config_file;
    std::string out;
    std::string listen;
    std::size_t min_workers = 1;
    double worker_wait = 60.0;
    bool quiet = false;
    std::vector<std::function<void(TrainConfig&)>> appliers;

    std::string env, arch, mode, optimizer, assignment_file, policy_type;
    std::uint32_t partitions = 0;
    std::size_t population = 0, workers = 0, rollouts = 0, period = 0, iters = 0, checkpoint_every = 0;
    std::uint64_t seed = 0;
    int horizon = 0;
    double sigma = 0, step = 0, lr = 0, entropy = 0, decay = 0, temperature = 0, survivor = 0, alpha = 0,
           beta_floor = 0, timeout = 0, init_scale = 0;
    bool no_obs_norm = false, no_reward_norm = false, no_perturb_biases = false;

    template <class T, class Set>
    void option(CLI::App* app, const std::string& name, T& storage, Set set, const std::string& help) {
        CLI::Option* o = app->add_option(name, storage, help);
        appliers.push_back([o, &storage, set](TrainConfig& c) {
            if (o->count() > 0) set(c, storage);
        });
    }
    template <class Set>
    void flag(CLI::App* app, const std::string& name, bool& storage, Set set, const std::string& help) {
        CLI::Option* o = app->add_flag(name, storage, help);
        appliers.push_back([o, set](TrainConfig& c) {
            if (o->count() > 0) set(c);
        });
    }

    void add(CLI::App* app, bool with_mode) {
        app->add_option("--config", config_file, "JSON config file; flags override its values");
        app->add_option("--out", out, "Run directory");
        app->add_option("--listen", listen, "Serve tasks to remote workers on host:port instead of in-process threads");
        app->add_option("--min-workers", min_workers, "Remote workers to wait for before the first iteration");
        app->add_option("--worker-wait", worker_wait, "Seconds to wait for remote workers");
        app->add_flag("--quiet", quiet, "No per-iteration progress");
        option(app, "--env", env, [](TrainConfig& c, const std::string& v) { c.env = v; }, "Environment");
        option(app, "--arch", arch, [](TrainConfig& c, const std::string& v) { c.arch = v; },
               "L, H41, H41,H41 or explicit hidden sizes");
        option(app, "--partitions,-M", partitions, [](TrainConfig& c, std::uint32_t v) { c.partitions = v; },
               "Number of colors M");
        option(app, "--population,-k", population, [](TrainConfig& c, std::size_t v) { c.population = v; },
               "Perturbation pairs (and partitionings) per iteration");
        option(app, "--workers", workers, [](TrainConfig& c, std::size_t v) { c.workers = v; },
               "In-process evaluation threads");
        option(app, "--rollouts-per-partition", rollouts,
               [](TrainConfig& c, std::size_t v) { c.rollouts_per_partition = v; }, "Perturbations per partitioning");
        option(app, "--controller-period", period, [](TrainConfig& c, std::size_t v) { c.controller_period = v; },
               "Weight iterations between controller phases");
        if (with_mode) {
            option(app, "--mode", mode, [](TrainConfig& c, const std::string& v) { c.mode = parse_mode(v); },
                   "enas, random-controller, fixed-random-population or fixed-partition");
            option(app, "--assignment", assignment_file,
                   [](TrainConfig& c, const std::string& v) {
                       const json j = read_json_file(v);
                       const json& a = j.is_object() ? j.at("assignment") : j;
                       c.fixed_assignment = a.get<std::vector<std::uint32_t>>();
                   },
                   "JSON file with the fixed-partition assignment");
        }
        option(app, "--iters", iters, [](TrainConfig& c, std::size_t v) { c.iterations = v; }, "Total iterations");
        option(app, "--seed", seed, [](TrainConfig& c, std::uint64_t v) { c.seed = v; }, "Run seed");
        option(app, "--horizon", horizon, [](TrainConfig& c, int v) { c.horizon = v; },
               "Episode length override (0: environment default)");
        option(app, "--sigma", sigma, [](TrainConfig& c, double v) { c.es.sigma = v; }, "ES perturbation scale");
        option(app, "--step-size", step, [](TrainConfig& c, double v) { c.es.step_size = v; }, "ES step size");
        flag(app, "--no-perturb-biases", no_perturb_biases, [](TrainConfig& c) { c.es.perturb_biases = false; },
             "Keep biases fixed");
        flag(app, "--no-obs-norm", no_obs_norm, [](TrainConfig& c) { c.normalize_observations = false; },
             "Disable observation normalization");
        flag(app, "--no-reward-norm", no_reward_norm, [](TrainConfig& c) { c.normalize_rewards = false; },
             "Disable reward standardization");
        option(app, "--init-scale", init_scale, [](TrainConfig& c, double v) { c.init_scale = v; },
               "Std of initial weights");
        option(app, "--controller-lr", lr, [](TrainConfig& c, double v) { c.controller.learning_rate = v; },
               "Controller learning rate");
        option(app, "--entropy-weight", entropy, [](TrainConfig& c, double v) { c.controller.entropy_weight = v; },
               "Controller entropy bonus");
        option(app, "--critic-decay", decay, [](TrainConfig& c, double v) { c.controller.critic_decay = v; },
               "Controller baseline decay");
        option(app, "--temperature", temperature, [](TrainConfig& c, double v) { c.controller.temperature = v; },
               "Controller softmax temperature");
        option(app, "--optimizer", optimizer,
               [](TrainConfig& c, const std::string& v) { c.controller.optimizer = controller::parse_optimizer(v); },
               "Controller optimizer: adam or sgd");
        option(app, "--survivor-fraction", survivor, [](TrainConfig& c, double v) { c.survivor_fraction = v; },
               "Share of top partitionings kept at each resampling");
        option(app, "--mask-alpha", alpha, [](TrainConfig& c, double v) { c.mask_alpha = v; },
               "Mask gate temperature");
        option(app, "--beta-floor", beta_floor, [](TrainConfig& c, double v) { c.beta_floor = v; },
               "Final masked objective coefficient");
        option(app, "--checkpoint-every", checkpoint_every,
               [](TrainConfig& c, std::size_t v) { c.checkpoint_every = v; }, "Iterations between checkpoints");
        option(app, "--task-timeout", timeout, [](TrainConfig& c, double v) { c.task_timeout_s = v; },
               "Seconds before a remote task is retried");
    }

    TrainConfig build(TrainConfig base = {}) const {
        if (!config_file.empty()) base = config_from_json(read_json_file(config_file), base);
        for (const auto& apply : appliers) apply(base);
        return base;
    }

    std::unique_ptr<WorkerPool> make_pool(const TrainConfig& config, std::ostream& err) const {
        if (listen.empty()) return std::make_unique<InProcessPool>(config.workers);
        const auto [host, port] = parse_endpoint(listen);
        RemotePoolOptions o;
        o.bind_host = host;
        o.port = port;
        o.min_workers = min_workers;
        o.task_timeout_s = config.task_timeout_s;
        o.worker_wait_s = worker_wait;
        auto pool = std::make_unique<RemotePool>(o);
        err << "listening for workers on " << host << ":" << pool->port() << "\n";
        return pool;
    }
};

int report_run(const RunSummary& s, const fs::path& dir, std::ostream& out) {
    if (s.interrupted) {
        out << "interrupted after " << s.iterations_completed << " iterations; resume with --resume " << dir.string()
            << "\n";
    } else {
        out << "run complete: " << s.iterations_completed << " iterations in " << dir.string() << "\n";
    }
    return kSuccess;
}

int cmd_train(const TrainFlags& flags, const std::string& resume, const std::string& baseline_type, std::ostream& out,
              std::ostream& err) {
    InterruptGuard guard;
    RunOptions options;
    options.stop = &g_stop;
    options.progress = flags.quiet ? nullptr : &err;
    if (!resume.empty()) {
        options.out_dir = resume;
        TrainConfig config = load_run_config(resume);
        if (flags.workers > 0) config.workers = flags.workers;
        auto pool = flags.make_pool(config, err);
        return report_run(resume_run(*pool, options), resume, out);
    }
    TrainConfig config = flags.build();
    if (!baseline_type.empty()) {
        const topology::PolicyKind kind = topology::parse_policy_kind(baseline_type);
        if (kind == topology::PolicyKind::chromatic) {
            throw ConfigError("chromatic policies are trained with `train`, not `baseline`");
        }
        config.policy = kind;
        config.mode = Mode::fixed_partition;
    } else if (config.policy != topology::PolicyKind::chromatic) {
        throw ConfigError("`train` runs chromatic policies; use `baseline --type " +
                          std::string(topology::to_string(config.policy)) + "`");
    }
    if (flags.out.empty()) throw ConfigError("--out is required");
    config.validate();
    options.out_dir = flags.out;
    auto pool = flags.make_pool(config, err);
    return report_run(train_run(config, *pool, options), flags.out, out);
}

PolicyFile resolve_policy(const fs::path& path) {
    if (fs::is_directory(path)) {
        if (fs::exists(path / "policy.json")) return load_policy(path / "policy.json");
        return policy_from_state(load_latest_checkpoint(path));
    }
    if (!fs::exists(path)) throw ConfigError("no such checkpoint or policy: " + path.string());
    const json j = read_json_file(path);
    if (j.is_object() && j.value("format", std::string()) == "chromatic-policy") return policy_from_json(j);
    return policy_from_state(checkpoint_from_json(j));
}

TrainState resolve_state(const fs::path& path) {
    if (fs::is_directory(path)) return load_latest_checkpoint(path);
    if (!fs::exists(path)) throw ConfigError("no such checkpoint: " + path.string());
    return load_checkpoint(path);
}

std::string dims_text(const std::vector<std::size_t>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
    return s + "]";
}

std::vector<std::uint64_t> eval_seeds(std::size_t episodes, std::uint64_t first) {
    std::vector<std::uint64_t> seeds(episodes);
    for (std::size_t i = 0; i < episodes; ++i) seeds[i] = first + i;
    return seeds;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Chromatic networks: ES-trained policies with learned weight sharing"};
    app.name("chromatic");
    app.require_subcommand(1);

    TrainFlags train_flags;
    std::string resume;
    CLI::App* train = app.add_subcommand("train", "Train a chromatic policy");
    train_flags.add(train, true);
    train->add_option("--resume", resume, "Continue the run in this directory from its latest checkpoint");

    TrainFlags base_flags;
    std::string base_type;
    CLI::App* baseline = app.add_subcommand("baseline", "Train a structured, masked or unstructured baseline with vanilla ES");
    base_flags.add(baseline, false);
    baseline->add_option("--type", base_type, "toeplitz, circulant, masked or unstructured")->required();

    std::string eval_path, eval_env, eval_out;
    std::size_t episodes = 10;
    std::uint64_t eval_seed = 1;
    std::vector<std::uint64_t> eval_seed_list;
    int eval_horizon = 0;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained policy");
    eval->add_option("--checkpoint", eval_path, "Run directory, checkpoint or policy file")->required();
    eval->add_option("--env", eval_env, "Environment (default: the one it was trained on)");
    eval->add_option("--episodes", episodes, "Episodes, seeded seed..seed+episodes-1");
    eval->add_option("--seed", eval_seed, "First episode seed");
    eval->add_option("--seeds", eval_seed_list, "Explicit episode seeds (overrides --seed/--episodes)")->delimiter(',');
    eval->add_option("--horizon", eval_horizon, "Episode length override");
    eval->add_option("--out", eval_out, "Write the JSON summary here");

    std::string analyze_dir, analyze_out, bands = "both";
    double threshold = 0.1;
    CLI::App* analyze = app.add_subcommand("analyze", "Partition metrics CSV for a run");
    analyze->add_option("--run", analyze_dir, "Run directory")->required();
    analyze->add_option("--out", analyze_out, "CSV path (default: <run>/analysis.csv)");
    analyze->add_option("--threshold", threshold, "Displacement entries below this are zeroed");
    analyze->add_option("--bands", bands, "both, sylvester or hankel");

    TrainFlags transfer_flags;
    std::string transfer_from;
    std::size_t top_k = 5, transfer_episodes = 10;
    CLI::App* transfer = app.add_subcommand("transfer", "Retrain top partitionings on another environment");
    transfer_flags.add(transfer, false);
    transfer->add_option("--from", transfer_from, "Source run directory or checkpoint")->required();
    transfer->add_option("--top-k", top_k, "Number of partitionings to transfer");
    transfer->add_option("--eval-episodes", transfer_episodes, "Evaluation episodes per retrained policy");

    std::string connect;
    int attempts = 50;
    CLI::App* worker = app.add_subcommand("worker", "Serve evaluation tasks for a coordinator");
    worker->add_option("--connect", connect, "Coordinator host:port")->required();
    worker->add_option("--max-attempts", attempts, "Connection attempts before giving up");

    CLI::App* envs_cmd = app.add_subcommand("envs", "List built-in environments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }

    try {
        if (train->parsed()) return cmd_train(train_flags, resume, "", out, err);
        if (baseline->parsed()) return cmd_train(base_flags, "", base_type, out, err);

        if (eval->parsed()) {
            const PolicyFile policy = resolve_policy(eval_path);
            const std::string env = eval_env.empty() ? policy.env : eval_env;
            const auto seeds = eval_seed_list.empty() ? eval_seeds(episodes, eval_seed) : eval_seed_list;
            if (seeds.empty()) throw ConfigError("--episodes must be >= 1");
            const EvalSummary summary = evaluate_policy(policy, env, seeds, eval_horizon);
            json j = eval_summary_to_json(summary);
            j["env"] = env;
            out << j.dump(2) << "\n";
            if (!eval_out.empty()) write_file_atomic(eval_out, j.dump(2) + "\n");
            return kSuccess;
        }

        if (analyze->parsed()) {
            analysis::AnalyzeOptions options;
            options.threshold = threshold;
            if (bands == "sylvester") {
                options.hankel = false;
            } else if (bands == "hankel") {
                options.sylvester = false;
            } else if (bands != "both") {
                throw ConfigError("--bands must be both, sylvester or hankel");
            }
            const auto records = analysis::analyze_run(analyze_dir, options);
            const std::size_t layers = load_run_config(analyze_dir).topology().num_matrices();
            const fs::path path = analyze_out.empty() ? fs::path(analyze_dir) / "analysis.csv" : fs::path(analyze_out);
            write_file_atomic(path, analysis::metrics_csv(records, layers, options));
            out << "wrote " << records.size() << " records to " << path.string() << "\n";
            return kSuccess;
        }

        if (transfer->parsed()) {
            const TrainState source = resolve_state(transfer_from);
            if (!source.is_chromatic()) throw ConfigError("transfer needs a chromatic source run");
            if (transfer_flags.out.empty()) throw ConfigError("--out is required");
            if (top_k == 0) throw ConfigError("--top-k must be >= 1");
            TrainConfig base = source.config;
            base = transfer_flags.build(base);
            base.policy = topology::PolicyKind::chromatic;
            base.mode = Mode::fixed_partition;
            base.partitions = source.config.partitions;
            const auto source_dims = source.model.topology().layer_dims;
            const auto target_dims = base.topology().layer_dims;
            if (source_dims != target_dims) {
                throw ConfigError("source partitionings are for layer dims " + dims_text(source_dims) + " but env '" +
                                  base.env + "' with arch '" + base.arch + "' needs " + dims_text(target_dims));
            }
            const auto parts = transfer_top_k(source.population, top_k, &err);
            const auto ranked = rank_population(source.population);
            const fs::path root = transfer_flags.out;
            fs::create_directories(root);
            std::string csv = "kind,rank,source_partition_id,final_mean_reward,final_max_reward,eval_mean_reward\n";
            const auto seeds = eval_seeds(transfer_episodes, 1);
            InterruptGuard guard;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < parts.size(); ++k) {
                    TrainConfig cfg = base;
                    std::string id;
                    if (pass == 0) {
                        cfg.fixed_assignment = parts[k].assignment;
                        id = std::to_string(source.population[ranked[k]].id);
                    } else {
                        Rng rng(derive_seed(cfg.seed, {0x72616e64ULL, k}));
                        cfg.fixed_assignment =
                            topology::uniform_random_partitioning(cfg.topology(), cfg.partitions, rng).assignment;
                    }
                    const char* kind = pass == 0 ? "transfer" : "random";
                    const fs::path dir = root / (std::string(kind) + "-" + std::to_string(k));
                    RunOptions options;
                    options.out_dir = dir;
                    options.stop = &g_stop;
                    options.progress = transfer_flags.quiet ? nullptr : &err;
                    auto pool = transfer_flags.make_pool(cfg, err);
                    const RunSummary s = train_run(cfg, *pool, options);
                    if (s.interrupted) throw Error("interrupted during " + dir.string());
                    const EvalSummary e = evaluate_policy(load_policy(dir / "policy.json"), cfg.env, seeds, cfg.horizon);
                    std::ostringstream row;
                    row.precision(17);
                    row << kind << "," << k << "," << id << "," << s.last->mean_reward << "," << s.last->max_reward
                        << "," << e.mean << "\n";
                    csv += row.str();
                }
            }
            write_file_atomic(root / "comparison.csv", csv);
            out << "wrote " << 2 * parts.size() << " rows to " << (root / "comparison.csv").string() << "\n";
            return kSuccess;
        }

        if (worker->parsed()) {
            const auto [host, port] = parse_endpoint(connect);
            WorkerOptions options;
            options.host = host;
            options.port = port;
            options.max_connect_attempts = attempts;
            return run_worker(options, err);
        }

        if (envs_cmd->parsed()) {
            for (const auto& name : envs::env_names()) {
                const auto spec = envs::env_spec(name);
                out << name << "  obs " << spec.obs_dim << "  act " << spec.act_dim << "  horizon " << spec.horizon
                    << "\n";
            }
            return kSuccess;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidTopology& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kConfigError;
}

}  // namespace chromatic::cli
