#include "chromatic/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace chromatic::envs {

void EnvSpec::validate() const {
    if (obs_dim == 0 || act_dim == 0) throw ConfigError("env '" + name + "': dimensions must be positive");
    if (horizon < 1) throw ConfigError("env '" + name + "': horizon must be >= 1");
    if (action_low.size() != act_dim || action_high.size() != act_dim) {
        throw ConfigError("env '" + name + "': action bounds do not match action dim");
    }
    for (std::size_t i = 0; i < act_dim; ++i) {
        if (!std::isfinite(action_low[i]) || !std::isfinite(action_high[i]) || !(action_low[i] < action_high[i])) {
            throw ConfigError("env '" + name + "': invalid action bounds");
        }
    }
}

void Environment::reset(std::uint64_t seed) {
    Rng rng(seed);
    reset_state(rng);
    restart();
}

StepResult Environment::step(std::span<const double> action) {
    if (done_) throw ValueError("env '" + spec_.name + "': step called on a finished episode");
    if (action.size() != spec_.act_dim) throw DimensionError("env '" + spec_.name + "': action dimension mismatch");
    require_finite(action, "action");
    std::vector<double> clipped(action.begin(), action.end());
    for (std::size_t i = 0; i < clipped.size(); ++i) {
        clipped[i] = std::clamp(clipped[i], spec_.action_low[i], spec_.action_high[i]);
    }
    StepResult r = advance(clipped);
    ++steps_;
    if (steps_ >= spec_.horizon) r.done = true;
    if (r.terminated) r.done = true;
    done_ = r.done;
    return r;
}

std::vector<double> Environment::observation() const {
    std::vector<double> obs(spec_.obs_dim);
    write_observation(obs);
    return obs;
}

void Environment::set_horizon(int horizon) {
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    spec_.horizon = horizon;
}

// ---------------------------------------------------------------------------

namespace {

double wrap_angle(double x) {
    x = std::fmod(x + std::numbers::pi, 2.0 * std::numbers::pi);
    if (x < 0) x += 2.0 * std::numbers::pi;
    return x - std::numbers::pi;
}

EnvSpec pendulum_spec() { return {"pendulum-swingup", 3, 1, {-2.0}, {2.0}, 200}; }
EnvSpec cartpole_spec() { return {"cartpole-continuous", 4, 1, {-10.0}, {10.0}, 500}; }
EnvSpec reacher_spec() { return {"point-reacher", 6, 2, {-1.0, -1.0}, {1.0, 1.0}, 100}; }

}  // namespace

Pendulum::Pendulum() : Environment(pendulum_spec()) {}

void Pendulum::set_state(double phi, double omega) {
    phi_ = phi;
    omega_ = omega;
    restart();
}

double Pendulum::energy() const noexcept {
    return 0.5 * omega_ * omega_ + 1.5 * kGravity / kLength * std::cos(phi_);
}

void Pendulum::reset_state(Rng& rng) {
    phi_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
    omega_ = rng.uniform(-1.0, 1.0);
}

StepResult Pendulum::advance(std::span<const double> action) {
    const double tau = action[0];
    const double th = wrap_angle(phi_);
    // Cost of the state the action was taken in.
    const double reward = -(th * th + 0.1 * omega_ * omega_ + 0.001 * tau * tau);
    const double accel = 1.5 * kGravity / kLength * std::sin(phi_) + 3.0 * tau / (kMass * kLength * kLength);
    omega_ = std::clamp(omega_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
    phi_ += omega_ * kDt;
    return {reward, false, false};
}

void Pendulum::write_observation(std::span<double> out) const {
    out[0] = std::cos(phi_);
    out[1] = std::sin(phi_);
    out[2] = omega_;
}

// ---------------------------------------------------------------------------

CartPole::CartPole() : Environment(cartpole_spec()) {}

void CartPole::set_state(double x, double x_dot, double theta, double theta_dot) {
    x_ = x;
    x_dot_ = x_dot;
    theta_ = theta;
    theta_dot_ = theta_dot;
    restart();
}

void CartPole::reset_state(Rng& rng) {
    x_ = rng.uniform(-0.05, 0.05);
    x_dot_ = rng.uniform(-0.05, 0.05);
    theta_ = rng.uniform(-0.05, 0.05);
    theta_dot_ = rng.uniform(-0.05, 0.05);
}

StepResult CartPole::advance(std::span<const double> action) {
    const double force = action[0];
    const double total_mass = kCartMass + kPoleMass;
    const double pole_ml = kPoleMass * kHalfLength;
    const double cos_t = std::cos(theta_);
    const double sin_t = std::sin(theta_);
    const double temp = (force + pole_ml * theta_dot_ * theta_dot_ * sin_t) / total_mass;
    const double theta_acc =
        (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;
    x_dot_ += kDt * x_acc;
    x_ += kDt * x_dot_;
    theta_dot_ += kDt * theta_acc;
    theta_ += kDt * theta_dot_;
    const bool failed = std::abs(theta_) > kThetaLimit || std::abs(x_) > kXLimit;
    return {failed ? 0.0 : 1.0, failed, failed};
}

void CartPole::write_observation(std::span<double> out) const {
    out[0] = x_;
    out[1] = x_dot_;
    out[2] = theta_;
    out[3] = theta_dot_;
}

// ---------------------------------------------------------------------------

PointReacher::PointReacher() : Environment(reacher_spec()) {}

void PointReacher::set_state(std::span<const double> pos, std::span<const double> vel, std::span<const double> goal) {
    if (pos.size() != 2 || vel.size() != 2 || goal.size() != 2) throw DimensionError("point-reacher: state is 2-D");
    for (int i = 0; i < 2; ++i) {
        pos_[i] = pos[i];
        vel_[i] = vel[i];
        goal_[i] = goal[i];
    }
    restart();
}

void PointReacher::reset_state(Rng& rng) {
    // Start at rest at the origin; goal uniform in a disc.
    const double r = kGoalRadius * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    pos_[0] = pos_[1] = 0.0;
    vel_[0] = vel_[1] = 0.0;
    goal_[0] = r * std::cos(a);
    goal_[1] = r * std::sin(a);
}

StepResult PointReacher::advance(std::span<const double> action) {
    for (int i = 0; i < 2; ++i) {
        vel_[i] += action[i] * kDt;
        pos_[i] += vel_[i] * kDt;
    }
    return {-std::hypot(pos_[0] - goal_[0], pos_[1] - goal_[1]), false, false};
}

void PointReacher::write_observation(std::span<double> out) const {
    out[0] = pos_[0];
    out[1] = pos_[1];
    out[2] = vel_[0];
    out[3] = vel_[1];
    out[4] = goal_[0];
    out[5] = goal_[1];
}

// ---------------------------------------------------------------------------

std::vector<std::string> env_names() { return {"pendulum-swingup", "cartpole-continuous", "point-reacher"}; }

EnvSpec env_spec(std::string_view name) { return make_env(name)->spec(); }

std::unique_ptr<Environment> make_env(std::string_view name) {
    if (name == "pendulum-swingup") return std::make_unique<Pendulum>();
    if (name == "cartpole-continuous") return std::make_unique<CartPole>();
    if (name == "point-reacher") return std::make_unique<PointReacher>();
    throw ConfigError("unknown environment '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

std::vector<double> scale_action(const EnvSpec& spec, std::span<const double> unit_action) {
    if (unit_action.size() != spec.act_dim) throw DimensionError("scale_action: dimension mismatch");
    std::vector<double> out(unit_action.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lo = spec.action_low[i];
        const double hi = spec.action_high[i];
        out[i] = lo + 0.5 * (unit_action[i] + 1.0) * (hi - lo);
    }
    return out;
}

RolloutResult rollout(const PolicyFn& policy, Environment& env, const RolloutOptions& options) {
    const EnvSpec& spec = env.spec();
    RolloutResult result;
    std::vector<double> obs(spec.obs_dim);
    std::vector<double> normalized(spec.obs_dim);
    while (!env.done()) {
        obs = env.observation();
        if (options.observation_stats != nullptr) options.observation_stats->update(obs);
        std::span<const double> input = obs;
        if (options.normalizer != nullptr && options.normalizer->count() > 0) {
            options.normalizer->normalize_into(obs, normalized);
            input = normalized;
        }
        const std::vector<double> out = policy(input);
        if (out.size() != spec.act_dim) {
            throw ValueError("policy returned " + std::to_string(out.size()) + " actions, env '" + spec.name +
                             "' expects " + std::to_string(spec.act_dim));
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!std::isfinite(out[i])) {
                throw ValueError("policy produced a non-finite action (component " + std::to_string(i) + ") at step " +
                                 std::to_string(env.steps()) + " of env '" + spec.name + "'");
            }
        }
        const StepResult r = env.step(scale_action(spec, out));
        result.total_reward += r.reward;
        result.terminated_early = r.terminated;
    }
    result.steps = env.steps();
    return result;
}

RolloutResult rollout(const PolicyFn& policy, std::string_view env_name, std::uint64_t env_seed,
                      const RolloutOptions& options, int horizon_override) {
    auto env = make_env(env_name);
    if (horizon_override > 0) env->set_horizon(horizon_override);
    env->reset(env_seed);
    return rollout(policy, *env, options);
}

}  // namespace chromatic::envs
