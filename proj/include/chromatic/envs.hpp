#pragma once

// Built-in continuous-control environments and the rollout loop.
//
//   pendulum-swingup     obs (cos phi, sin phi, omega), torque in [-2, 2], 200 steps
//   cartpole-continuous  obs (x, x_dot, theta, theta_dot), force in [-10, 10], 500 steps
//   point-reacher        obs (pos, vel, goal) in R^6, accel in [-1, 1]^2, 100 steps
//
// All integrate with fixed-step semi-implicit (symplectic) Euler: velocity is
// advanced first and the new velocity moves the position.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chromatic/common.hpp"
#include "chromatic/es.hpp"

namespace chromatic::envs {

struct EnvSpec {
    std::string name;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;
    std::vector<double> action_low;
    std::vector<double> action_high;
    int horizon = 0;

    void validate() const;
};

struct StepResult {
    double reward = 0.0;
    bool done = false;
    bool terminated = false;  // failure before the horizon
};

class Environment {
public:
    virtual ~Environment() = default;

    const EnvSpec& spec() const noexcept { return spec_; }
    int steps() const noexcept { return steps_; }
    bool done() const noexcept { return done_; }

    void reset(std::uint64_t seed);
    /// Clips the action to the bounds; throws ValueError if the episode is over.
    StepResult step(std::span<const double> action);
    std::vector<double> observation() const;

    /// Overrides the horizon (>= 1) for subsequent episodes.
    void set_horizon(int horizon);

protected:
    explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}
    void restart() noexcept {
        steps_ = 0;
        done_ = false;
    }

    virtual void reset_state(Rng& rng) = 0;
    /// Advances one step with an already-clipped action.
    virtual StepResult advance(std::span<const double> action) = 0;
    virtual void write_observation(std::span<double> out) const = 0;

private:
    EnvSpec spec_;
    int steps_ = 0;
    bool done_ = false;
};

class Pendulum final : public Environment {
public:
    static constexpr double kGravity = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kDt = 0.05;
    static constexpr double kMaxSpeed = 8.0;

    Pendulum();
    /// phi = 0 is upright.
    void set_state(double phi, double omega);
    double phi() const noexcept { return phi_; }
    double omega() const noexcept { return omega_; }
    /// 0.5 omega^2 + (3g / 2l) cos phi; conserved by the continuous dynamics at zero torque.
    double energy() const noexcept;

private:
    void reset_state(Rng& rng) override;
    StepResult advance(std::span<const double> action) override;
    void write_observation(std::span<double> out) const override;

    double phi_ = 0.0;
    double omega_ = 0.0;
};

class CartPole final : public Environment {
public:
    static constexpr double kGravity = 9.8;
    static constexpr double kCartMass = 1.0;
    static constexpr double kPoleMass = 0.1;
    static constexpr double kHalfLength = 0.5;
    static constexpr double kDt = 0.02;
    static constexpr double kThetaLimit = 12.0 * 3.14159265358979323846 / 180.0;
    static constexpr double kXLimit = 2.4;

    CartPole();
    void set_state(double x, double x_dot, double theta, double theta_dot);
    std::vector<double> state() const { return {x_, x_dot_, theta_, theta_dot_}; }

private:
    void reset_state(Rng& rng) override;
    StepResult advance(std::span<const double> action) override;
    void write_observation(std::span<double> out) const override;

    double x_ = 0.0, x_dot_ = 0.0, theta_ = 0.0, theta_dot_ = 0.0;
};

class PointReacher final : public Environment {
public:
    static constexpr double kDt = 0.1;
    static constexpr double kGoalRadius = 0.5;

    PointReacher();
    void set_state(std::span<const double> pos, std::span<const double> vel, std::span<const double> goal);

private:
    void reset_state(Rng& rng) override;
    StepResult advance(std::span<const double> action) override;
    void write_observation(std::span<double> out) const override;

    double pos_[2]{}, vel_[2]{}, goal_[2]{};
};

std::vector<std::string> env_names();
EnvSpec env_spec(std::string_view name);
std::unique_ptr<Environment> make_env(std::string_view name);

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct RolloutResult {
    double total_reward = 0.0;
    int steps = 0;
    bool terminated_early = false;

    friend bool operator==(const RolloutResult&, const RolloutResult&) = default;
};

/// Maps a (normalized) observation to raw policy output in [-1, 1]^act_dim.
using PolicyFn = std::function<std::vector<double>(std::span<const double>)>;

/// Affine map from [-1, 1] to [low, high] per dimension.
std::vector<double> scale_action(const EnvSpec& spec, std::span<const double> unit_action);

struct RolloutOptions {
    const es::Normalizer* normalizer = nullptr;  // snapshot; identity if null
    es::Normalizer* observation_stats = nullptr;  // raw observations are accumulated here
};

/// Runs an episode from the environment's current state (already reset)
/// until done. Throws ValueError on a non-finite or wrongly sized action.
RolloutResult rollout(const PolicyFn& policy, Environment& env, const RolloutOptions& options = {});

RolloutResult rollout(const PolicyFn& policy, std::string_view env_name, std::uint64_t env_seed,
                      const RolloutOptions& options = {}, int horizon_override = 0);

}  // namespace chromatic::envs
