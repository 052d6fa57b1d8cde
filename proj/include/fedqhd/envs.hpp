#pragma once

// Seedable classic-control tasks with continuous states and discrete actions.
// Dynamics, constants, reset distributions and reward conventions follow the
// canonical Gym classic-control definitions (CartPole-v1, Acrobot-v1,
// MountainCar-v0).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedqhd/rng.hpp"

namespace fedqhd {

using State = std::vector<double>;

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_count = 0;
  std::size_t max_episode_steps = 0;
  std::optional<double> solved_threshold;
};

struct Transition {
  State s;
  std::size_t a = 0;
  double r = 0.0;
  State s_next;
  bool terminated = false;  // reached a terminal state of the MDP
  bool truncated = false;   // hit the step cap without terminating

  bool done() const noexcept { return terminated || truncated; }
};

/// Spec for "CartPole", "Acrobot" or "MountainCar" (a "-v1"/"-v0" suffix is
/// accepted). Throws InvalidConfig for other names.
EnvSpec env_spec(std::string_view name);

class Environment {
 public:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)), rng_(0) {}
  virtual ~Environment() = default;
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  const EnvSpec& spec() const noexcept { return spec_; }

  /// Reseeds the environment's generator, then starts an episode.
  State reset(std::uint64_t seed);
  /// Starts an episode, continuing the current generator stream.
  State reset();

  /// Throws SteppedAfterDone after termination/truncation or before the first
  /// reset, and std::out_of_range for an invalid action.
  Transition step(std::size_t action);

  bool done() const noexcept { return done_; }
  std::size_t steps() const noexcept { return steps_; }
  const State& observation() const noexcept { return obs_; }

 protected:
  struct Outcome {
    double reward;
    bool terminated;
  };
  virtual State initial_state(Rng& rng) = 0;
  virtual Outcome advance(std::size_t action) = 0;
  virtual State observe() const = 0;
  /// Starts a fresh episode from whatever physical state the subclass holds.
  void restart_from_current();

 private:
  EnvSpec spec_;
  Rng rng_;
  State obs_;
  std::size_t steps_ = 0;
  bool done_ = true;
  bool started_ = false;
};

std::unique_ptr<Environment> make_env(std::string_view name);

/// Cart-pole balancing. Observation (x, x_dot, theta, theta_dot); action 0
/// pushes left, 1 pushes right; +1 per step; 500-step cap.
class CartPole final : public Environment {
 public:
  CartPole();
  /// Overwrites the physical state (for tests and reference traces).
  void set_state(const State& s);

  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kLength = 0.5;
  static constexpr double kPoleMassLength = kMassPole * kLength;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXThreshold = 2.4;

 protected:
  State initial_state(Rng& rng) override;
  Outcome advance(std::size_t action) override;
  State observe() const override { return state_; }

 private:
  State state_;
};

/// Under-powered car in a valley. Observation (position, velocity); actions
/// push left / none / right; -1 per step; 200-step cap.
class MountainCar final : public Environment {
 public:
  MountainCar();
  void set_state(const State& s);

  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;
  static constexpr double kGoalVelocity = 0.0;
  static constexpr double kForce = 0.001;
  static constexpr double kGravity = 0.0025;

 protected:
  State initial_state(Rng& rng) override;
  Outcome advance(std::size_t action) override;
  State observe() const override { return state_; }

 private:
  State state_;
};

/// Two-link underactuated swing-up, RK4-integrated. Observation
/// (cos t1, sin t1, cos t2, sin t2, dt1, dt2); torques -1/0/+1; -1 per step
/// until the tip clears the bar; 500-step cap.
class Acrobot final : public Environment {
 public:
  Acrobot();
  /// Internal state (theta1, theta2, dtheta1, dtheta2).
  void set_state(const State& s);
  const State& internal_state() const noexcept { return state_; }

  static constexpr double kDt = 0.2;
  static constexpr double kLinkLength1 = 1.0;
  static constexpr double kLinkMass1 = 1.0;
  static constexpr double kLinkMass2 = 1.0;
  static constexpr double kLinkComPos1 = 0.5;
  static constexpr double kLinkComPos2 = 0.5;
  static constexpr double kLinkMoi = 1.0;
  static constexpr double kMaxVel1 = 4.0 * 3.14159265358979323846;
  static constexpr double kMaxVel2 = 9.0 * 3.14159265358979323846;

 protected:
  State initial_state(Rng& rng) override;
  Outcome advance(std::size_t action) override;
  State observe() const override;

 private:
  State state_;
};

}  // namespace fedqhd
