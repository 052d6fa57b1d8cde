#include "fedqhd/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fedqhd/error.hpp"

namespace fedqhd {

namespace {

std::string_view base_name(std::string_view name) {
  const auto dash = name.find("-v");
  return dash == std::string_view::npos ? name : name.substr(0, dash);
}

}  // namespace

EnvSpec env_spec(std::string_view name) {
  const auto base = base_name(name);
  if (base == "CartPole") return {"CartPole", 4, 2, 500, 475.0};
  if (base == "Acrobot") return {"Acrobot", 6, 3, 500, std::nullopt};
  if (base == "MountainCar") return {"MountainCar", 2, 3, 200, std::nullopt};
  throw InvalidConfig("unknown environment '" + std::string(name) + "'");
}

std::unique_ptr<Environment> make_env(std::string_view name) {
  const auto base = env_spec(name).name;
  if (base == "CartPole") return std::make_unique<CartPole>();
  if (base == "Acrobot") return std::make_unique<Acrobot>();
  return std::make_unique<MountainCar>();
}

// ---------------------------------------------------------------------------

State Environment::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  return reset();
}

State Environment::reset() {
  initial_state(rng_);
  obs_ = observe();
  steps_ = 0;
  done_ = false;
  started_ = true;
  return obs_;
}

void Environment::restart_from_current() {
  obs_ = observe();
  steps_ = 0;
  done_ = false;
  started_ = true;
}

Transition Environment::step(std::size_t action) {
  if (!started_ || done_) throw SteppedAfterDone(spec_.name + ": step() on a finished episode");
  if (action >= spec_.action_count)
    throw std::out_of_range(spec_.name + ": action " + std::to_string(action) +
                            " out of range");
  Transition t;
  t.s = obs_;
  t.a = action;
  const Outcome out = advance(action);
  ++steps_;
  obs_ = observe();
  t.r = out.reward;
  t.s_next = obs_;
  t.terminated = out.terminated;
  t.truncated = !out.terminated && steps_ >= spec_.max_episode_steps;
  done_ = t.done();
  return t;
}

// ---------------------------------------------------------------------------
// CartPole

CartPole::CartPole() : Environment(env_spec("CartPole")), state_(4, 0.0) {}

void CartPole::set_state(const State& s) {
  if (s.size() != 4) throw DimensionMismatch("CartPole::set_state: need 4 values");
  state_ = s;
  restart_from_current();
}

State CartPole::initial_state(Rng& rng) {
  for (double& v : state_) v = rng.uniform(-0.05, 0.05);
  return state_;
}

Environment::Outcome CartPole::advance(std::size_t action) {
  double x = state_[0], x_dot = state_[1], theta = state_[2], theta_dot = state_[3];
  const double force = action == 1 ? kForceMag : -kForceMag;
  const double costheta = std::cos(theta);
  const double sintheta = std::sin(theta);
  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sintheta) / kTotalMass;
  const double thetaacc =
      (kGravity * sintheta - costheta * temp) /
      (kLength * (4.0 / 3.0 - kMassPole * costheta * costheta / kTotalMass));
  const double xacc = temp - kPoleMassLength * thetaacc * costheta / kTotalMass;
  // Explicit Euler.
  x = x + kTau * x_dot;
  x_dot = x_dot + kTau * xacc;
  theta = theta + kTau * theta_dot;
  theta_dot = theta_dot + kTau * thetaacc;
  state_ = {x, x_dot, theta, theta_dot};
  const bool terminated =
      x < -kXThreshold || x > kXThreshold || theta < -kThetaThreshold || theta > kThetaThreshold;
  return {1.0, terminated};
}

// ---------------------------------------------------------------------------
// MountainCar

MountainCar::MountainCar() : Environment(env_spec("MountainCar")), state_(2, 0.0) {}

void MountainCar::set_state(const State& s) {
  if (s.size() != 2) throw DimensionMismatch("MountainCar::set_state: need 2 values");
  state_ = s;
  restart_from_current();
}

State MountainCar::initial_state(Rng& rng) {
  state_ = {rng.uniform(-0.6, -0.4), 0.0};
  return state_;
}

Environment::Outcome MountainCar::advance(std::size_t action) {
  double position = state_[0];
  double velocity = state_[1];
  velocity += (static_cast<double>(action) - 1.0) * kForce + std::cos(3.0 * position) * (-kGravity);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  position += velocity;
  position = std::clamp(position, kMinPosition, kMaxPosition);
  if (position == kMinPosition && velocity < 0.0) velocity = 0.0;
  state_ = {position, velocity};
  const bool terminated = position >= kGoalPosition && velocity >= kGoalVelocity;
  return {-1.0, terminated};
}

// ---------------------------------------------------------------------------
// Acrobot ("book" dynamics, no torque noise)

namespace {

using Aug = std::array<double, 5>;  // theta1, theta2, dtheta1, dtheta2, torque

Aug acrobot_derivs(const Aug& s) {
  constexpr double m1 = Acrobot::kLinkMass1;
  constexpr double m2 = Acrobot::kLinkMass2;
  constexpr double l1 = Acrobot::kLinkLength1;
  constexpr double lc1 = Acrobot::kLinkComPos1;
  constexpr double lc2 = Acrobot::kLinkComPos2;
  constexpr double i1 = Acrobot::kLinkMoi;
  constexpr double i2 = Acrobot::kLinkMoi;
  constexpr double g = 9.8;
  constexpr double pi = std::numbers::pi;
  const double a = s[4];
  const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
  const double d1 =
      m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - pi / 2.0);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - pi / 2.0) + phi2;
  const double ddtheta2 =
      (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0};
}

Aug axpy5(const Aug& y, double h, const Aug& k) {
  Aug out;
  for (std::size_t i = 0; i < 5; ++i) out[i] = y[i] + h * k[i];
  return out;
}

double wrap(double x, double lo, double hi) {
  const double diff = hi - lo;
  while (x > hi) x -= diff;
  while (x < lo) x += diff;
  return x;
}

}  // namespace

Acrobot::Acrobot() : Environment(env_spec("Acrobot")), state_(4, 0.0) {}

void Acrobot::set_state(const State& s) {
  if (s.size() != 4) throw DimensionMismatch("Acrobot::set_state: need 4 values");
  state_ = s;
  restart_from_current();
}

State Acrobot::initial_state(Rng& rng) {
  for (double& v : state_) v = rng.uniform(-0.1, 0.1);
  return state_;
}

State Acrobot::observe() const {
  return {std::cos(state_[0]), std::sin(state_[0]), std::cos(state_[1]),
          std::sin(state_[1]), state_[2], state_[3]};
}

Environment::Outcome Acrobot::advance(std::size_t action) {
  constexpr double torques[3] = {-1.0, 0.0, 1.0};
  constexpr double pi = std::numbers::pi;
  const Aug y0 = {state_[0], state_[1], state_[2], state_[3], torques[action]};
  // One classical RK4 step over [0, dt].
  const double dt = kDt;
  const Aug k1 = acrobot_derivs(y0);
  const Aug k2 = acrobot_derivs(axpy5(y0, dt / 2.0, k1));
  const Aug k3 = acrobot_derivs(axpy5(y0, dt / 2.0, k2));
  const Aug k4 = acrobot_derivs(axpy5(y0, dt, k3));
  Aug y;
  for (std::size_t i = 0; i < 5; ++i)
    y[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  state_ = {wrap(y[0], -pi, pi), wrap(y[1], -pi, pi), std::clamp(y[2], -kMaxVel1, kMaxVel1),
            std::clamp(y[3], -kMaxVel2, kMaxVel2)};
  const bool terminated = -std::cos(state_[0]) - std::cos(state_[1] + state_[0]) > 1.0;
  return {terminated ? 0.0 : -1.0, terminated};
}

}  // namespace fedqhd
