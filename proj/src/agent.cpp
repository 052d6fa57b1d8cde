#include "fedqhd/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fedqhd/error.hpp"
#include "fedqhd/kernels.hpp"
#include "json.hpp"

namespace fedqhd {

namespace {

constexpr std::uint64_t kActionTag = 0x4143540000000000ULL;
constexpr std::uint64_t kEnvTag = 0x454e560000000000ULL;

}  // namespace

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidConfig("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

std::size_t ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return items_.size() - 1;
  }
  const std::size_t written = head_;
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
  return written;
}

void ReplayBuffer::clear() noexcept {
  items_.clear();
  head_ = 0;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay buffer index");
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(items_.size()));
  return idx;
}

// ---------------------------------------------------------------------------

double EpsilonSchedule::at(std::size_t episode) const {
  if (anneal_episodes <= 1 || episode + 1 >= anneal_episodes) return end;
  const double rate =
      std::pow(end / start, 1.0 / static_cast<double>(anneal_episodes - 1));
  return std::max(end, start * std::pow(rate, static_cast<double>(episode)));
}

TargetRule parse_target_rule(const std::string& name) {
  if (name == "online_argmax") return TargetRule::online_argmax;
  if (name == "target_max") return TargetRule::target_max;
  throw InvalidConfig("unknown target rule '" + name + "'");
}

std::string to_string(TargetRule rule) {
  return rule == TargetRule::online_argmax ? "online_argmax" : "target_max";
}

void AgentConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidConfig("agent: eta must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidConfig("agent: gamma must lie in (0, 1)");
  if (target_sync_period == 0) throw InvalidConfig("agent: target sync period must be >= 1");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end > 0.0 &&
        epsilon.end <= epsilon.start))
    throw InvalidConfig("agent: epsilon schedule needs 0 < end <= start <= 1");
  if (epsilon.anneal_episodes == 0) throw InvalidConfig("agent: anneal episodes must be >= 1");
  if (buffer_capacity == 0) throw InvalidConfig("agent: buffer capacity must be >= 1");
  if (minibatch == 0) throw InvalidConfig("agent: minibatch must be >= 1");
}

// ---------------------------------------------------------------------------
// QhdAgent

QhdAgent::QhdAgent(std::shared_ptr<const FeatureMap> features, std::size_t action_count,
                   const AgentConfig& config, std::uint64_t seed)
    : features_(std::move(features)),
      actions_(action_count),
      config_(config),
      seed_(seed),
      epsilon_(config.epsilon.at(0)),
      buffer_(config.buffer_capacity),
      rng_(derive_seed(seed, kActionTag)) {
  if (!features_) throw InvalidConfig("agent: feature map is null");
  if (actions_ == 0) throw InvalidConfig("agent: need at least one action");
  config_.validate();
  wt_ = Matrix(actions_, features_->dim());
  wt_target_ = wt_;
  phi_.resize(features_->dim());
  phi_next_.resize(features_->dim());
  phi_cur_.resize(features_->dim());
  if (config_.feature_cache) cache_.reserve(config_.buffer_capacity * features_->dim());
}

Matrix QhdAgent::weights() const { return wt_.transpose(); }
Matrix QhdAgent::target_weights() const { return wt_target_.transpose(); }

void QhdAgent::set_online_weights(const Matrix& w) {
  if (w.rows() != dim() || w.cols() != actions_)
    throw DimensionMismatch("agent: weights must be D x |A|");
  wt_ = w.transpose();
}

void QhdAgent::install_weights(const Matrix& w) {
  set_online_weights(w);
  wt_target_ = wt_;
}

std::vector<double> QhdAgent::q_values_from_features(std::span<const double> phi) const {
  if (phi.size() != dim()) throw DimensionMismatch("agent: feature length mismatch");
  std::vector<double> q(actions_);
  for (std::size_t a = 0; a < actions_; ++a)
    q[a] = kernels::dot(phi.data(), wt_.row(a).data(), phi.size());
  return q;
}

std::vector<double> QhdAgent::q_values(std::span<const double> s) const {
  return q_values_from_features(features_->encode(s));
}

std::vector<double> QhdAgent::target_q_values(std::span<const double> s) const {
  const auto phi = features_->encode(s);
  std::vector<double> q(actions_);
  for (std::size_t a = 0; a < actions_; ++a)
    q[a] = kernels::dot(phi.data(), wt_target_.row(a).data(), phi.size());
  return q;
}

std::size_t QhdAgent::argmax(std::span<const double> q) noexcept {
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

std::size_t QhdAgent::greedy_action(std::span<const double> s) const {
  return argmax(q_values(s));
}

std::size_t QhdAgent::select_action(std::span<const double> s, Rng& rng) const {
  if (rng.uniform() < epsilon_) return static_cast<std::size_t>(rng.below(actions_));
  return greedy_action(s);
}

void QhdAgent::set_epsilon(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  epsilon_ = eps;
}

void QhdAgent::set_eta(double eta) {
  if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  config_.eta = eta;
}

double QhdAgent::td_step(std::size_t a, double r, bool bootstrap, const double* phi,
                         const double* phi_next) {
  const std::size_t d = dim();
  const double q_sa = kernels::dot(phi, wt_.row(a).data(), d);
  double y = r;
  if (bootstrap) {
    double next = 0.0;
    if (config_.target_rule == TargetRule::online_argmax) {
      std::size_t best = 0;
      double best_q = 0.0;
      for (std::size_t b = 0; b < actions_; ++b) {
        const double q = kernels::dot(phi_next, wt_.row(b).data(), d);
        if (b == 0 || q > best_q) {
          best = b;
          best_q = q;
        }
      }
      next = kernels::dot(phi_next, wt_target_.row(best).data(), d);
    } else {
      for (std::size_t b = 0; b < actions_; ++b) {
        const double q = kernels::dot(phi_next, wt_target_.row(b).data(), d);
        if (b == 0 || q > next) next = q;
      }
    }
    y += config_.gamma * next;
  }
  const double delta = y - q_sa;
  kernels::axpy(config_.eta * delta, phi, wt_.row(a).data(), d);
  return delta;
}

double QhdAgent::td_update(const Transition& t) {
  if (t.a >= actions_) throw std::out_of_range("td_update: action out of range");
  features_->encode_into(t.s, phi_);
  const bool bootstrap = !t.terminated && (config_.bootstrap_truncated || !t.truncated);
  if (bootstrap) features_->encode_into(t.s_next, phi_next_);
  return td_step(t.a, t.r, bootstrap, phi_.data(), phi_next_.data());
}

void QhdAgent::replay(std::size_t i) {
  const Transition& t = buffer_[i];
  if (!config_.feature_cache) {
    td_update(t);
    return;
  }
  const std::size_t d = dim();
  const double* phi = cache_.data() + buffer_.slot(i) * d;
  const bool bootstrap = !t.terminated && (config_.bootstrap_truncated || !t.truncated);
  const double* phi_next = phi_next_.data();
  if (bootstrap) {
    // Within an episode s' is the state of the next stored transition.
    if (!t.truncated && i + 1 < buffer_.size())
      phi_next = cache_.data() + buffer_.slot(i + 1) * d;
    else
      features_->encode_into(t.s_next, phi_next_);
  }
  td_step(t.a, t.r, bootstrap, phi, phi_next);
}

void QhdAgent::td_update(std::span<const Transition> batch) {
  for (const auto& t : batch) td_update(t);
}

void QhdAgent::sync_target() { wt_target_ = wt_; }

std::vector<double> QhdAgent::run_local_episodes(Environment& env, std::size_t k) {
  if (k == 0) throw InvalidConfig("run_local_episodes: K must be >= 1");
  if (env.spec().action_count != actions_ || env.spec().state_dim != features_->state_dim())
    throw DimensionMismatch("agent and environment disagree on state or action size");
  const std::size_t warmup = std::max<std::size_t>(config_.learning_starts, 1);
  std::vector<double> returns;
  returns.reserve(k);
  for (std::size_t e = 0; e < k; ++e) {
    epsilon_ = config_.epsilon.at(episodes_);
    State s = env.reset(derive_seed(seed_, kEnvTag, episodes_));
    double total = 0.0;
    for (;;) {
      features_->encode_into(s, phi_cur_);
      std::size_t action;
      if (rng_.uniform() < epsilon_)
        action = static_cast<std::size_t>(rng_.below(actions_));
      else
        action = argmax(q_values_from_features(phi_cur_));
      Transition t = env.step(action);
      total += t.r;
      const bool done = t.done();
      s = t.s_next;
      const std::size_t slot = buffer_.push(std::move(t));
      if (config_.feature_cache) {
        const std::size_t d = dim();
        if (cache_.size() < (slot + 1) * d) cache_.resize((slot + 1) * d);
        std::copy(phi_cur_.begin(), phi_cur_.end(), cache_.begin() + slot * d);
      }
      if (buffer_.size() >= warmup)
        for (std::size_t i : buffer_.sample_indices(config_.minibatch, rng_)) replay(i);
      if (done) break;
    }
    ++episodes_;
    if (episodes_ % config_.target_sync_period == 0) sync_target();
    returns.push_back(total);
  }
  epsilon_ = config_.epsilon.at(episodes_);
  return returns;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& stem, const Matrix& weights,
                     const EncoderDescriptor& encoder) {
  save_matrix(stem + ".bin", weights);
  nlohmann::json j = {{"seed", encoder.seed},
                      {"D", encoder.dim},
                      {"d", encoder.state_dim},
                      {"sigma", encoder.sigma}};
  std::ofstream out(stem + ".json");
  if (!out) throw IoError("cannot write " + stem + ".json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + stem + ".json");
}

Checkpoint load_checkpoint(const std::string& stem) {
  Checkpoint c;
  c.weights = load_matrix(stem + ".bin");
  std::ifstream in(stem + ".json");
  if (!in) throw IoError("cannot read " + stem + ".json");
  try {
    const auto j = nlohmann::json::parse(in);
    c.encoder.seed = j.at("seed").get<std::uint64_t>();
    c.encoder.dim = j.at("D").get<std::size_t>();
    c.encoder.state_dim = j.at("d").get<std::size_t>();
    c.encoder.sigma = j.at("sigma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(stem + ".json: " + e.what());
  }
  return c;
}

}  // namespace fedqhd
