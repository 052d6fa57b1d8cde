#pragma once

// QHD client: Q(s, a) = phi(s) . w_a over a fixed feature map, epsilon-greedy
// acting, a replay buffer and semi-gradient TD(0) against delayed weights.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedqhd/encoder.hpp"
#include "fedqhd/envs.hpp"
#include "fedqhd/linalg.hpp"
#include "fedqhd/rng.hpp"

namespace fedqhd {

/// Bounded FIFO of transitions; once full, the oldest entry is overwritten.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Returns the physical slot written.
  std::size_t push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return items_.empty(); }
  void clear() noexcept;

  /// i-th stored transition, 0 = oldest.
  const Transition& operator[](std::size_t i) const;
  /// Physical slot of the i-th stored transition.
  std::size_t slot(std::size_t i) const noexcept { return (head_ + i) % items_.size(); }

  /// n indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest entry once full
  std::vector<Transition> items_;
};

/// Exponential per-episode decay from `start` that lands on `end` at episode
/// index anneal_episodes - 1 and stays there.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.001;
  std::size_t anneal_episodes = 600;

  double at(std::size_t episode) const;
};

enum class TargetRule {
  online_argmax,  // y = r + g * phi(s').w-_{a*}, a* = argmax_a phi(s').w_a
  target_max,     // y = r + g * max_a phi(s').w-_a
};

TargetRule parse_target_rule(const std::string& name);
std::string to_string(TargetRule rule);

struct AgentConfig {
  double eta = 0.01;
  double gamma = 0.99;
  std::size_t target_sync_period = 5;  // episodes
  EpsilonSchedule epsilon;
  std::size_t buffer_capacity = 10000;
  std::size_t minibatch = 32;
  std::size_t learning_starts = 32;  // buffer fill before updates begin
  TargetRule target_rule = TargetRule::online_argmax;
  bool bootstrap_truncated = true;
  /// Keep phi(s) next to each stored transition instead of re-encoding on
  /// every replay. Same results, more memory (capacity x D doubles).
  bool feature_cache = true;

  void validate() const;  // throws InvalidConfig
};

class QhdAgent {
 public:
  QhdAgent(std::shared_ptr<const FeatureMap> features, std::size_t action_count,
           const AgentConfig& config, std::uint64_t seed);

  const FeatureMap& features() const noexcept { return *features_; }
  std::shared_ptr<const FeatureMap> feature_map() const noexcept { return features_; }
  std::size_t dim() const noexcept { return features_->dim(); }
  std::size_t action_count() const noexcept { return actions_; }
  const AgentConfig& config() const noexcept { return config_; }

  /// D x |A| readouts, one column per action.
  Matrix weights() const;
  Matrix target_weights() const;
  /// Overwrites the online weights only.
  void set_online_weights(const Matrix& w);
  /// Installs broadcast weights into both the online and the target copy.
  void install_weights(const Matrix& w);

  std::vector<double> q_values(std::span<const double> s) const;
  std::vector<double> target_q_values(std::span<const double> s) const;
  std::vector<double> q_values_from_features(std::span<const double> phi) const;

  /// Lowest index among the maximizers.
  static std::size_t argmax(std::span<const double> q) noexcept;
  std::size_t greedy_action(std::span<const double> s) const;
  std::size_t select_action(std::span<const double> s, Rng& rng) const;

  double epsilon() const noexcept { return epsilon_; }
  void set_epsilon(double eps);
  void set_eta(double eta);

  /// One semi-gradient step; returns the TD error.
  double td_update(const Transition& t);
  /// Sequential updates in batch order.
  void td_update(std::span<const Transition> batch);
  void sync_target();

  /// Plays K episodes, one minibatch update per environment step.
  std::vector<double> run_local_episodes(Environment& env, std::size_t k);

  std::size_t episodes_played() const noexcept { return episodes_; }
  const ReplayBuffer& buffer() const noexcept { return buffer_; }

 private:
  double td_step(std::size_t a, double r, bool bootstrap, const double* phi,
                 const double* phi_next);
  void replay(std::size_t i);

  std::shared_ptr<const FeatureMap> features_;
  std::size_t actions_;
  AgentConfig config_;
  std::uint64_t seed_;
  Matrix wt_;         // |A| x D, row a is w_a
  Matrix wt_target_;  // |A| x D
  double epsilon_;
  std::size_t episodes_ = 0;
  ReplayBuffer buffer_;
  Rng rng_;
  std::vector<double> phi_;
  std::vector<double> phi_next_;
  std::vector<double> phi_cur_;
  std::vector<double> cache_;  // slot-major phi(s) rows
};

struct Checkpoint {
  Matrix weights;
  EncoderDescriptor encoder;
};

/// Writes `<stem>.bin` (matrix dump of W) and `<stem>.json` (encoder descriptor).
void save_checkpoint(const std::string& stem, const Matrix& weights,
                     const EncoderDescriptor& encoder);
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace fedqhd
