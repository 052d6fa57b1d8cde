#pragma once

// Server side of a round: exact weight averaging for clients that share an
// encoder, and anchor-teacher construction plus closed-form ridge compilation
// for clients with different encoders.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedqhd/agent.hpp"
#include "fedqhd/encoder.hpp"
#include "fedqhd/envs.hpp"
#include "fedqhd/linalg.hpp"

namespace fedqhd {

std::vector<double> uniform_weights(std::size_t n);
/// Throws BadWeights unless there are n entries, all >= 0, summing to 1 within 1e-12.
void check_weights(std::span<const double> pi, std::size_t n);

/// sum_i pi_i W_i. Throws DimensionMismatch or BadWeights.
Matrix federate_homogeneous(std::span<const Matrix> ws, std::span<const double> pi);

/// Each client gets the pi-weighted average of the first D_min rows, padded
/// back to its own D_i with zeros.
std::vector<Matrix> truncate_fedavg(std::span<const Matrix> ws, std::span<const double> pi);

struct GramSpectrum {
  double lambda_max = 0.0;
  double gamma = 0.0;  // smallest eigenvalue above the numerical-rank cutoff
  std::size_t rank = 0;
};

/// Spectrum of a symmetric PSD Gram. Eigenvalues below
/// n * eps * lambda_max count as zero.
GramSpectrum gram_spectrum(const Matrix& gram);

/// Cached anchor quantities for one client encoder.
struct ClientAnchors {
  std::uint64_t fingerprint = 0;
  Matrix features;  // X_i, m x D_i
  /// X X^T when m <= D_i, otherwise X^T X; both share their nonzero spectrum.
  Matrix small_gram;
  bool gram_is_anchor_space = true;
  GramSpectrum spectrum;
};

class AnchorSet {
 public:
  /// `states` is m x d, one anchor state per row.
  explicit AnchorSet(Matrix states);

  std::size_t size() const noexcept { return states_.rows(); }
  const Matrix& states() const noexcept { return states_; }

  /// Encodes the anchors for a client and caches X_i, its Gram and gamma_i.
  /// Returns the client's index in this set.
  std::size_t add_client(const FeatureMap& features, bool with_spectrum = true);
  std::size_t client_count() const noexcept { return clients_.size(); }
  const ClientAnchors& client(std::size_t i) const { return clients_.at(i); }

  /// G_i = X_i X_i^T (from the cache when it is the cached orientation).
  Matrix anchor_gram(std::size_t i) const;
  /// X_i^T X_i.
  Matrix feature_gram(std::size_t i) const;

  /// Throws StaleCache when the cache for client i was built from another map.
  void check_fresh(std::size_t i, const FeatureMap& features) const;

 private:
  Matrix states_;
  std::vector<ClientAnchors> clients_;
};

/// m states visited by uniformly random policies, restarting episodes as
/// needed.
Matrix sample_anchor_states(Environment& env, std::size_t m, std::uint64_t seed);

/// Q_i^ref = X_i W_i. Throws StaleCache or DimensionMismatch.
Matrix evaluate_anchors(const QhdAgent& agent, const AnchorSet& anchors, std::size_t client);
Matrix evaluate_anchors(const Matrix& weights, const AnchorSet& anchors, std::size_t client);

struct AnchorTeacher {
  Matrix q_ref;  // m x |A|
  std::vector<double> pi;
};

AnchorTeacher aggregate_teacher(std::span<const Matrix> q_refs, std::span<const double> pi);

/// (X^T X + lambda I)^{-1} X^T Q. lambda = 0 needs X of full column rank,
/// otherwise NotSpdError.
Matrix compile_ridge_primal(const AnchorSet& anchors, std::size_t client, const Matrix& teacher,
                            double lambda);
/// X^T (X X^T + lambda I)^{-1} Q, lambda > 0.
Matrix compile_ridge_dual(const AnchorSet& anchors, std::size_t client, const Matrix& teacher,
                          double lambda);

enum class CompileSolver { primal, dual };

/// Dual when m < D_i, primal otherwise.
CompileSolver choose_solver(std::size_t m, std::size_t dim) noexcept;

struct CompileReport {
  std::size_t client = 0;
  CompileSolver solver = CompileSolver::primal;
  double lambda = 0.0;
  double gamma = 0.0;
  double anchor_residual = 0.0;  // ||X W - Q||_F
  /// Relative Frobenius gap to the other solver; NaN unless cross-checked.
  double primal_dual_discrepancy = 0.0;
  double compile_ms = 0.0;
};

struct CompileResult {
  Matrix weights;
  CompileReport report;
};

CompileResult compile_client(const AnchorSet& anchors, std::size_t client,
                             const Matrix& teacher, double lambda, bool cross_check = false,
                             bool wall_clock = false);

// ---------------------------------------------------------------------------
// Rounds

enum class FederationMode { fedqhd, independent, truncate_avg };

FederationMode parse_federation_mode(const std::string& name);
std::string to_string(FederationMode mode);

struct RoundConfig {
  FederationMode mode = FederationMode::fedqhd;
  std::size_t episodes = 50;  // K
  double lambda = 1e-6;
  std::vector<double> pi;     // empty = uniform
  bool homogeneous = true;    // clients share one encoder
  bool cross_check = false;   // run both ridge forms and report their gap
  bool wall_clock = true;
};

struct ClientRound {
  std::size_t client = 0;
  std::vector<double> returns;
  std::optional<CompileReport> compile;
};

struct RoundMetrics {
  std::size_t round = 0;
  std::vector<ClientRound> clients;
};

/// K local episodes per client (in parallel), then the server step of the
/// configured mode. Federated weights overwrite both W and W^-; independent
/// clients keep their weights and only refresh W^-.
RoundMetrics run_round(std::span<QhdAgent> agents, std::span<std::unique_ptr<Environment>> envs,
                       const AnchorSet* anchors, const RoundConfig& config,
                       std::size_t round_index = 0);

/// Server step alone (no local training).
std::vector<std::optional<CompileReport>> federate(std::span<QhdAgent> agents,
                                                   const AnchorSet* anchors,
                                                   const RoundConfig& config);

}  // namespace fedqhd
