#pragma once

// Synthetic testbed for the federation gap: a ground-truth Q* that is linear
// in a master random-feature map, oracle projections onto each client's
// features, principal angles between client subspaces, the three-term gap
// bound, and the D / m sweeps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedqhd/encoder.hpp"
#include "fedqhd/linalg.hpp"
#include "fedqhd/rng.hpp"

namespace fedqhd {

struct TruthConfig {
  std::size_t state_dim = 16;
  std::size_t master_dim = 2048;  // D*
  double sigma = 6.5;
  double box = 1.0;  // states ~ U[-box, box]^d
  std::size_t action_count = 2;
};

class SyntheticTruth {
 public:
  /// Master RFF encoder and W* with i.i.d. N(0, 1) entries, both from `seed`.
  SyntheticTruth(const TruthConfig& config, std::uint64_t seed);
  /// Explicit master map and D* x |A| weights.
  SyntheticTruth(std::shared_ptr<const FeatureMap> master, Matrix weights, double box);

  const FeatureMap& master() const noexcept { return *master_; }
  const Matrix& weights() const noexcept { return weights_; }
  std::size_t state_dim() const noexcept { return master_->state_dim(); }
  std::size_t action_count() const noexcept { return weights_.cols(); }
  double box() const noexcept { return box_; }
  /// B = max_a ||w*_a||_2.
  double norm_bound() const noexcept { return norm_bound_; }

  Matrix sample_states(std::size_t n, Rng& rng) const;
  /// n x |A| matrix of Q*(s, a).
  Matrix q_star(const Matrix& states) const;

 private:
  std::shared_ptr<const FeatureMap> master_;
  Matrix weights_;
  double box_;
  double norm_bound_ = 0.0;
};

struct OracleFit {
  Matrix weights;        // W-hat, D_i x |A|
  double eps_rep = 0.0;  // held-out RMS of Q* - phi W-hat
  double ridge = 0.0;    // ridge actually used
};

/// Least-squares projection of Q* onto a client's features from n_fit states
/// (0 means 10 D_i) with ridge 1e-10; the ridge grows tenfold on a failed
/// Cholesky.
OracleFit oracle_projection(const FeatureMap& client, const SyntheticTruth& truth,
                            std::size_t n_fit, std::uint64_t seed, std::size_t n_holdout = 2048);

/// Orthonormal basis of the column space of x (n x k), returned as k x n with
/// orthonormal rows (classical Gram-Schmidt, two passes). Throws RankDeficient.
Matrix orthonormal_rows(const Matrix& x);

/// sin of the largest principal angle between two row-orthonormal bases.
double principal_sine(const Matrix& basis_a, const Matrix& basis_b);
/// Same, with bases built from the two maps evaluated on the probe states.
double principal_sine(const FeatureMap& a, const FeatureMap& b, const Matrix& probes);

struct ClientGap {
  double delta_max = 0.0;  // max |Q-hat - Q(W glob)| over test states and actions
  double delta_rms = 0.0;
  double q_error = 0.0;    // RMS of Q* - Q(W glob)
  double eps_rep = 0.0;
  double gamma = 0.0;
  double oracle_norm = 0.0;  // ||W-hat||_F
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;

  double bound() const noexcept { return term1 + term2 + term3; }
  bool bound_holds() const noexcept { return delta_max <= bound(); }
};

struct GapReport {
  std::vector<ClientGap> clients;
  Matrix sine;  // N x N, sin theta_ij
  double norm_bound = 0.0;
  double lambda = 0.0;
  std::size_t anchors = 0;
  bool with_bounds = false;

  bool all_hold() const noexcept;
  double mean_q_error() const noexcept;
  double mean_delta_rms() const noexcept;
  double max_delta() const noexcept;
  double mean_gamma() const noexcept;
};

struct GapOptions {
  std::vector<double> pi;       // empty = uniform
  std::size_t n_fit = 0;        // oracle fit size, 0 = 10 D_i
  std::size_t probes = 0;       // 0 = 4 D_max
  bool bounds = true;           // principal angles and the three terms
  std::uint64_t seed = 0;
  /// Optional edit of the teacher handed to client i's compile.
  std::function<void(std::size_t client, Matrix& teacher)> perturb_teacher;
};

/// Static federation: oracle anchor predictions form the teacher, every client
/// compiles it (dual if m < D_i, else primal) and is scored on test states.
GapReport federation_gap(std::span<const std::shared_ptr<const FeatureMap>> clients,
                         const SyntheticTruth& truth, const Matrix& anchor_states,
                         double lambda, const Matrix& test_states, const GapOptions& options);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSettings {
  TruthConfig truth;
  std::size_t clients = 3;
  double lambda = 1e-3;
  std::size_t test_states = 512;
  bool bounds = false;
};

struct SweepRow {
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::size_t anchors = 0;
  double lambda = 0.0;
  double q_error = 0.0;
  double delta_rms = 0.0;
  double delta_max = 0.0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  double gamma = 0.0;
};

/// Heterogeneous fleet of `settings.clients` encoders with dimension D and
/// bandwidths drawn around the truth bandwidth; one row, client-averaged.
SweepRow testbed_point(const SweepSettings& settings, std::size_t dim, std::size_t anchors,
                       std::uint64_t seed);

/// m = anchor_factor * D for every D.
std::vector<SweepRow> dimension_sweep(std::span<const std::size_t> dims,
                                      const SweepSettings& settings,
                                      std::span<const std::uint64_t> seeds,
                                      std::size_t anchor_factor = 4);
std::vector<SweepRow> anchor_sweep(std::span<const std::size_t> anchor_counts, std::size_t dim,
                                   const SweepSettings& settings,
                                   std::span<const std::uint64_t> seeds);

/// Mean over seeds of q_error, keyed by the sweep variable (D or m).
struct SweepPoint {
  double x = 0.0;
  double error = 0.0;
  double gamma = 0.0;
};
std::vector<SweepPoint> mean_by_dim(std::span<const SweepRow> rows);
std::vector<SweepPoint> mean_by_anchors(std::span<const SweepRow> rows);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);
/// Least-squares slope of log(error) against log(x).
LineFit loglog_fit(std::span<const SweepPoint> points);

}  // namespace fedqhd
