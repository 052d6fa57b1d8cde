#include "fedqhd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fedqhd/error.hpp"
#include "fedqhd/federation.hpp"
#include "fedqhd/kernels.hpp"

namespace fedqhd {

namespace {

constexpr std::uint64_t kMasterTag = 0x51;
constexpr std::uint64_t kTruthWeightTag = 0x52;
constexpr std::uint64_t kOracleTag = 0x53;
constexpr std::uint64_t kHoldoutTag = 0x54;
constexpr std::uint64_t kProbeTag = 0x55;
constexpr std::uint64_t kTruthTag = 0x56;
constexpr std::uint64_t kFleetTag = 0x57;
constexpr std::uint64_t kAnchorTag = 0x58;
constexpr std::uint64_t kTestTag = 0x59;
constexpr std::uint64_t kGapTag = 0x5a;

constexpr double kOracleRidge = 1e-10;
// A column whose component outside the span of the previous ones is below
// this fraction of its norm counts as dependent.
constexpr double kRankTol = 1e-13;

double rms(const Matrix& a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s / static_cast<double>(a.size()));
}

double mean_of(const std::vector<ClientGap>& gaps, double ClientGap::*field) {
  if (gaps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : gaps) s += g.*field;
  return s / static_cast<double>(gaps.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// SyntheticTruth

SyntheticTruth::SyntheticTruth(const TruthConfig& config, std::uint64_t seed) : box_(config.box) {
  if (config.state_dim == 0 || config.master_dim == 0 || config.action_count == 0 ||
      !(config.sigma > 0.0) || !(config.box > 0.0))
    throw InvalidConfig("truth: dimensions, sigma and box must be positive");
  master_ = std::make_shared<RffEncoder>(EncoderDescriptor{
      derive_seed(seed, kMasterTag), config.master_dim, config.state_dim, config.sigma});
  weights_ = Matrix(config.master_dim, config.action_count);
  Rng rng(derive_seed(seed, kTruthWeightTag));
  for (double& w : weights_.data()) w = rng.normal();
  for (std::size_t a = 0; a < weights_.cols(); ++a)
    norm_bound_ = std::max(norm_bound_, norm2(weights_.col(a)));
}

SyntheticTruth::SyntheticTruth(std::shared_ptr<const FeatureMap> master, Matrix weights,
                               double box)
    : master_(std::move(master)), weights_(std::move(weights)), box_(box) {
  if (!master_ || weights_.rows() != master_->dim() || weights_.cols() == 0)
    throw DimensionMismatch("truth weights must be D* x |A|");
  if (!(box_ > 0.0)) throw InvalidConfig("truth: box must be positive");
  for (std::size_t a = 0; a < weights_.cols(); ++a)
    norm_bound_ = std::max(norm_bound_, norm2(weights_.col(a)));
}

Matrix SyntheticTruth::sample_states(std::size_t n, Rng& rng) const {
  Matrix s(n, state_dim());
  for (double& v : s.data()) v = rng.uniform(-box_, box_);
  return s;
}

Matrix SyntheticTruth::q_star(const Matrix& states) const {
  return kernels::matmul(master_->encode_batch(states), weights_);
}

// ---------------------------------------------------------------------------
// Oracle projection

OracleFit oracle_projection(const FeatureMap& client, const SyntheticTruth& truth,
                            std::size_t n_fit, std::uint64_t seed, std::size_t n_holdout) {
  if (client.state_dim() != truth.state_dim())
    throw DimensionMismatch("client and truth disagree on the state dimension");
  const std::size_t dim = client.dim();
  if (n_fit == 0) n_fit = 10 * dim;

  Rng rng(derive_seed(seed, kOracleTag));
  const Matrix states = truth.sample_states(n_fit, rng);
  const Matrix x = client.encode_batch(states);
  const Matrix rhs = kernels::matmul_tn(x, truth.q_star(states));
  const Matrix gram = kernels::gram_cols(x);

  OracleFit fit;
  fit.ridge = kOracleRidge;
  for (;;) {
    Matrix a = gram;
    for (std::size_t k = 0; k < dim; ++k) a(k, k) += fit.ridge;
    try {
      fit.weights = cholesky_solve(a, rhs);
      break;
    } catch (const NotSpdError&) {
      fit.ridge *= 10.0;
      if (fit.ridge > 1.0) throw;
    }
  }

  Rng hold(derive_seed(seed, kHoldoutTag));
  const Matrix held = truth.sample_states(n_holdout, hold);
  fit.eps_rep = rms(truth.q_star(held) - kernels::matmul(client.encode_batch(held), fit.weights));
  return fit;
}

// ---------------------------------------------------------------------------
// Principal angles

Matrix orthonormal_rows(const Matrix& x) {
  Matrix q = x.transpose();  // k x n, one feature column per row
  const std::size_t k = q.rows();
  const std::size_t n = q.cols();
  if (k > n) throw RankDeficient("more feature columns than probe states");
  std::vector<double> c(k);
  for (std::size_t j = 0; j < k; ++j) {
    double* v = q.row(j).data();
    const double original = norm2(q.row(j));
    if (!(original > 0.0)) throw RankDeficient("zero feature column on the probes");
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) c[i] = kernels::dot(q.row(i).data(), v, n);
      for (std::size_t i = 0; i < j; ++i) kernels::axpy(-c[i], q.row(i).data(), v, n);
    }
    const double r = norm2(q.row(j));
    if (!(r > kRankTol * original))
      throw RankDeficient("feature matrix loses rank on the probe states");
    for (std::size_t t = 0; t < n; ++t) v[t] /= r;
  }
  return q;
}

double principal_sine(const Matrix& basis_a, const Matrix& basis_b) {
  if (basis_a.cols() != basis_b.cols())
    throw DimensionMismatch("bases live on different probe sets");
  // The largest angle is governed by the smaller subspace: sin = ||(I - P_big) U_small||_2.
  // Working with the residual avoids the cancellation in sqrt(1 - sigma_min^2).
  const bool a_small = basis_a.rows() <= basis_b.rows();
  const Matrix& small = a_small ? basis_a : basis_b;
  const Matrix& big = a_small ? basis_b : basis_a;
  if (small.rows() == 0) return 0.0;
  const Matrix c = kernels::matmul_nt(big, small);      // k_big x k_small
  const Matrix resid = small - kernels::matmul_tn(c, big);  // k_small x n
  const auto eig = sym_eigenvalues(kernels::gram_rows(resid));
  const double top = eig.empty() ? 0.0 : std::max(eig.front(), 0.0);
  return std::min(1.0, std::sqrt(top));
}

double principal_sine(const FeatureMap& a, const FeatureMap& b, const Matrix& probes) {
  if (probes.rows() < std::max(a.dim(), b.dim()))
    throw InvalidConfig("principal_sine needs at least max(D_i, D_j) probe states");
  return principal_sine(orthonormal_rows(a.encode_batch(probes)),
                        orthonormal_rows(b.encode_batch(probes)));
}

// ---------------------------------------------------------------------------
// Federation gap

bool GapReport::all_hold() const noexcept {
  return std::all_of(clients.begin(), clients.end(),
                     [](const ClientGap& g) { return g.bound_holds(); });
}
double GapReport::mean_q_error() const noexcept { return mean_of(clients, &ClientGap::q_error); }
double GapReport::mean_delta_rms() const noexcept {
  return mean_of(clients, &ClientGap::delta_rms);
}
double GapReport::mean_gamma() const noexcept { return mean_of(clients, &ClientGap::gamma); }
double GapReport::max_delta() const noexcept {
  double m = 0.0;
  for (const auto& g : clients) m = std::max(m, g.delta_max);
  return m;
}

GapReport federation_gap(std::span<const std::shared_ptr<const FeatureMap>> clients,
                         const SyntheticTruth& truth, const Matrix& anchor_states,
                         double lambda, const Matrix& test_states, const GapOptions& options) {
  const std::size_t n = clients.size();
  if (n == 0) throw InvalidConfig("federation_gap needs at least one client");
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be >= 0");
  const std::vector<double> pi = options.pi.empty() ? uniform_weights(n) : options.pi;
  check_weights(pi, n);

  // Oracles are keyed on the encoder so identical maps get identical fits.
  std::vector<OracleFit> oracles;
  oracles.reserve(n);
  for (const auto& c : clients)
    oracles.push_back(oracle_projection(*c, truth, options.n_fit,
                                        derive_seed(options.seed, c->fingerprint())));

  AnchorSet anchors(anchor_states);
  std::vector<Matrix> q_refs;
  for (std::size_t i = 0; i < n; ++i) {
    anchors.add_client(*clients[i], true);
    q_refs.push_back(evaluate_anchors(oracles[i].weights, anchors, i));
  }
  const AnchorTeacher teacher = aggregate_teacher(q_refs, pi);

  GapReport report;
  report.lambda = lambda;
  report.anchors = anchors.size();
  report.norm_bound = truth.norm_bound();
  report.with_bounds = options.bounds;
  report.clients.resize(n);

  const Matrix q_true = truth.q_star(test_states);
  for (std::size_t i = 0; i < n; ++i) {
    Matrix t = teacher.q_ref;
    if (options.perturb_teacher) options.perturb_teacher(i, t);
    const CompileResult compiled = compile_client(anchors, i, t, lambda);
    const Matrix f = clients[i]->encode_batch(test_states);
    const Matrix q_glob = kernels::matmul(f, compiled.weights);
    const Matrix delta = kernels::matmul(f, oracles[i].weights) - q_glob;
    ClientGap& g = report.clients[i];
    g.delta_max = max_abs(delta);
    g.delta_rms = rms(delta);
    g.q_error = rms(q_true - q_glob);
    g.eps_rep = oracles[i].eps_rep;
    g.gamma = anchors.client(i).spectrum.gamma;
    g.oracle_norm = frobenius_norm(oracles[i].weights);
  }

  if (options.bounds) {
    std::size_t dmax = 0;
    for (const auto& c : clients) dmax = std::max(dmax, c->dim());
    const std::size_t n_probe = options.probes ? options.probes : 4 * dmax;
    Rng rng(derive_seed(options.seed, kProbeTag));
    const Matrix probes = truth.sample_states(n_probe, rng);
    std::vector<Matrix> bases;
    bases.reserve(n);
    for (const auto& c : clients) bases.push_back(orthonormal_rows(c->encode_batch(probes)));
    report.sine = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = principal_sine(bases[i], bases[j]);
        report.sine(i, j) = s;
        report.sine(j, i) = s;
      }
    const double root_m = std::sqrt(static_cast<double>(anchors.size()));
    for (std::size_t i = 0; i < n; ++i) {
      ClientGap& g = report.clients[i];
      double h = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i)
          h += pi[j] * (2.0 * report.norm_bound * report.sine(i, j) + g.eps_rep +
                        report.clients[j].eps_rep);
      g.term1 = h;
      g.term2 = root_m * h / std::sqrt(g.gamma + lambda);
      g.term3 = lambda * g.oracle_norm / (g.gamma + lambda);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepRow testbed_point(const SweepSettings& settings, std::size_t dim, std::size_t anchors,
                       std::uint64_t seed) {
  const SyntheticTruth truth(settings.truth, derive_seed(seed, kTruthTag));
  FleetConfig fc;
  fc.num_clients = settings.clients;
  fc.state_dim = settings.truth.state_dim;
  fc.homogeneous = false;
  fc.dims = {dim};
  fc.sigma0 = settings.truth.sigma;
  const EncoderFleet fleet = build_fleet(fc, derive_seed(seed, kFleetTag));
  std::vector<std::shared_ptr<const FeatureMap>> maps(fleet.encoders.begin(),
                                                      fleet.encoders.end());

  Rng anchor_rng(derive_seed(seed, kAnchorTag, anchors));
  const Matrix anchor_states = truth.sample_states(anchors, anchor_rng);
  Rng test_rng(derive_seed(seed, kTestTag));
  const Matrix test_states = truth.sample_states(settings.test_states, test_rng);

  GapOptions opt;
  opt.bounds = settings.bounds;
  opt.seed = derive_seed(seed, kGapTag);
  const GapReport rep =
      federation_gap(maps, truth, anchor_states, settings.lambda, test_states, opt);

  SweepRow row;
  row.seed = seed;
  row.dim = dim;
  row.anchors = anchors;
  row.lambda = settings.lambda;
  row.q_error = rep.mean_q_error();
  row.delta_rms = rep.mean_delta_rms();
  row.delta_max = rep.max_delta();
  row.gamma = rep.mean_gamma();
  row.term1 = mean_of(rep.clients, &ClientGap::term1);
  row.term2 = mean_of(rep.clients, &ClientGap::term2);
  row.term3 = mean_of(rep.clients, &ClientGap::term3);
  return row;
}

std::vector<SweepRow> dimension_sweep(std::span<const std::size_t> dims,
                                      const SweepSettings& settings,
                                      std::span<const std::uint64_t> seeds,
                                      std::size_t anchor_factor) {
  std::vector<SweepRow> rows;
  for (std::size_t d : dims)
    for (std::uint64_t s : seeds) rows.push_back(testbed_point(settings, d, anchor_factor * d, s));
  return rows;
}

std::vector<SweepRow> anchor_sweep(std::span<const std::size_t> anchor_counts, std::size_t dim,
                                   const SweepSettings& settings,
                                   std::span<const std::uint64_t> seeds) {
  std::vector<SweepRow> rows;
  for (std::size_t m : anchor_counts)
    for (std::uint64_t s : seeds) rows.push_back(testbed_point(settings, dim, m, s));
  return rows;
}

namespace {

std::vector<SweepPoint> mean_by(std::span<const SweepRow> rows,
                                std::size_t SweepRow::*key) {
  std::map<std::size_t, std::pair<SweepPoint, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& [p, count] = acc[r.*key];
    p.x = static_cast<double>(r.*key);
    p.error += r.q_error;
    p.gamma += r.gamma;
    ++count;
  }
  std::vector<SweepPoint> out;
  for (auto& [k, v] : acc) {
    SweepPoint p = v.first;
    p.error /= static_cast<double>(v.second);
    p.gamma /= static_cast<double>(v.second);
    out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<SweepPoint> mean_by_dim(std::span<const SweepRow> rows) {
  return mean_by(rows, &SweepRow::dim);
}
std::vector<SweepPoint> mean_by_anchors(std::span<const SweepRow> rows) {
  return mean_by(rows, &SweepRow::anchors);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidConfig("line fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidConfig("line fit needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

LineFit loglog_fit(std::span<const SweepPoint> points) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    if (!(p.x > 0.0) || !(p.error > 0.0)) throw InvalidConfig("log-log fit needs positive values");
    x.push_back(std::log(p.x));
    y.push_back(std::log(p.error));
  }
  return fit_line(x, y);
}

}  // namespace fedqhd
