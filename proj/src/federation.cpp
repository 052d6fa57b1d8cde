#include "fedqhd/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>

#include "fedqhd/error.hpp"
#include "fedqhd/kernels.hpp"

namespace fedqhd {

namespace {

constexpr std::uint64_t kAnchorPolicyTag = 0x414e43484f520000ULL;

Matrix add_ridge(Matrix a, double lambda) {
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  return a;
}

const Matrix& checked_teacher(const AnchorSet& anchors, std::size_t client,
                              const Matrix& teacher) {
  const auto& c = anchors.client(client);
  if (teacher.rows() != c.features.rows())
    throw DimensionMismatch("compile: teacher has " + std::to_string(teacher.rows()) +
                            " rows for " + std::to_string(c.features.rows()) + " anchors");
  return c.features;
}

}  // namespace

std::vector<double> uniform_weights(std::size_t n) {
  if (n == 0) throw BadWeights("federation weights: no clients");
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

void check_weights(std::span<const double> pi, std::size_t n) {
  if (pi.size() != n)
    throw BadWeights("federation weights: expected " + std::to_string(n) + " entries, got " +
                     std::to_string(pi.size()));
  double sum = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw BadWeights("federation weights must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw BadWeights("federation weights must sum to 1");
}

Matrix federate_homogeneous(std::span<const Matrix> ws, std::span<const double> pi) {
  if (ws.empty()) throw BadWeights("federate_homogeneous: no clients");
  check_weights(pi, ws.size());
  Matrix out(ws[0].rows(), ws[0].cols());
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (ws[i].rows() != out.rows() || ws[i].cols() != out.cols())
      throw DimensionMismatch("federate_homogeneous: client weight shapes differ");
    auto dst = out.data();
    auto src = ws[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += pi[i] * src[k];
  }
  return out;
}

std::vector<Matrix> truncate_fedavg(std::span<const Matrix> ws, std::span<const double> pi) {
  if (ws.empty()) throw BadWeights("truncate_fedavg: no clients");
  check_weights(pi, ws.size());
  std::size_t d_min = ws[0].rows();
  for (const auto& w : ws) {
    if (w.cols() != ws[0].cols()) throw DimensionMismatch("truncate_fedavg: action counts differ");
    d_min = std::min(d_min, w.rows());
  }
  const std::size_t cols = ws[0].cols();
  Matrix avg(d_min, cols);
  for (std::size_t i = 0; i < ws.size(); ++i)
    for (std::size_t r = 0; r < d_min; ++r)
      for (std::size_t c = 0; c < cols; ++c) avg(r, c) += pi[i] * ws[i](r, c);
  std::vector<Matrix> out;
  out.reserve(ws.size());
  for (const auto& w : ws) {
    Matrix padded(w.rows(), cols);
    std::copy(avg.data().begin(), avg.data().end(), padded.data().begin());
    out.push_back(std::move(padded));
  }
  return out;
}

GramSpectrum gram_spectrum(const Matrix& gram) {
  GramSpectrum s;
  if (gram.empty()) return s;
  const auto ev = sym_eigenvalues(gram);
  s.lambda_max = std::max(ev.front(), 0.0);
  const double cutoff =
      static_cast<double>(gram.rows()) * std::numeric_limits<double>::epsilon() * s.lambda_max;
  for (double v : ev) {
    if (v > cutoff) {
      ++s.rank;
      s.gamma = v;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Anchors

AnchorSet::AnchorSet(Matrix states) : states_(std::move(states)) {
  if (states_.rows() == 0) throw InvalidConfig("anchor set: need m >= 1 states");
}

std::size_t AnchorSet::add_client(const FeatureMap& features, bool with_spectrum) {
  if (features.state_dim() != states_.cols())
    throw DimensionMismatch("anchor set: encoder state dimension differs from anchors");
  ClientAnchors c;
  c.fingerprint = features.fingerprint();
  c.features = features.encode_batch(states_);
  c.gram_is_anchor_space = states_.rows() <= features.dim();
  c.small_gram = c.gram_is_anchor_space ? kernels::gram_rows(c.features)
                                        : kernels::gram_cols(c.features);
  if (with_spectrum) c.spectrum = gram_spectrum(c.small_gram);
  clients_.push_back(std::move(c));
  return clients_.size() - 1;
}

Matrix AnchorSet::anchor_gram(std::size_t i) const {
  const auto& c = client(i);
  return c.gram_is_anchor_space ? c.small_gram : kernels::gram_rows(c.features);
}

Matrix AnchorSet::feature_gram(std::size_t i) const {
  const auto& c = client(i);
  return c.gram_is_anchor_space ? kernels::gram_cols(c.features) : c.small_gram;
}

void AnchorSet::check_fresh(std::size_t i, const FeatureMap& features) const {
  const auto& c = client(i);
  if (c.fingerprint != features.fingerprint() || c.features.cols() != features.dim())
    throw StaleCache("anchor cache for client " + std::to_string(i) +
                     " was built from a different encoder");
}

Matrix sample_anchor_states(Environment& env, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw InvalidConfig("sample_anchors: m must be >= 1");
  Rng policy(derive_seed(seed, kAnchorPolicyTag));
  Matrix out(m, env.spec().state_dim);
  std::uint64_t episode = 0;
  State s = env.reset(derive_seed(seed, episode++));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(s.begin(), s.end(), out.row(i).begin());
    const Transition t = env.step(static_cast<std::size_t>(policy.below(env.spec().action_count)));
    s = t.done() ? env.reset(derive_seed(seed, episode++)) : t.s_next;
  }
  return out;
}

Matrix evaluate_anchors(const Matrix& weights, const AnchorSet& anchors, std::size_t client) {
  const auto& x = anchors.client(client).features;
  if (weights.rows() != x.cols())
    throw DimensionMismatch("evaluate_anchors: weights have " + std::to_string(weights.rows()) +
                            " rows, anchor features have " + std::to_string(x.cols()));
  return kernels::matmul(x, weights);
}

Matrix evaluate_anchors(const QhdAgent& agent, const AnchorSet& anchors, std::size_t client) {
  anchors.check_fresh(client, agent.features());
  return evaluate_anchors(agent.weights(), anchors, client);
}

AnchorTeacher aggregate_teacher(std::span<const Matrix> q_refs, std::span<const double> pi) {
  if (q_refs.empty()) throw BadWeights("aggregate_teacher: no clients");
  check_weights(pi, q_refs.size());
  AnchorTeacher t;
  t.pi.assign(pi.begin(), pi.end());
  t.q_ref = federate_homogeneous(q_refs, pi);
  return t;
}

// ---------------------------------------------------------------------------
// Compilation

Matrix compile_ridge_primal(const AnchorSet& anchors, std::size_t client, const Matrix& teacher,
                            double lambda) {
  if (!(lambda >= 0.0)) throw InvalidConfig("compile: lambda must be >= 0");
  const Matrix& x = checked_teacher(anchors, client, teacher);
  const Matrix a = add_ridge(anchors.feature_gram(client), lambda);
  return cholesky_solve(a, kernels::matmul_tn(x, teacher));
}

Matrix compile_ridge_dual(const AnchorSet& anchors, std::size_t client, const Matrix& teacher,
                          double lambda) {
  if (!(lambda > 0.0)) throw InvalidConfig("compile: the dual form needs lambda > 0");
  const Matrix& x = checked_teacher(anchors, client, teacher);
  const Matrix a = add_ridge(anchors.anchor_gram(client), lambda);
  return kernels::matmul_tn(x, cholesky_solve(a, teacher));
}

CompileSolver choose_solver(std::size_t m, std::size_t dim) noexcept {
  return m < dim ? CompileSolver::dual : CompileSolver::primal;
}

CompileResult compile_client(const AnchorSet& anchors, std::size_t client,
                             const Matrix& teacher, double lambda, bool cross_check,
                             bool wall_clock) {
  const auto& c = anchors.client(client);
  CompileResult r;
  r.report.client = client;
  r.report.lambda = lambda;
  r.report.gamma = c.spectrum.gamma;
  r.report.solver = choose_solver(c.features.rows(), c.features.cols());
  const auto t0 = std::chrono::steady_clock::now();
  r.weights = r.report.solver == CompileSolver::dual
                  ? compile_ridge_dual(anchors, client, teacher, lambda)
                  : compile_ridge_primal(anchors, client, teacher, lambda);
  if (wall_clock)
    r.report.compile_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  Matrix fit = kernels::matmul(c.features, r.weights);
  fit -= teacher;
  r.report.anchor_residual = frobenius_norm(fit);
  r.report.primal_dual_discrepancy = std::numeric_limits<double>::quiet_NaN();
  if (cross_check && lambda > 0.0) {
    Matrix other = r.report.solver == CompileSolver::dual
                       ? compile_ridge_primal(anchors, client, teacher, lambda)
                       : compile_ridge_dual(anchors, client, teacher, lambda);
    const double scale = frobenius_norm(r.weights);
    other -= r.weights;
    r.report.primal_dual_discrepancy = scale > 0.0 ? frobenius_norm(other) / scale
                                                   : frobenius_norm(other);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Rounds

FederationMode parse_federation_mode(const std::string& name) {
  if (name == "fedqhd") return FederationMode::fedqhd;
  if (name == "independent") return FederationMode::independent;
  if (name == "truncate_avg") return FederationMode::truncate_avg;
  throw InvalidConfig("unknown federation mode '" + name + "'");
}

std::string to_string(FederationMode mode) {
  switch (mode) {
    case FederationMode::fedqhd: return "fedqhd";
    case FederationMode::independent: return "independent";
    case FederationMode::truncate_avg: return "truncate_avg";
  }
  return "?";
}

std::vector<std::optional<CompileReport>> federate(std::span<QhdAgent> agents,
                                                   const AnchorSet* anchors,
                                                   const RoundConfig& config) {
  const std::size_t n = agents.size();
  std::vector<std::optional<CompileReport>> reports(n);
  if (n == 0) return reports;
  const std::vector<double> pi = config.pi.empty() ? uniform_weights(n) : config.pi;
  check_weights(pi, n);

  if (config.mode == FederationMode::independent) {
    for (auto& a : agents) a.install_weights(a.weights());
    return reports;
  }

  std::vector<Matrix> ws;
  ws.reserve(n);
  for (const auto& a : agents) ws.push_back(a.weights());

  if (config.mode == FederationMode::truncate_avg) {
    auto out = truncate_fedavg(ws, pi);
    for (std::size_t i = 0; i < n; ++i) agents[i].install_weights(out[i]);
    return reports;
  }

  if (config.homogeneous) {
    const Matrix glob = federate_homogeneous(ws, pi);
    for (auto& a : agents) a.install_weights(glob);
    return reports;
  }

  if (anchors == nullptr || anchors->client_count() != n)
    throw InvalidConfig("heterogeneous federation needs an anchor set covering every client");
  std::vector<Matrix> q_refs;
  q_refs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) q_refs.push_back(evaluate_anchors(agents[i], *anchors, i));
  const AnchorTeacher teacher = aggregate_teacher(q_refs, pi);
  std::vector<CompileResult> compiled(n);
  for (std::size_t i = 0; i < n; ++i)
    compiled[i] = compile_client(*anchors, i, teacher.q_ref, config.lambda, config.cross_check,
                                 config.wall_clock);
  for (std::size_t i = 0; i < n; ++i) {
    agents[i].install_weights(compiled[i].weights);
    reports[i] = compiled[i].report;
  }
  return reports;
}

RoundMetrics run_round(std::span<QhdAgent> agents, std::span<std::unique_ptr<Environment>> envs,
                       const AnchorSet* anchors, const RoundConfig& config,
                       std::size_t round_index) {
  if (agents.size() != envs.size()) throw DimensionMismatch("run_round: one environment per agent");
  const std::size_t n = agents.size();
  RoundMetrics metrics;
  metrics.round = round_index;
  metrics.clients.resize(n);

  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      metrics.clients[i].client = i;
      metrics.clients[i].returns = agents[i].run_local_episodes(*envs[i], config.episodes);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  auto reports = federate(agents, anchors, config);
  for (std::size_t i = 0; i < n; ++i) metrics.clients[i].compile = reports[i];
  return metrics;
}

}  // namespace fedqhd
