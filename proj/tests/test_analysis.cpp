#include <gtest/gtest.h>

#include <cmath>

#include "fedqhd/analysis.hpp"
#include "fedqhd/error.hpp"
#include "fedqhd/federation.hpp"
#include "fedqhd/kernels.hpp"
#include "test_util.hpp"

using namespace fedqhd;
using test::random_matrix;

namespace {

TruthConfig small_truth() {
  TruthConfig t;
  t.state_dim = 4;
  t.master_dim = 256;
  t.sigma = 1.5;
  return t;
}

std::shared_ptr<const FeatureMap> rff(std::uint64_t seed, std::size_t dim, std::size_t d,
                                      double sigma) {
  return std::make_shared<RffEncoder>(EncoderDescriptor{seed, dim, d, sigma});
}

double heldout_mse(const FeatureMap& f, const Matrix& w, const SyntheticTruth& truth,
                   const Matrix& states) {
  const Matrix diff = truth.q_star(states) - kernels::serial::matmul(f.encode_batch(states), w);
  double s = 0.0;
  for (double v : diff.data()) s += v * v;
  return s / static_cast<double>(diff.size());
}

// sin of the largest principal angle from the singular values of A B^T.
double svd_sine(const Matrix& a, const Matrix& b) {
  const Matrix& small = a.rows() <= b.rows() ? a : b;
  const Matrix& big = a.rows() <= b.rows() ? b : a;
  const auto sv = svd_singular_values(kernels::serial::matmul_nt(small, big));
  const double smin = sv.size() < small.rows() ? 0.0 : sv.back();
  return std::sqrt(std::max(0.0, 1.0 - smin * smin));
}

std::vector<std::shared_ptr<const FeatureMap>> hetero_fleet(std::size_t n,
                                                            std::vector<std::size_t> dims,
                                                            double sigma0, std::size_t d,
                                                            std::uint64_t seed) {
  FleetConfig fc;
  fc.num_clients = n;
  fc.state_dim = d;
  fc.homogeneous = false;
  fc.dims = std::move(dims);
  fc.sigma0 = sigma0;
  const EncoderFleet f = build_fleet(fc, seed);
  return {f.encoders.begin(), f.encoders.end()};
}

}  // namespace

TEST(Truth, ExplicitAndSeeded) {
  const SyntheticTruth a(small_truth(), 3), b(small_truth(), 3);
  EXPECT_EQ(a.weights(), b.weights());
  EXPECT_EQ(a.weights().rows(), 256u);
  double bmax = 0.0;
  for (std::size_t c = 0; c < a.weights().cols(); ++c) bmax = std::max(bmax, norm2(a.weights().col(c)));
  EXPECT_EQ(a.norm_bound(), bmax);
  Rng rng(1);
  const Matrix s = a.sample_states(500, rng);
  for (double v : s.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  const Matrix q = a.q_star(s);
  const auto phi = a.master().encode(s.row(7));
  EXPECT_NEAR(q(7, 1), dot(phi, a.weights().col(1)), 1e-12);
}

TEST(Oracle, SelfProjectionRecoversTruth) {
  const SyntheticTruth truth(small_truth(), 4);
  EXPECT_LE(oracle_projection(truth.master(), truth, 0, 9).eps_rep, 1e-6);
  // Weights are only identifiable when the master features are well conditioned.
  auto master = rff(41, 32, 4, 0.3);
  Rng rng(42);
  const SyntheticTruth sharp(master, random_matrix(32, 2, rng), 1.0);
  const OracleFit fit = oracle_projection(*master, sharp, 0, 43);
  EXPECT_LE(fit.eps_rep, 1e-6);
  EXPECT_LE(max_abs(fit.weights - sharp.weights()), 1e-6 * max_abs(sharp.weights()));
}

TEST(Oracle, RepresentationErrorShrinksWithDimension) {
  TruthConfig tc = small_truth();
  tc.master_dim = 2048;
  tc.state_dim = 8;
  tc.sigma = 2.0;
  const SyntheticTruth truth(tc, 5);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t d : {64u, 256u, 1024u}) {
    const OracleFit fit = oracle_projection(*rff(100 + d, d, 8, 2.0), truth, 0, 6);
    EXPECT_GT(fit.eps_rep, 0.0);
    EXPECT_LT(fit.eps_rep, prev) << d;
    prev = fit.eps_rep;
  }
}

TEST(Oracle, ResamplingStability) {
  TruthConfig tc = small_truth();
  tc.master_dim = 1024;
  const SyntheticTruth truth(tc, 6);
  const auto enc = rff(7, 96, 4, 1.5);
  const OracleFit a = oracle_projection(*enc, truth, 0, 100);
  const OracleFit b = oracle_projection(*enc, truth, 0, 200);
  Rng rng(8);
  const Matrix s = truth.sample_states(2000, rng);
  const Matrix f = enc->encode_batch(s);
  const Matrix diff = kernels::serial::matmul(f, a.weights - b.weights);
  double rms = 0.0;
  for (double v : diff.data()) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(diff.size()));
  EXPECT_GT(a.eps_rep, 0.0);
  EXPECT_LE(rms, 2.0 * std::max(a.eps_rep, b.eps_rep));
}

TEST(Oracle, FirstOrderOptimal) {
  TruthConfig tc = small_truth();
  tc.master_dim = 1024;
  const SyntheticTruth truth(tc, 7);
  const auto enc = rff(9, 64, 4, 1.5);
  const OracleFit fit = oracle_projection(*enc, truth, 20000, 10);
  Rng rng(11);
  const Matrix s = truth.sample_states(20000, rng);
  const double base = heldout_mse(*enc, fit.weights, truth, s);
  for (int t = 0; t < 20; ++t) {
    Matrix delta = random_matrix(64, 2, rng);
    delta *= 1e-3 / frobenius_norm(delta);
    const double perturbed = heldout_mse(*enc, fit.weights + delta, truth, s);
    // Sampling noise between the fit and held-out draws allows a tiny first-order term.
    EXPECT_GE(perturbed, base - 1e-3 * 1e-2 * std::sqrt(base)) << t;
  }
}

TEST(PrincipalSine, SameSubspaceIsZero) {
  Rng rng(12);
  const auto enc = rff(13, 40, 3, 1.0);
  Matrix probes(200, 3);
  for (double& v : probes.data()) v = rng.uniform(-1.0, 1.0);
  EXPECT_LE(principal_sine(*enc, *enc, probes), 1e-8);
  const Matrix basis = orthonormal_rows(enc->encode_batch(probes));
  EXPECT_EQ(basis.rows(), 40u);
  EXPECT_LE(max_abs(kernels::serial::matmul_nt(basis, basis) - Matrix::identity(40)), 1e-12);
}

TEST(PrincipalSine, OrthogonalLinesGiveOne) {
  const Matrix a{{1.0, 0.0, 0.0}}, b{{0.0, 0.0, 1.0}};
  EXPECT_NEAR(principal_sine(a, b), 1.0, 1e-15);
  // Two single-feature maps with orthogonal columns on the probes.
  const RffEncoder c(Matrix{{1.0}}, {0.0}), s(Matrix{{1.0}}, {-std::numbers::pi / 2});
  const Matrix probes{{0.0}, {std::numbers::pi / 2}};
  EXPECT_NEAR(principal_sine(c, s, probes), 1.0, 1e-12);
}

TEST(PrincipalSine, NestedSubspaces) {
  Rng rng(14);
  const RffEncoder big({15, 24, 3, 1.0});
  Matrix omega(8, 3);
  std::vector<double> phase(8);
  for (std::size_t k = 0; k < 8; ++k) {
    for (std::size_t c = 0; c < 3; ++c) omega(k, c) = big.frequencies()(3 * k, c);
    phase[k] = big.phases()[3 * k];
  }
  const RffEncoder small(omega, phase);
  Matrix probes(150, 3);
  for (double& v : probes.data()) v = rng.uniform(-1.0, 1.0);
  const Matrix ub = orthonormal_rows(big.encode_batch(probes));
  const Matrix us = orthonormal_rows(small.encode_batch(probes));
  const auto sv = svd_singular_values(kernels::serial::matmul_nt(us, ub));
  ASSERT_EQ(sv.size(), 8u);
  EXPECT_NEAR(sv.back(), 1.0, 1e-10);
  EXPECT_LE(principal_sine(us, ub), 1e-8);
  EXPECT_LE(principal_sine(ub, us), 1e-8);
}

TEST(PrincipalSine, SymmetricBoundedAndMatchesSvd) {
  Rng rng(16);
  Matrix probes(300, 4);
  for (double& v : probes.data()) v = rng.uniform(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const auto a = rff(rng.next_u64(), 10 + 5 * t, 4, 1.0);
    const auto b = rff(rng.next_u64(), 60 - 4 * t, 4, 0.7);
    const double ab = principal_sine(*a, *b, probes);
    const double ba = principal_sine(*b, *a, probes);
    EXPECT_NEAR(ab, ba, 1e-8);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    const Matrix ua = orthonormal_rows(a->encode_batch(probes));
    const Matrix ub = orthonormal_rows(b->encode_batch(probes));
    EXPECT_NEAR(ab, svd_sine(ua, ub), 1e-6);
  }
}

TEST(PrincipalSine, Errors) {
  Matrix x(5, 2);
  for (std::size_t r = 0; r < 5; ++r) x(r, 0) = x(r, 1) = r + 1.0;
  EXPECT_THROW(orthonormal_rows(x), RankDeficient);
  const auto a = rff(1, 30, 2, 1.0);
  EXPECT_THROW(principal_sine(*a, *a, Matrix(10, 2)), InvalidConfig);
}

TEST(Gap, SharedEncoderHasNoGap) {
  const SyntheticTruth truth(small_truth(), 17);
  const auto enc = rff(18, 64, 4, 1.5);
  const std::vector<std::shared_ptr<const FeatureMap>> clients{enc, enc, enc};
  Rng rng(19);
  const Matrix anchors = truth.sample_states(256, rng);
  const Matrix test = truth.sample_states(512, rng);
  GapOptions opt;
  opt.seed = 20;
  const GapReport r = federation_gap(clients, truth, anchors, 1e-12, test, opt);
  EXPECT_LE(r.max_delta(), 1e-6);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(r.sine(i, j), 1e-8);
  EXPECT_TRUE(r.all_hold());
}

TEST(Gap, SingleClientIsPureShrinkage) {
  // m >= D: every direction of the oracle weights is seen by the anchors.
  const SyntheticTruth truth(small_truth(), 21);
  const std::vector<std::shared_ptr<const FeatureMap>> clients{rff(22, 48, 4, 1.2)};
  Rng rng(23);
  const Matrix test = truth.sample_states(512, rng);
  for (std::size_t m : {48u, 96u, 192u}) {
    for (double lambda : {1e-6, 1e-2}) {
      const Matrix anchors = truth.sample_states(m, rng);
      GapOptions opt;
      opt.seed = 24;
      const GapReport r = federation_gap(clients, truth, anchors, lambda, test, opt);
      const ClientGap& g = r.clients[0];
      EXPECT_EQ(g.term1, 0.0);
      EXPECT_EQ(g.term2, 0.0);
      EXPECT_LE(g.delta_max, g.term3) << m << " " << lambda;
    }
  }
}

TEST(Gap, BoundHoldsOnHeterogeneousFleets) {
  const SyntheticTruth truth(small_truth(), 25);
  Rng rng(26);
  const Matrix test = truth.sample_states(512, rng);
  for (auto [n, m, lambda] : {std::tuple<std::size_t, std::size_t, double>{2, 40, 1e-6},
                              {3, 200, 1e-2},
                              {4, 100, 1e-6}}) {
    const auto clients = hetero_fleet(n, {32, 64, 48}, 1.5, 4, 27 + n);
    const Matrix anchors = truth.sample_states(m, rng);
    GapOptions opt;
    opt.seed = 28;
    const GapReport r = federation_gap(clients, truth, anchors, lambda, test, opt);
    for (const ClientGap& g : r.clients) {
      EXPECT_GT(g.term1, 0.0);
      EXPECT_LE(g.delta_max, g.bound()) << n << " " << m << " " << lambda;
    }
  }
}

TEST(Gap, KernelNoiseInTeacherIsInvisible) {
  const SyntheticTruth truth(small_truth(), 29);
  const auto clients = hetero_fleet(2, {24, 40}, 1.5, 4, 30);
  Rng rng(31);
  const Matrix anchors = truth.sample_states(120, rng);
  const Matrix test = truth.sample_states(512, rng);
  GapOptions opt;
  opt.seed = 32;
  opt.bounds = false;
  const GapReport clean = federation_gap(clients, truth, anchors, 1e-6, test, opt);
  opt.perturb_teacher = [&](std::size_t i, Matrix& t) {
    const Matrix x = clients[i]->encode_batch(anchors);
    const SymEig eig = sym_eig(kernels::serial::gram_rows(x));
    Rng noise(33 + i);
    for (std::size_t k = clients[i]->dim(); k < anchors.rows(); ++k)
      for (std::size_t a = 0; a < t.cols(); ++a) {
        const double c = noise.normal();
        for (std::size_t l = 0; l < t.rows(); ++l) t(l, a) += c * eig.eigenvectors(l, k);
      }
  };
  const GapReport noisy = federation_gap(clients, truth, anchors, 1e-6, test, opt);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_NEAR(noisy.clients[i].delta_max, clean.clients[i].delta_max, 1e-8);
}

TEST(Sweep, LineFits) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0}, y{1.0, 3.0, 5.0, 7.0};
  const LineFit f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, -1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  std::vector<SweepPoint> pts;
  for (double d : {16.0, 64.0, 256.0}) pts.push_back({d, 3.0 * std::pow(d, -0.5), 0.0});
  EXPECT_NEAR(loglog_fit(pts).slope, -0.5, 1e-12);
}

TEST(Sweep, MeansGroupBySweepVariable) {
  std::vector<SweepRow> rows(4);
  rows[0] = {1, 16, 64, 1e-6, 2.0, 0, 0, 0, 0, 0, 1.0};
  rows[1] = {2, 16, 64, 1e-6, 4.0, 0, 0, 0, 0, 0, 3.0};
  rows[2] = {1, 32, 128, 1e-6, 1.0, 0, 0, 0, 0, 0, 5.0};
  rows[3] = {2, 32, 128, 1e-6, 1.0, 0, 0, 0, 0, 0, 7.0};
  const auto by_d = mean_by_dim(rows);
  ASSERT_EQ(by_d.size(), 2u);
  EXPECT_EQ(by_d[0].x, 16.0);
  EXPECT_EQ(by_d[0].error, 3.0);
  EXPECT_EQ(by_d[1].gamma, 6.0);
  const auto by_m = mean_by_anchors(rows);
  EXPECT_EQ(by_m[1].x, 128.0);
}

TEST(Sweep, GammaGrowsLinearlyWithAnchors) {
  SweepSettings s;
  const std::vector<std::size_t> ms{64, 128, 256, 512};
  const std::vector<std::uint64_t> seeds{1};
  const auto pts = mean_by_anchors(anchor_sweep(ms, 64, s, seeds));
  std::vector<double> x, g;
  for (const auto& p : pts) {
    x.push_back(p.x);
    g.push_back(p.gamma);
  }
  const LineFit f = fit_line(x, g);
  EXPECT_GT(f.slope, 0.0);
  EXPECT_GE(f.r2, 0.9);
}

TEST(Sweep, DimensionTrend) {
  SweepSettings s;
  const std::vector<std::size_t> dims{16, 32, 64, 128, 256, 512, 1024, 2048};
  const std::vector<std::uint64_t> seeds{1};
  const auto pts = mean_by_dim(dimension_sweep(dims, s, seeds));
  ASSERT_EQ(pts.size(), dims.size());
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double ratio = pts[k + 1].error / pts[k].error;
    EXPECT_GE(ratio, 0.55) << dims[k];
    EXPECT_LE(ratio, 0.90) << dims[k];
  }
  EXPECT_GT(pts.front().error, pts.back().error);
}

TEST(Sweep, Deterministic) {
  SweepSettings s;
  const std::vector<std::size_t> dims{16, 32};
  const std::vector<std::uint64_t> seeds{4, 5};
  const auto a = dimension_sweep(dims, s, seeds);
  const auto b = dimension_sweep(dims, s, seeds);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].q_error, b[k].q_error);
    EXPECT_EQ(a[k].anchors, 4 * a[k].dim);
  }
}
