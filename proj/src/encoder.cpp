#include "fedqhd/encoder.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fedqhd/error.hpp"
#include "fedqhd/rng.hpp"

namespace fedqhd {

namespace {

// Stream tags for seed derivation.
constexpr std::uint64_t kSharedEncoderTag = 0x5348415245440000ULL;
constexpr std::uint64_t kClientEncoderTag = 0x434c49454e540000ULL;
constexpr std::uint64_t kBandwidthTag = 0x5349474d41000000ULL;

std::uint64_t fnv1a(std::uint64_t h, double v) noexcept {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<double> FeatureMap::encode(std::span<const double> s) const {
  std::vector<double> out(dim());
  encode_into(s, out);
  return out;
}

Matrix FeatureMap::encode_batch(const Matrix& states) const {
  if (states.cols() != state_dim()) throw DimensionMismatch("encode_batch: state dimension mismatch");
  Matrix out(states.rows(), dim());
  for (std::size_t i = 0; i < states.rows(); ++i) encode_into(states.row(i), out.row(i));
  return out;
}

RffEncoder::RffEncoder(const EncoderDescriptor& desc) : desc_(desc) {
  if (desc.dim == 0 || desc.state_dim == 0)
    throw InvalidConfig("encoder: D and d must be positive");
  if (!(desc.sigma > 0.0) || !std::isfinite(desc.sigma))
    throw InvalidConfig("encoder: bandwidth must be positive");
  Rng rng(desc.seed);
  omega_ = Matrix(desc.dim, desc.state_dim);
  const double inv_sigma = 1.0 / desc.sigma;
  for (double& w : omega_.data()) w = rng.normal() * inv_sigma;
  phase_.resize(desc.dim);
  for (double& b : phase_) b = rng.uniform(0.0, 2.0 * std::numbers::pi);
  finish_setup();
}

RffEncoder::RffEncoder(Matrix frequencies, std::vector<double> phases)
    : omega_(std::move(frequencies)), phase_(std::move(phases)) {
  if (omega_.rows() == 0 || omega_.cols() == 0 || phase_.size() != omega_.rows())
    throw DimensionMismatch("encoder: frequencies must be D x d with D phases");
  desc_.seed = 0;
  desc_.dim = omega_.rows();
  desc_.state_dim = omega_.cols();
  desc_.sigma = std::numeric_limits<double>::quiet_NaN();
  finish_setup();
}

void RffEncoder::finish_setup() {
  const std::size_t dim = omega_.rows();
  const std::size_t d = omega_.cols();
  omega_t_.assign(d * dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k)
    for (std::size_t j = 0; j < d; ++j) omega_t_[j * dim + k] = omega_(k, j);
  scale_ = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, static_cast<double>(dim));
  h = fnv1a(h, static_cast<double>(d));
  for (double w : omega_.data()) h = fnv1a(h, w);
  for (double b : phase_) h = fnv1a(h, b);
  fingerprint_ = h;
}

void RffEncoder::encode_into(std::span<const double> s, std::span<double> out) const {
  if (s.size() != desc_.state_dim)
    throw DimensionMismatch("encode: state has " + std::to_string(s.size()) +
                            " entries, encoder expects " + std::to_string(desc_.state_dim));
  if (out.size() != desc_.dim) throw DimensionMismatch("encode: output length mismatch");
  detail::rff_features(omega_t_.data(), phase_.data(), desc_.dim, desc_.state_dim, s.data(),
                       scale_, out.data());
}

Matrix RffEncoder::encode_batch(const Matrix& states) const {
  if (states.cols() != desc_.state_dim)
    throw DimensionMismatch("encode_batch: states have " + std::to_string(states.cols()) +
                            " columns, encoder expects " + std::to_string(desc_.state_dim));
  Matrix out(states.rows(), desc_.dim);
  const std::size_t n = states.rows();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    detail::rff_features(omega_t_.data(), phase_.data(), desc_.dim, desc_.state_dim,
                         &states(i, 0), scale_, &out(i, 0));
  }
  return out;
}

Matrix RffEncoder::encode_batch_serial(const Matrix& states) const {
  if (states.cols() != desc_.state_dim)
    throw DimensionMismatch("encode_batch_serial: state dimension mismatch");
  Matrix out(states.rows(), desc_.dim);
  for (std::size_t i = 0; i < states.rows(); ++i)
    for (std::size_t k = 0; k < desc_.dim; ++k) {
      double arg = 0.0;
      for (std::size_t j = 0; j < desc_.state_dim; ++j) arg += omega_(k, j) * states(i, j);
      out(i, k) = std::cos(arg + phase_[k]) * scale_;
    }
  return out;
}

double RffEncoder::kernel(std::span<const double> x, std::span<const double> y) const {
  const auto fx = encode(x);
  const auto fy = encode(y);
  return dot(fx, fy);
}

EncoderFleet build_fleet(const FleetConfig& config, std::uint64_t master_seed) {
  if (config.num_clients == 0) throw InvalidConfig("fleet: need at least one client");
  if (!(config.sigma0 > 0.0)) throw InvalidConfig("fleet: sigma0 must be positive");
  if (config.state_dim == 0) throw InvalidConfig("fleet: state dimension must be positive");
  EncoderFleet fleet;
  fleet.homogeneous = config.homogeneous;
  if (config.homogeneous) {
    if (config.dim == 0) throw InvalidConfig("fleet: D must be positive");
    auto shared = std::make_shared<const RffEncoder>(EncoderDescriptor{
        derive_seed(master_seed, kSharedEncoderTag), config.dim, config.state_dim,
        config.sigma0});
    fleet.encoders.assign(config.num_clients, shared);
    return fleet;
  }
  if (config.dims.empty()) throw InvalidConfig("fleet: heterogeneous D list is empty");
  for (std::size_t d : config.dims)
    if (d == 0) throw InvalidConfig("fleet: heterogeneous D entries must be positive");
  for (std::size_t i = 0; i < config.num_clients; ++i) {
    Rng bandwidth_rng(derive_seed(master_seed, kBandwidthTag, i));
    const double sigma = bandwidth_rng.uniform(0.5 * config.sigma0, 1.5 * config.sigma0);
    fleet.encoders.push_back(std::make_shared<const RffEncoder>(
        EncoderDescriptor{derive_seed(master_seed, kClientEncoderTag, i),
                          config.dims[i % config.dims.size()], config.state_dim, sigma}));
  }
  return fleet;
}

}  // namespace fedqhd
