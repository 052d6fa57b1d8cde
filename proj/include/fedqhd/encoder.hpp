#pragma once

// Random Fourier feature state encoders:
//   phi(s) = D^{-1/2} [cos(w_1.s + b_1), ..., cos(w_D.s + b_D)],
//   w_k ~ N(0, sigma^-2 I), b_k ~ U[0, 2 pi).
// Since |cos| <= 1 the map satisfies ||phi(s)||_2 <= 1, and
// E[phi(x).phi(y)] = exp(-||x - y||^2 / (2 sigma^2)) / 2.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fedqhd/linalg.hpp"

namespace fedqhd {

/// Everything needed to regenerate an encoder bit-exactly. Serialized as the
/// JSON object {"seed", "D", "d", "sigma"}.
struct EncoderDescriptor {
  std::uint64_t seed = 0;
  std::size_t dim = 0;        // D
  std::size_t state_dim = 0;  // d
  double sigma = 1.0;

  bool operator==(const EncoderDescriptor&) const = default;
};

/// A fixed state -> feature map. Agents and the federation server only see
/// this interface.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;

  virtual std::size_t dim() const noexcept = 0;
  virtual std::size_t state_dim() const noexcept = 0;
  virtual std::uint64_t fingerprint() const noexcept = 0;

  /// Writes phi(s) into `out` (length D). Throws DimensionMismatch.
  virtual void encode_into(std::span<const double> s, std::span<double> out) const = 0;
  std::vector<double> encode(std::span<const double> s) const;
  /// One row of features per state row.
  virtual Matrix encode_batch(const Matrix& states) const;
};

class RffEncoder final : public FeatureMap {
 public:
  /// Draws frequencies (Box-Muller, row by row) then phases from the seed.
  explicit RffEncoder(const EncoderDescriptor& desc);

  /// Encoder with explicit parameters; `frequencies` is D x d.
  RffEncoder(Matrix frequencies, std::vector<double> phases);

  std::size_t dim() const noexcept override { return desc_.dim; }
  std::size_t state_dim() const noexcept override { return desc_.state_dim; }
  double sigma() const noexcept { return desc_.sigma; }
  const EncoderDescriptor& descriptor() const noexcept { return desc_; }
  const Matrix& frequencies() const noexcept { return omega_; }
  std::span<const double> phases() const noexcept { return phase_; }

  /// Hash of the generated parameters; anchor caches key on it.
  std::uint64_t fingerprint() const noexcept override { return fingerprint_; }

  void encode_into(std::span<const double> s, std::span<double> out) const override;

  /// Rows are encoded in parallel.
  Matrix encode_batch(const Matrix& states) const override;
  /// Straight-line reference for encode_batch.
  Matrix encode_batch_serial(const Matrix& states) const;

  /// Empirical kernel phi(x).phi(y).
  double kernel(std::span<const double> x, std::span<const double> y) const;

 private:
  void finish_setup();

  EncoderDescriptor desc_;
  Matrix omega_;                // D x d
  std::vector<double> omega_t_; // d x D, contiguous per state coordinate
  std::vector<double> phase_;
  double scale_ = 1.0;
  std::uint64_t fingerprint_ = 0;
};

struct FleetConfig {
  std::size_t num_clients = 1;
  std::size_t state_dim = 1;
  bool homogeneous = true;
  std::size_t dim = 1000;           // homogeneous D
  std::vector<std::size_t> dims;    // heterogeneous D list, assigned cyclically
  double sigma0 = 1.0;
};

struct EncoderFleet {
  std::vector<std::shared_ptr<const RffEncoder>> encoders;
  bool homogeneous = true;

  std::size_t size() const noexcept { return encoders.size(); }
  const RffEncoder& operator[](std::size_t i) const { return *encoders.at(i); }
};

/// Homogeneous fleets share one encoder. Heterogeneous client i gets
/// D_i = dims[i mod |dims|] and sigma_i ~ U[0.5 sigma0, 1.5 sigma0]; its seed
/// depends only on (master_seed, i). Throws InvalidConfig.
EncoderFleet build_fleet(const FleetConfig& config, std::uint64_t master_seed);

namespace detail {
// Vectorized feature kernel (compiled with relaxed floating-point rules so
// the cosine loop maps onto the SIMD math library).
void rff_features(const double* omega_t, const double* phase, std::size_t dim,
                  std::size_t state_dim, const double* s, double scale, double* out) noexcept;
}  // namespace detail

}  // namespace fedqhd
