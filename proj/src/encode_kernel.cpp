// Built with -ffast-math so that the cosine loop is vectorized through the
// SIMD math library. Keep this file free of NaN/Inf checks.

#include <cmath>
#include <cstddef>

#include "fedqhd/encoder.hpp"

namespace fedqhd::detail {

void rff_features(const double* __restrict omega_t, const double* __restrict phase,
                  std::size_t dim, std::size_t state_dim, const double* __restrict s,
                  double scale, double* __restrict out) noexcept {
  for (std::size_t k = 0; k < dim; ++k) out[k] = phase[k];
  for (std::size_t j = 0; j < state_dim; ++j) {
    const double sj = s[j];
    const double* row = omega_t + j * dim;
    for (std::size_t k = 0; k < dim; ++k) out[k] += sj * row[k];
  }
  for (std::size_t k = 0; k < dim; ++k) out[k] = scale * std::cos(out[k]);
}

}  // namespace fedqhd::detail
