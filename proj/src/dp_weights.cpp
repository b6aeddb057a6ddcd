#include "dpboot/dp_weights.hpp"

#include <cmath>

#include "dpboot/errors.hpp"

namespace dpboot {

namespace {

// Renormalizes in long double, then once more in double so the double-precision
// grand total lands within 1e-12 of 1 regardless of n + m.
void normalize(WeightVector& w) {
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < w.observed.size(); ++i) total += static_cast<long double>(w.observed(i));
  for (Eigen::Index j = 0; j < w.imaginary.size(); ++j) total += static_cast<long double>(w.imaginary(j));
  for (Eigen::Index i = 0; i < w.observed.size(); ++i) {
    w.observed(i) = static_cast<double>(static_cast<long double>(w.observed(i)) / total);
  }
  for (Eigen::Index j = 0; j < w.imaginary.size(); ++j) {
    w.imaginary(j) = static_cast<double>(static_cast<long double>(w.imaginary(j)) / total);
  }
  long double second = 0.0L;
  for (Eigen::Index i = 0; i < w.observed.size(); ++i) second += static_cast<long double>(w.observed(i));
  for (Eigen::Index j = 0; j < w.imaginary.size(); ++j) second += static_cast<long double>(w.imaginary(j));
  for (Eigen::Index i = 0; i < w.observed.size(); ++i) {
    w.observed(i) = static_cast<double>(static_cast<long double>(w.observed(i)) / second);
  }
  for (Eigen::Index j = 0; j < w.imaginary.size(); ++j) {
    w.imaginary(j) = static_cast<double>(static_cast<long double>(w.imaginary(j)) / second);
  }
}

}  // namespace

WeightVector sample_weights(Eigen::Index n, Eigen::Index m, double alpha, RngStream& rng) {
  if (n <= 0) throw ValidationError("sample_weights: n must be positive");
  if (alpha < 0.0 || !std::isfinite(alpha)) throw ValidationError("sample_weights: alpha must be finite and >= 0");
  if (alpha > 0.0 && m <= 0) throw ValidationError("sample_weights: alpha > 0 requires m >= 1");

  const Eigen::Index m_eff = (alpha > 0.0) ? m : 0;
  const double shape = (alpha > 0.0) ? alpha / static_cast<double>(m) : 0.0;

  // A draw can underflow to an all-zero total when alpha/m is tiny; redraw a
  // bounded number of times rather than emit NaN weights.
  constexpr int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    WeightVector w;
    w.observed.resize(n);
    w.imaginary.resize(m_eff);
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < n; ++i) {
      w.observed(i) = rng.exponential();
      total += static_cast<long double>(w.observed(i));
    }
    for (Eigen::Index j = 0; j < m_eff; ++j) {
      w.imaginary(j) = rng.gamma(shape);
      total += static_cast<long double>(w.imaginary(j));
    }
    if (!(total > 0.0L) || !std::isfinite(static_cast<double>(total))) continue;
    normalize(w);
    return w;
  }
  throw NumericError("sample_weights: failed to draw a finite positive weight total");
}

}  // namespace dpboot
