#pragma once

#include <Eigen/Dense>

#include "dpboot/rng.hpp"

namespace dpboot {

/// One joint draw from Dir(1,...,1, alpha/m,...,alpha/m): `observed` holds the
/// n weights attached to real observations, `imaginary` the m weights attached
/// to synthetic draws from the base measure.  Entries are nonnegative and the
/// grand total is 1 to within 1e-12.
struct WeightVector {
  Eigen::VectorXd observed;
  Eigen::VectorXd imaginary;

  double total() const { return observed.sum() + imaginary.sum(); }
};

/// Samples (w_1:n, w*_1:m) via normalized Exp(1) / Gamma(alpha/m, 1) variates.
/// alpha == 0 yields the Bayesian bootstrap over the observed points and
/// `imaginary` is empty; alpha > 0 requires m >= 1.
WeightVector sample_weights(Eigen::Index n, Eigen::Index m, double alpha, RngStream& rng);

}  // namespace dpboot
