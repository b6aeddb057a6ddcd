#pragma once

#include "dpboot/dp_weights.hpp"
#include "dpboot/loss.hpp"

namespace dpboot {

struct ErmSolution {
  Eigen::VectorXd theta;
  double objective = 0.0;  ///< weighted risk at theta under the given weights
  bool converged = false;
  int iterations = 0;
  bool ridge_fallback = false;
};

/// sum_i w_i l(theta, y_i, x_i) over the supplied rows.
double weighted_objective(const LossModel& loss, const Eigen::VectorXd& y, const RowMatrixXd& x,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& theta);

/// Minimizes the weighted risk. Weights are normalized internally, so the
/// returned theta is invariant to rescaling all weights by c > 0; the
/// reported objective uses the weights exactly as given. Closed forms are
/// used for mean, quantile, and ols; other losses run L-BFGS with a strong
/// Wolfe line search from warm_start (zero when absent), converged when the
/// normalized-gradient norm falls below tol * max(1, |objective|).
ErmSolution solve_weighted_erm(const LossModel& loss, const Eigen::VectorXd& y, const RowMatrixXd& x,
                               const Eigen::VectorXd& w, const RunConfig& controls,
                               const Eigen::VectorXd* warm_start = nullptr);

}  // namespace dpboot
