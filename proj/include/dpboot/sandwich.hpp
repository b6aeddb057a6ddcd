#pragma once

#include "dpboot/dataset.hpp"
#include "dpboot/erm.hpp"

namespace dpboot {

/// Empirical information matrices and the asymptotic covariance of the
/// bootstrap draws around theta_center. With gamma = alpha/n,
///   J_hat = (J1 + gamma*J2) / (1 + gamma),   I_hat likewise,
/// where J1/I1 average Hessians/gradient outer products over the observed
/// rows and J2/I2 over the base-measure draws.
struct SandwichEstimate {
  Eigen::MatrixXd j_hat;
  Eigen::MatrixXd i_hat;
  Eigen::MatrixXd sigma_hat;     ///< J^-1 I J^-1
  Eigen::VectorXd theta_center;  ///< the (1/n, gamma/m)-weighted ERM
  double alpha = 0.0;
  double gamma = 0.0;
};

/// Computes the sandwich at the weighted ERM. base_draws supplies the
/// imaginary rows and may be null iff alpha = 0. The loss must expose exact
/// Hessians (the pinball loss is excluded). Throws NumericError when J_hat
/// is singular beyond condition number 1e12, reporting the condition number.
SandwichEstimate empirical_sandwich(const LabeledDataset& data, const ImputedDataset* base_draws,
                                    const LossModel& loss, double alpha, const RunConfig& controls);

}  // namespace dpboot
