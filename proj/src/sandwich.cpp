#include "dpboot/sandwich.hpp"

#include <cmath>
#include <limits>

#include "dpboot/errors.hpp"

namespace dpboot {

SandwichEstimate empirical_sandwich(const LabeledDataset& data, const ImputedDataset* base_draws,
                                    const LossModel& loss, double alpha, const RunConfig& controls) {
  if (!loss.has_hessian()) {
    throw ValidationError("empirical_sandwich: loss '" + loss.id() + "' has no Hessian; use coverage calibration");
  }
  if (alpha < 0.0 || !std::isfinite(alpha)) throw ValidationError("empirical_sandwich: alpha must be finite and >= 0");
  const Eigen::Index n = data.n();
  const Eigen::Index p = loss.dim();
  if (n < p) throw ValidationError("empirical_sandwich: needs n >= p");
  const bool use_base = alpha > 0.0;
  if (use_base && base_draws == nullptr) {
    throw ValidationError("empirical_sandwich: alpha > 0 requires base draws");
  }
  if (use_base && !base_draws->has_labels()) {
    throw ValidationError("empirical_sandwich: base draws must carry hard labels");
  }

  SandwichEstimate est;
  est.alpha = alpha;
  est.gamma = alpha / static_cast<double>(n);

  // theta_center minimizes (1/n) sum l + (gamma/m) sum l*; passing those
  // coefficients as weights gives exactly that objective.
  const Eigen::Index m = use_base ? base_draws->n() : 0;
  Eigen::VectorXd y_all(n + m);
  RowMatrixXd x_all(n + m, data.d());
  Eigen::VectorXd w_all(n + m);
  y_all.head(n) = data.responses();
  x_all.topRows(n) = data.covariates();
  w_all.head(n).setConstant(1.0 / static_cast<double>(n));
  if (use_base) {
    if (base_draws->d() != data.d()) {
      throw ValidationError("empirical_sandwich: base draw covariate dimension does not match the data");
    }
    y_all.tail(m) = base_draws->labels();
    x_all.bottomRows(m) = base_draws->covariates();
    w_all.tail(m).setConstant(est.gamma / static_cast<double>(m));
  }
  const ErmSolution fit = solve_weighted_erm(loss, y_all, x_all, w_all, controls);
  if (!fit.converged) throw NumericError("empirical_sandwich: weighted ERM did not converge");
  est.theta_center = fit.theta;

  const Eigen::VectorXd avg_n = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd j1 = loss.batch_hessian(est.theta_center, data.responses(), data.covariates(), avg_n);
  Eigen::MatrixXd i1 = loss.batch_grad_outer(est.theta_center, data.responses(), data.covariates(), avg_n);
  Eigen::MatrixXd j2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd i2 = Eigen::MatrixXd::Zero(p, p);
  if (use_base) {
    const Eigen::VectorXd avg_m = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    j2 = loss.batch_hessian(est.theta_center, base_draws->labels(), base_draws->covariates(), avg_m);
    i2 = loss.batch_grad_outer(est.theta_center, base_draws->labels(), base_draws->covariates(), avg_m);
  }
  const double denom = 1.0 + est.gamma;
  est.j_hat = (j1 + est.gamma * j2) / denom;
  est.i_hat = (i1 + est.gamma * i2) / denom;
  est.j_hat = 0.5 * (est.j_hat + est.j_hat.transpose()).eval();
  est.i_hat = 0.5 * (est.i_hat + est.i_hat.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.j_hat);
  if (eig.info() != Eigen::Success) throw NumericError("empirical_sandwich: eigendecomposition of J failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double lam_max = lam.cwiseAbs().maxCoeff();
  const double lam_min = lam.cwiseAbs().minCoeff();
  const double cond = lam_min > 0.0 ? lam_max / lam_min : std::numeric_limits<double>::infinity();
  if (lam(0) <= 0.0 || cond > 1e12) {
    throw NumericError("empirical_sandwich: J is singular or near-singular, condition number " +
                       std::to_string(cond));
  }
  const Eigen::MatrixXd j_inv = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  est.sigma_hat = j_inv * est.i_hat * j_inv;
  est.sigma_hat = 0.5 * (est.sigma_hat + est.sigma_hat.transpose()).eval();
  return est;
}

}  // namespace dpboot
