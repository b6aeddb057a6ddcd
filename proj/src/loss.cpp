#include "dpboot/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dpboot/errors.hpp"

namespace dpboot {

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_batch_shapes(const Eigen::VectorXd& y, const RowMatrixXd& x, const Eigen::VectorXd& w) {
  if (y.size() != x.rows() || y.size() != w.size()) {
    throw ValidationError("loss batch: responses, covariates, and weights must have matching row counts");
  }
}

}  // namespace

Eigen::MatrixXd LossModel::hessian(const Eigen::VectorXd&, double, RowRef) const {
  throw ValidationError("loss '" + id() + "' does not provide a Hessian");
}

double LossModel::batch_value(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                              const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) total += w(i) * value(theta, y(i), x.row(i));
  return total;
}

Eigen::VectorXd LossModel::batch_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                          const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) total.noalias() += w(i) * gradient(theta, y(i), x.row(i));
  return total;
}

Eigen::MatrixXd LossModel::batch_hessian(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                         const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(dim(), dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) total.noalias() += w(i) * hessian(theta, y(i), x.row(i));
  return total;
}

Eigen::MatrixXd LossModel::batch_grad_outer(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                            const RowMatrixXd& x, const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(dim(), dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Eigen::VectorXd g = gradient(theta, y(i), x.row(i));
    total.noalias() += w(i) * (g * g.transpose());
  }
  return total;
}

// ---------------------------------------------------------------- MeanLoss

double MeanLoss::value(const Eigen::VectorXd& theta, double y, RowRef) const {
  const double r = y - theta(0);
  return 0.5 * r * r;
}

Eigen::VectorXd MeanLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef) const {
  Eigen::VectorXd g(1);
  g(0) = theta(0) - y;
  return g;
}

Eigen::MatrixXd MeanLoss::hessian(const Eigen::VectorXd&, double, RowRef) const {
  return Eigen::MatrixXd::Identity(1, 1);
}

std::optional<ClosedFormSolution> MeanLoss::closed_form(const Eigen::VectorXd& y, const RowMatrixXd&,
                                                        const Eigen::VectorXd& w) const {
  ClosedFormSolution sol;
  sol.theta.resize(1);
  sol.theta(0) = w.dot(y) / w.sum();
  return sol;
}

// ------------------------------------------------------------ QuantileLoss

QuantileLoss::QuantileLoss(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("quantile loss: tau must lie in (0,1)");
}

double QuantileLoss::value(const Eigen::VectorXd& theta, double y, RowRef) const {
  const double u = y - theta(0);
  return u >= 0.0 ? tau_ * u : (tau_ - 1.0) * u;
}

Eigen::VectorXd QuantileLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef) const {
  const double u = y - theta(0);
  Eigen::VectorXd g(1);
  if (u > 0.0) {
    g(0) = -tau_;
  } else if (u < 0.0) {
    g(0) = 1.0 - tau_;
  } else {
    g(0) = 0.0;
  }
  return g;
}

std::optional<ClosedFormSolution> QuantileLoss::closed_form(const Eigen::VectorXd& y, const RowMatrixXd&,
                                                            const Eigen::VectorXd& w) const {
  // Weighted order statistic: smallest response whose cumulative weight
  // reaches tau * total. Ties in y are ordered by original index, which does
  // not affect the selected value.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(y.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (y(a) != y(b)) return y(a) < y(b);
    return a < b;
  });
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < w.size(); ++i) total += static_cast<long double>(w(i));
  const long double target = static_cast<long double>(tau_) * total;
  long double cum = 0.0L;
  for (const Eigen::Index i : order) {
    cum += static_cast<long double>(w(i));
    if (cum >= target) {
      ClosedFormSolution sol;
      sol.theta.resize(1);
      sol.theta(0) = y(i);
      return sol;
    }
  }
  ClosedFormSolution sol;
  sol.theta.resize(1);
  sol.theta(0) = y(order.back());
  return sol;
}

// ----------------------------------------------------------------- OlsLoss

OlsLoss::OlsLoss(Eigen::Index d) : d_(d) {
  if (d < 1) throw ValidationError("ols loss: needs at least one covariate column");
}

double OlsLoss::value(const Eigen::VectorXd& theta, double y, RowRef x) const {
  const double r = y - x.dot(theta);
  return 0.5 * r * r;
}

Eigen::VectorXd OlsLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef x) const {
  return (x.dot(theta) - y) * x.transpose();
}

Eigen::MatrixXd OlsLoss::hessian(const Eigen::VectorXd&, double, RowRef x) const {
  return x.transpose() * x;
}

std::optional<ClosedFormSolution> OlsLoss::closed_form(const Eigen::VectorXd& y, const RowMatrixXd& x,
                                                       const Eigen::VectorXd& w) const {
  const Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x;
  const Eigen::VectorXd b = x.transpose() * (w.cwiseProduct(y));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  if (eig.info() != Eigen::Success) throw NumericError("ols: eigendecomposition of the normal equations failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double lam_max = lam(lam.size() - 1);
  ClosedFormSolution sol;
  if (lam_max <= 0.0) throw NumericError("ols: weighted design matrix is zero; no ridge fallback possible");
  if (lam(0) <= 1e-12 * lam_max) {
    const double ridge = 1e-10 * a.trace() / static_cast<double>(d_);
    const Eigen::MatrixXd reg = a + ridge * Eigen::MatrixXd::Identity(d_, d_);
    sol.theta = reg.ldlt().solve(b);
    sol.ridge_fallback = true;
    return sol;
  }
  sol.theta = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * b);
  return sol;
}

// ------------------------------------------------------------ LogisticLoss

LogisticLoss::LogisticLoss(Eigen::Index d) : d_(d) {
  if (d < 1) throw ValidationError("logistic loss: needs at least one covariate column");
}

double LogisticLoss::value(const Eigen::VectorXd& theta, double y, RowRef x) const {
  const double z = x.dot(theta);
  return softplus(z) - y * z;
}

Eigen::VectorXd LogisticLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef x) const {
  return (sigmoid(x.dot(theta)) - y) * x.transpose();
}

Eigen::MatrixXd LogisticLoss::hessian(const Eigen::VectorXd& theta, double, RowRef x) const {
  const double s = sigmoid(x.dot(theta));
  return (s * (1.0 - s)) * (x.transpose() * x);
}

double LogisticLoss::batch_value(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                 const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  const Eigen::VectorXd z = x * theta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) total += w(i) * (softplus(z(i)) - y(i) * z(i));
  return total;
}

Eigen::VectorXd LogisticLoss::batch_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                             const RowMatrixXd& x, const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  const Eigen::VectorXd z = x * theta;
  Eigen::VectorXd r(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) r(i) = w(i) * (sigmoid(z(i)) - y(i));
  return x.transpose() * r;
}

Eigen::MatrixXd LogisticLoss::batch_hessian(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                            const RowMatrixXd& x, const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  const Eigen::VectorXd z = x * theta;
  Eigen::VectorXd s(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = sigmoid(z(i));
    s(i) = w(i) * p * (1.0 - p);
  }
  return x.transpose() * s.asDiagonal() * x;
}

Eigen::MatrixXd LogisticLoss::batch_grad_outer(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                               const RowMatrixXd& x, const Eigen::VectorXd& w) const {
  check_batch_shapes(y, x, w);
  const Eigen::VectorXd z = x * theta;
  Eigen::VectorXd s(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = sigmoid(z(i)) - y(i);
    s(i) = w(i) * r * r;
  }
  return x.transpose() * s.asDiagonal() * x;
}

void LogisticLoss::validate_responses(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      throw ValidationError("logistic loss: response at row " + std::to_string(i + 1) + " is " +
                            std::to_string(y(i)) + ", expected 0 or 1");
    }
  }
}

// ------------------------------------------------------------- SoftmaxLoss

SoftmaxLoss::SoftmaxLoss(Eigen::Index d, Eigen::Index k) : d_(d), k_(k) {
  if (d < 1) throw ValidationError("softmax loss: needs at least one covariate column");
  if (k < 2) throw ValidationError("softmax loss: needs at least two classes");
}

Eigen::VectorXd SoftmaxLoss::class_probabilities(const Eigen::VectorXd& theta, RowRef x) const {
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(k_);
  for (Eigen::Index c = 0; c + 1 < k_; ++c) scores(c) = x.dot(theta.segment(c * d_, d_));
  const double top = scores.maxCoeff();
  Eigen::VectorXd p = (scores.array() - top).exp();
  p /= p.sum();
  return p;
}

double SoftmaxLoss::value(const Eigen::VectorXd& theta, double y, RowRef x) const {
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(k_);
  for (Eigen::Index c = 0; c + 1 < k_; ++c) scores(c) = x.dot(theta.segment(c * d_, d_));
  const double top = scores.maxCoeff();
  const double lse = top + std::log((scores.array() - top).exp().sum());
  return lse - scores(static_cast<Eigen::Index>(y));
}

Eigen::VectorXd SoftmaxLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef x) const {
  const Eigen::VectorXd p = class_probabilities(theta, x);
  Eigen::VectorXd g(dim());
  const auto label = static_cast<Eigen::Index>(y);
  for (Eigen::Index c = 0; c + 1 < k_; ++c) {
    const double coeff = p(c) - (label == c ? 1.0 : 0.0);
    g.segment(c * d_, d_) = coeff * x.transpose();
  }
  return g;
}

Eigen::MatrixXd SoftmaxLoss::hessian(const Eigen::VectorXd& theta, double, RowRef x) const {
  const Eigen::VectorXd p = class_probabilities(theta, x);
  const Eigen::MatrixXd xx = x.transpose() * x;
  Eigen::MatrixXd h(dim(), dim());
  for (Eigen::Index c = 0; c + 1 < k_; ++c) {
    for (Eigen::Index e = 0; e + 1 < k_; ++e) {
      const double coeff = p(c) * ((c == e ? 1.0 : 0.0) - p(e));
      h.block(c * d_, e * d_, d_, d_) = coeff * xx;
    }
  }
  return h;
}

void SoftmaxLoss::validate_responses(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y(i);
    if (v != std::floor(v) || v < 0.0 || v >= static_cast<double>(k_)) {
      throw ValidationError("softmax loss: response at row " + std::to_string(i + 1) + " is " + std::to_string(v) +
                            ", expected a class index in [0, " + std::to_string(k_ - 1) + "]");
    }
  }
}

// -------------------------------------------------------- CustomSmoothLoss

CustomSmoothLoss::CustomSmoothLoss(Eigen::Index dim, ValueFn value, GradientFn gradient, HessianFn hessian)
    : dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)), hessian_(std::move(hessian)) {
  if (dim < 1) throw ValidationError("custom-smooth loss: dimension must be positive");
  if (!value_ || !gradient_) throw ValidationError("custom-smooth loss: value and gradient callbacks are required");
}

double CustomSmoothLoss::value(const Eigen::VectorXd& theta, double y, RowRef x) const { return value_(theta, y, x); }

Eigen::VectorXd CustomSmoothLoss::gradient(const Eigen::VectorXd& theta, double y, RowRef x) const {
  return gradient_(theta, y, x);
}

Eigen::MatrixXd CustomSmoothLoss::hessian(const Eigen::VectorXd& theta, double y, RowRef x) const {
  if (!hessian_) throw ValidationError("custom-smooth loss: no Hessian callback registered");
  return hessian_(theta, y, x);
}

// ----------------------------------------------------------------- factory

std::unique_ptr<LossModel> make_loss(const RunConfig& config, Eigen::Index d) {
  if (config.loss == "mean") return std::make_unique<MeanLoss>();
  if (config.loss == "quantile") return std::make_unique<QuantileLoss>(config.tau);
  if (config.loss == "ols") return std::make_unique<OlsLoss>(d);
  if (config.loss == "logistic") return std::make_unique<LogisticLoss>(d);
  if (config.loss == "softmax") return std::make_unique<SoftmaxLoss>(d, config.n_classes);
  throw ValidationError("unknown loss '" + config.loss + "'; expected mean, quantile, ols, logistic, or softmax");
}

}  // namespace dpboot
