#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "dpboot/dataset.hpp"

namespace dpboot {

/// Read-only view of one covariate row; binds to rows of RowMatrixXd without
/// copying.
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

/// Exact minimizer of a weighted empirical risk, when the loss admits one.
struct ClosedFormSolution {
  Eigen::VectorXd theta;
  bool ridge_fallback = false;
};

/// A per-row loss l(theta, y, x) with derivatives. Implementations are
/// immutable and shareable across threads. Batch operations compute weighted
/// sums over rows; the defaults loop over per-row calls and are overridden
/// where vectorization pays.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::string id() const = 0;
  /// Parameter dimension p.
  virtual Eigen::Index dim() const = 0;
  virtual bool has_hessian() const = 0;
  /// Number of classes for classification losses, 0 otherwise.
  virtual Eigen::Index n_classes() const { return 0; }

  virtual double value(const Eigen::VectorXd& theta, double y, RowRef x) const = 0;
  /// Exact gradient for smooth losses; a subgradient for the pinball loss.
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const = 0;
  /// Exact Hessian; throws ValidationError when has_hessian() is false.
  virtual Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const;

  /// sum_i w_i l(theta, y_i, x_i)
  virtual double batch_value(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                             const Eigen::VectorXd& w) const;
  /// sum_i w_i grad l(theta, y_i, x_i)
  virtual Eigen::VectorXd batch_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                         const RowMatrixXd& x, const Eigen::VectorXd& w) const;
  /// sum_i w_i hess l(theta, y_i, x_i)
  virtual Eigen::MatrixXd batch_hessian(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                        const Eigen::VectorXd& w) const;
  /// sum_i w_i grad_i grad_i^T
  virtual Eigen::MatrixXd batch_grad_outer(const Eigen::VectorXd& theta, const Eigen::VectorXd& y,
                                           const RowMatrixXd& x, const Eigen::VectorXd& w) const;

  /// Exact argmin of the weighted risk, or nullopt when the loss needs an
  /// iterative solver. Weights are nonnegative with a positive sum.
  virtual std::optional<ClosedFormSolution> closed_form(const Eigen::VectorXd& y, const RowMatrixXd& x,
                                                        const Eigen::VectorXd& w) const {
    (void)y;
    (void)x;
    (void)w;
    return std::nullopt;
  }

  /// Throws ValidationError when a response is outside the loss's label
  /// domain (classification losses only).
  virtual void validate_responses(const Eigen::VectorXd& y) const { (void)y; }
};

/// l = (y - theta)^2 / 2; the minimizer is the weighted mean.
class MeanLoss final : public LossModel {
 public:
  std::string id() const override { return "mean"; }
  Eigen::Index dim() const override { return 1; }
  bool has_hessian() const override { return true; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const override;

  std::optional<ClosedFormSolution> closed_form(const Eigen::VectorXd& y, const RowMatrixXd& x,
                                                const Eigen::VectorXd& w) const override;
};

/// Pinball loss rho_tau(y - theta); exposes a subgradient and no Hessian.
/// The minimizer is the weighted tau-quantile: the smallest response whose
/// cumulative weight reaches tau times the total.
class QuantileLoss final : public LossModel {
 public:
  explicit QuantileLoss(double tau);

  std::string id() const override { return "quantile"; }
  Eigen::Index dim() const override { return 1; }
  bool has_hessian() const override { return false; }
  double tau() const { return tau_; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;

  std::optional<ClosedFormSolution> closed_form(const Eigen::VectorXd& y, const RowMatrixXd& x,
                                                const Eigen::VectorXd& w) const override;

 private:
  double tau_;
};

/// l = (y - x theta)^2 / 2; weighted least squares via normal equations with
/// a flagged ridge fallback when the weighted design loses rank.
class OlsLoss final : public LossModel {
 public:
  explicit OlsLoss(Eigen::Index d);

  std::string id() const override { return "ols"; }
  Eigen::Index dim() const override { return d_; }
  bool has_hessian() const override { return true; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const override;

  std::optional<ClosedFormSolution> closed_form(const Eigen::VectorXd& y, const RowMatrixXd& x,
                                                const Eigen::VectorXd& w) const override;

 private:
  Eigen::Index d_;
};

/// Binary cross-entropy with logits x theta; labels in {0, 1}.
class LogisticLoss final : public LossModel {
 public:
  explicit LogisticLoss(Eigen::Index d);

  std::string id() const override { return "logistic"; }
  Eigen::Index dim() const override { return d_; }
  bool has_hessian() const override { return true; }
  Eigen::Index n_classes() const override { return 2; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const override;

  double batch_value(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                     const Eigen::VectorXd& w) const override;
  Eigen::VectorXd batch_gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                 const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd batch_hessian(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd batch_grad_outer(const Eigen::VectorXd& theta, const Eigen::VectorXd& y, const RowMatrixXd& x,
                                   const Eigen::VectorXd& w) const override;

  void validate_responses(const Eigen::VectorXd& y) const override;

 private:
  Eigen::Index d_;
};

/// Multiclass cross-entropy with p = d*(K-1) parameters laid out as K-1
/// consecutive d-blocks for classes 0..K-2; the last class is the reference
/// with zero parameters. Labels are zero-based class indices.
class SoftmaxLoss final : public LossModel {
 public:
  SoftmaxLoss(Eigen::Index d, Eigen::Index k);

  std::string id() const override { return "softmax"; }
  Eigen::Index dim() const override { return d_ * (k_ - 1); }
  bool has_hessian() const override { return true; }
  Eigen::Index n_classes() const override { return k_; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const override;

  void validate_responses(const Eigen::VectorXd& y) const override;

  /// Class probabilities (length K) at covariates x.
  Eigen::VectorXd class_probabilities(const Eigen::VectorXd& theta, RowRef x) const;

 private:
  Eigen::Index d_;
  Eigen::Index k_;
};

/// User-supplied smooth loss registered programmatically.
class CustomSmoothLoss final : public LossModel {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd&, double, RowRef)>;
  using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double, RowRef)>;
  using HessianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&, double, RowRef)>;

  CustomSmoothLoss(Eigen::Index dim, ValueFn value, GradientFn gradient, HessianFn hessian = nullptr);

  std::string id() const override { return "custom-smooth"; }
  Eigen::Index dim() const override { return dim_; }
  bool has_hessian() const override { return hessian_ != nullptr; }

  double value(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, double y, RowRef x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, double y, RowRef x) const override;

 private:
  Eigen::Index dim_;
  ValueFn value_;
  GradientFn gradient_;
  HessianFn hessian_;
};

/// Builds the loss named by config.loss for covariate dimension d.
/// Throws ValidationError on an unknown id or an incompatible dimension.
std::unique_ptr<LossModel> make_loss(const RunConfig& config, Eigen::Index d);

}  // namespace dpboot
