#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

namespace dpboot {

/// Covariate and probability tables are row-major: one contiguous row per
/// observation, matching the row-at-a-time access pattern of sampling and
/// per-row loss evaluation.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Observed pairs (y_i, x_i). Immutable after construction; share by const
/// reference across threads.
class LabeledDataset {
 public:
  /// Validates shape agreement and finiteness; throws ValidationError.
  LabeledDataset(Eigen::VectorXd responses, RowMatrixXd covariates);

  const Eigen::VectorXd& responses() const { return responses_; }
  const RowMatrixXd& covariates() const { return covariates_; }
  Eigen::Index n() const { return responses_.size(); }
  Eigen::Index d() const { return covariates_.cols(); }

 private:
  Eigen::VectorXd responses_;
  RowMatrixXd covariates_;
};

/// Model-imputed rows: covariates plus hard labels, predictive class
/// probabilities, or both. A single probability column is the Bernoulli
/// shorthand for P(Y=1) with two implicit classes.
class ImputedDataset {
 public:
  static ImputedDataset with_labels(RowMatrixXd covariates, Eigen::VectorXd labels);
  static ImputedDataset with_probabilities(RowMatrixXd covariates, RowMatrixXd probabilities,
                                           std::optional<Eigen::VectorXd> prompt_weights = std::nullopt);
  static ImputedDataset with_both(RowMatrixXd covariates, Eigen::VectorXd labels, RowMatrixXd probabilities,
                                  std::optional<Eigen::VectorXd> prompt_weights = std::nullopt);

  bool has_labels() const { return labels_.has_value(); }
  bool has_probabilities() const { return probabilities_.has_value(); }
  bool has_prompt_weights() const { return prompt_weights_.has_value(); }

  const Eigen::VectorXd& labels() const;
  const RowMatrixXd& probabilities() const;
  const Eigen::VectorXd& prompt_weights() const;
  const RowMatrixXd& covariates() const { return covariates_; }

  Eigen::Index n() const { return covariates_.rows(); }
  Eigen::Index d() const { return covariates_.cols(); }
  /// Number of classes implied by the probability table (1 column -> 2).
  Eigen::Index n_classes() const;

 private:
  ImputedDataset() = default;
  void validate() const;

  RowMatrixXd covariates_;
  std::optional<Eigen::VectorXd> labels_;
  std::optional<RowMatrixXd> probabilities_;
  std::optional<Eigen::VectorXd> prompt_weights_;
};

/// Controls shared by the bootstrap, the solvers, and the CLI.
struct RunConfig {
  double alpha = 0.0;       ///< DP concentration; 0 skips the imaginary block.
  int m = 100000;           ///< truncation size for base-measure draws
  int B = 1000;             ///< number of posterior draws
  double level = 0.9;       ///< credible level
  std::string loss = "mean";
  double tau = 0.5;         ///< quantile level for the pinball loss
  int n_classes = 2;        ///< K for the softmax loss
  std::uint64_t seed = 0;
  int max_iter = 200;
  /// Relative gradient tolerance. Values much below 1e-7 approach the
  /// double-precision floor of the line search and can surface as spurious
  /// non-convergence on otherwise healthy fits.
  double tol = 1e-7;
  double max_nonconverged_frac = 0.0;  ///< tolerated fraction of failed draws
  int threads = 0;                     ///< 0 = all hardware threads

  /// Throws ValidationError on out-of-range settings.
  void validate() const;
};

}  // namespace dpboot
