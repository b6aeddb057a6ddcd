#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dpboot/base_measure.hpp"
#include "dpboot/loss.hpp"

namespace dpboot {

/// Variance of the prediction-powered mean estimator: the imputed-estimate
/// variance shrinks with the unlabeled sample size N, the rectifier variance
/// with the labeled sample size n.
struct PpiVariance {
  double sigma2_f = 0.0;     ///< unbiased variance of the imputed predictions
  double sigma2_rect = 0.0;  ///< unbiased variance of f(X_i) - Y_i on labeled data
  Eigen::Index n = 0;
  Eigen::Index N = 0;
  double total = 0.0;  ///< sigma2_f / N + sigma2_rect / n
};

PpiVariance ppi_variance_mean(const Eigen::VectorXd& labeled_y, const Eigen::VectorXd& predictions_on_labeled,
                              const Eigen::VectorXd& imputed_predictions);

struct CalibrationResult {
  double alpha_star = 0.0;
  std::string method;  ///< "coverage" or "ppi-match"
  /// (alpha, coverage estimate) for the coverage method; (alpha, residual)
  /// per bisection evaluation for ppi-match.
  std::vector<std::pair<double, double>> diagnostics;
  std::vector<double> grid;  ///< alpha grid, or {lo, hi} bracket
  int iterations = 0;
  bool none_qualified = false;   ///< no grid point reached the target coverage
  bool degenerate_data = false;  ///< all responses identical; coverage trivially 1
  double residual = std::numeric_limits<double>::quiet_NaN();
};

/// Bisects tr Sigma(alpha)/(n+alpha) = ppi.total over the bracket. The base
/// draws behind Sigma are sampled once from a fixed stream, so the target is
/// deterministic and continuous in alpha. Requires residuals of opposite
/// sign at the bracket endpoints (error reports both) and terminates when
/// |residual| <= 1e-8 * ppi.total, within at most 60 iterations.
CalibrationResult calibrate_alpha_ppi(const LabeledDataset& data, const BaseMeasure& base, const LossModel& loss,
                                      const PpiVariance& ppi, std::pair<double, double> bracket,
                                      const RunConfig& config);

/// For each alpha on the ascending grid, runs the posterior bootstrap on the
/// full data and estimates the frequentist coverage of its level-credible
/// interval against n_boot resample ERMs (computed once; they do not depend
/// on alpha). Returns the largest alpha whose estimate reaches level, or the
/// grid minimum flagged none_qualified.
CalibrationResult calibrate_alpha_coverage(const LabeledDataset& data, const BaseMeasure& base, const LossModel& loss,
                                           const std::vector<double>& alphas, int n_boot, double level,
                                           const RunConfig& config);

/// JSON rendering of a CalibrationResult.
std::string calibration_json(const CalibrationResult& result);

/// Per-alpha table `alpha,coverage` or `alpha,residual`.
void write_calibration_csv(const CalibrationResult& result, const std::string& path);

}  // namespace dpboot
