#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpboot/base_measure.hpp"
#include "dpboot/erm.hpp"

namespace dpboot {

/// B posterior draws, one parameter vector per row, in task order.
struct PosteriorDraws {
  RowMatrixXd draws;                  ///< B x p
  std::vector<std::uint8_t> converged;
  std::uint64_t seed = 0;
  RunConfig config;
  std::vector<std::string> notes;

  Eigen::Index n_draws() const { return draws.rows(); }
  Eigen::Index dim() const { return draws.cols(); }
};

/// Runs the bootstrap: for each draw independently, sample imaginary data
/// from the base measure (skipped when alpha = 0; base may then be null),
/// sample Dirichlet weights, and solve the weighted ERM over the combined
/// rows. Draw t uses the random stream (config.seed, bootstrap_task, t), so
/// output is bitwise identical across reruns and thread counts.
///
/// Throws NumericError when the fraction of non-converged draws exceeds
/// config.max_nonconverged_frac, naming the first offending draw.
PosteriorDraws run_posterior_bootstrap(const LabeledDataset& data, const BaseMeasure* base, const LossModel& loss,
                                       const RunConfig& config);

/// Equal-tailed credible interval for one coordinate: the ((1-level)/2,
/// (1+level)/2) empirical quantiles with linear interpolation between order
/// statistics at position q*(B-1).
std::pair<double, double> credible_interval(const PosteriorDraws& draws, Eigen::Index coordinate, double level);

/// Posterior-averaged class probabilities at x_new; entries sum to 1 within
/// rounding. Requires a softmax loss.
Eigen::VectorXd posterior_predictive_probs(const PosteriorDraws& draws, const LossModel& loss, RowRef x_new);

/// argmax over classes of the posterior-averaged probabilities; ties broken
/// by the smallest class index.
Eigen::Index majority_vote_predict(const PosteriorDraws& draws, const LossModel& loss, RowRef x_new);

/// Writes `theta_1,...,theta_p,converged` rows with shortest round-trip
/// number formatting; byte-identical for byte-identical draws.
void write_draws_csv(const PosteriorDraws& draws, const std::string& path);

/// Per-coordinate mean, sd (unbiased), and level-credible interval as JSON
/// text, plus convergence counts and any notes.
std::string summary_json(const PosteriorDraws& draws, double level);

}  // namespace dpboot
