#include "dpboot/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dpboot/csv.hpp"
#include "dpboot/errors.hpp"
#include "dpboot/posterior_bootstrap.hpp"
#include "dpboot/sandwich.hpp"

namespace dpboot {

namespace {

double unbiased_variance(const Eigen::VectorXd& v) {
  const auto n = static_cast<double>(v.size());
  const double mean = v.mean();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double dev = v(i) - mean;
    ss += dev * dev;
  }
  return ss / (n - 1.0);
}

}  // namespace

PpiVariance ppi_variance_mean(const Eigen::VectorXd& labeled_y, const Eigen::VectorXd& predictions_on_labeled,
                              const Eigen::VectorXd& imputed_predictions) {
  if (labeled_y.size() != predictions_on_labeled.size()) {
    throw ValidationError("ppi_variance_mean: labeled responses and predictions must have the same length");
  }
  if (labeled_y.size() < 2) throw ValidationError("ppi_variance_mean: needs at least 2 labeled rows");
  if (imputed_predictions.size() < 2) throw ValidationError("ppi_variance_mean: needs at least 2 imputed predictions");

  PpiVariance out;
  out.n = labeled_y.size();
  out.N = imputed_predictions.size();
  out.sigma2_f = unbiased_variance(imputed_predictions);
  out.sigma2_rect = unbiased_variance(predictions_on_labeled - labeled_y);
  out.total = out.sigma2_f / static_cast<double>(out.N) + out.sigma2_rect / static_cast<double>(out.n);
  return out;
}

CalibrationResult calibrate_alpha_ppi(const LabeledDataset& data, const BaseMeasure& base, const LossModel& loss,
                                      const PpiVariance& ppi, std::pair<double, double> bracket,
                                      const RunConfig& config) {
  if (!(ppi.total > 0.0)) throw ValidationError("calibrate_alpha_ppi: ppi.total must be positive");
  if (!(bracket.first >= 0.0) || !(bracket.second > bracket.first)) {
    throw ValidationError("calibrate_alpha_ppi: bracket must satisfy 0 <= lo < hi");
  }

  // One fixed set of base draws keeps the target deterministic and
  // continuous in alpha across bisection candidates.
  RngStream base_stream(config.seed, stream_tag::base_draw, 0);
  const ImputedDataset base_draws = draw_base(base, config.m, base_stream);

  CalibrationResult result;
  result.method = "ppi-match";
  result.grid = {bracket.first, bracket.second};

  const auto residual_at = [&](double alpha) {
    const SandwichEstimate est = empirical_sandwich(data, alpha > 0.0 ? &base_draws : nullptr, loss, alpha, config);
    const double value = est.sigma_hat.trace() / (static_cast<double>(data.n()) + alpha) - ppi.total;
    result.diagnostics.emplace_back(alpha, value);
    return value;
  };

  const double tol = 1e-8 * ppi.total;
  double lo = bracket.first;
  double hi = bracket.second;
  double r_lo = residual_at(lo);
  if (std::abs(r_lo) <= tol) {
    result.alpha_star = lo;
    result.residual = r_lo;
    return result;
  }
  double r_hi = residual_at(hi);
  if (std::abs(r_hi) <= tol) {
    result.alpha_star = hi;
    result.residual = r_hi;
    return result;
  }
  if ((r_lo > 0.0) == (r_hi > 0.0)) {
    throw ValidationError("calibrate_alpha_ppi: no sign change over bracket [" + format_double(lo) + ", " +
                          format_double(hi) + "]; residuals " + format_double(r_lo) + " and " + format_double(r_hi));
  }

  for (int it = 1; it <= 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r_mid = residual_at(mid);
    result.iterations = it;
    if (std::abs(r_mid) <= tol) {
      result.alpha_star = mid;
      result.residual = r_mid;
      return result;
    }
    if ((r_mid > 0.0) == (r_lo > 0.0)) {
      lo = mid;
      r_lo = r_mid;
    } else {
      hi = mid;
      r_hi = r_mid;
    }
  }
  throw NumericError("calibrate_alpha_ppi: bisection did not reach the residual tolerance in 60 iterations");
}

namespace {

bool inside_box(const Eigen::VectorXd& point, const std::vector<std::pair<double, double>>& intervals) {
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    const auto& [lo, hi] = intervals[static_cast<std::size_t>(j)];
    if (point(j) < lo || point(j) > hi) return false;
  }
  return true;
}

}  // namespace

CalibrationResult calibrate_alpha_coverage(const LabeledDataset& data, const BaseMeasure& base, const LossModel& loss,
                                           const std::vector<double>& alphas, int n_boot, double level,
                                           const RunConfig& config) {
  if (alphas.empty()) throw ValidationError("calibrate_alpha_coverage: alpha grid is empty");
  if (!std::is_sorted(alphas.begin(), alphas.end())) {
    throw ValidationError("calibrate_alpha_coverage: alpha grid must be ascending");
  }
  if (alphas.front() < 0.0) throw ValidationError("calibrate_alpha_coverage: alphas must be >= 0");
  if (n_boot < 50) throw ValidationError("calibrate_alpha_coverage: n_boot must be >= 50");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("calibrate_alpha_coverage: level must lie in (0,1)");

  CalibrationResult result;
  result.method = "coverage";
  result.grid = alphas;

  const Eigen::Index n = data.n();
  bool constant = true;
  for (Eigen::Index i = 1; i < n && constant; ++i) {
    if (data.responses()(i) != data.responses()(0)) constant = false;
  }
  result.degenerate_data = constant;

  // The resampled ERMs do not depend on alpha; compute them once.
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  std::vector<Eigen::VectorXd> resample_fits(static_cast<std::size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    RngStream stream(config.seed, stream_tag::resample, static_cast<std::uint64_t>(b));
    Eigen::VectorXd y_res(n);
    RowMatrixXd x_res(n, data.d());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(stream.uniform_index(static_cast<std::size_t>(n)));
      y_res(i) = data.responses()(j);
      x_res.row(i) = data.covariates().row(j);
    }
    resample_fits[static_cast<std::size_t>(b)] =
        solve_weighted_erm(loss, y_res, x_res, uniform, config).theta;
  }

  double best_alpha = alphas.front();
  bool found = false;
  for (const double alpha : alphas) {
    RunConfig run = config;
    run.alpha = alpha;
    const PosteriorDraws draws = run_posterior_bootstrap(data, alpha > 0.0 ? &base : nullptr, loss, run);
    std::vector<std::pair<double, double>> intervals;
    intervals.reserve(static_cast<std::size_t>(draws.dim()));
    for (Eigen::Index j = 0; j < draws.dim(); ++j) intervals.push_back(credible_interval(draws, j, level));
    int hits = 0;
    for (const auto& fit : resample_fits) {
      if (inside_box(fit, intervals)) ++hits;
    }
    const double coverage = static_cast<double>(hits) / static_cast<double>(n_boot);
    result.diagnostics.emplace_back(alpha, coverage);
    if (coverage >= level) {
      best_alpha = alpha;
      found = true;
    }
  }
  result.none_qualified = !found;
  result.alpha_star = found ? best_alpha : alphas.front();
  return result;
}

std::string calibration_json(const CalibrationResult& result) {
  nlohmann::ordered_json root;
  root["method"] = result.method;
  root["alpha_star"] = result.alpha_star;
  if (result.method == "ppi-match") {
    root["residual"] = result.residual;
    root["iterations"] = result.iterations;
    root["bracket"] = result.grid;
  } else {
    root["grid"] = result.grid;
    root["none_qualified"] = result.none_qualified;
    root["degenerate_data"] = result.degenerate_data;
  }
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  const char* value_name = result.method == "ppi-match" ? "residual" : "coverage";
  for (const auto& [alpha, value] : result.diagnostics) {
    nlohmann::ordered_json row;
    row["alpha"] = alpha;
    row[value_name] = value;
    table.push_back(std::move(row));
  }
  root["diagnostics"] = std::move(table);
  return root.dump(2) + "\n";
}

void write_calibration_csv(const CalibrationResult& result, const std::string& path) {
  std::string text = result.method == "ppi-match" ? "alpha,residual\n" : "alpha,coverage\n";
  for (const auto& [alpha, value] : result.diagnostics) {
    text += format_double(alpha) + "," + format_double(value) + "\n";
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << text;
  if (!out) throw ValidationError(path + ": write failed");
}

}  // namespace dpboot
