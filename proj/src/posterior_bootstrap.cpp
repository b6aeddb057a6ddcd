#include "dpboot/posterior_bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dpboot/csv.hpp"
#include "dpboot/errors.hpp"
#include "dpboot/parallel.hpp"

namespace dpboot {

namespace {

struct CombinedRows {
  Eigen::VectorXd y;
  RowMatrixXd x;
};

CombinedRows concat_rows(const LabeledDataset& data, const ImputedDataset& imaginary) {
  const Eigen::Index n = data.n();
  const Eigen::Index m = imaginary.n();
  if (imaginary.d() != data.d()) {
    throw ValidationError("posterior bootstrap: imaginary covariate dimension " + std::to_string(imaginary.d()) +
                          " does not match data dimension " + std::to_string(data.d()));
  }
  CombinedRows out;
  out.y.resize(n + m);
  out.y.head(n) = data.responses();
  out.y.tail(m) = imaginary.labels();
  out.x.resize(n + m, data.d());
  out.x.topRows(n) = data.covariates();
  out.x.bottomRows(m) = imaginary.covariates();
  return out;
}

Eigen::VectorXd concat_weights(const WeightVector& w) {
  Eigen::VectorXd out(w.observed.size() + w.imaginary.size());
  out.head(w.observed.size()) = w.observed;
  out.tail(w.imaginary.size()) = w.imaginary;
  return out;
}

}  // namespace

PosteriorDraws run_posterior_bootstrap(const LabeledDataset& data, const BaseMeasure* base, const LossModel& loss,
                                       const RunConfig& config) {
  config.validate();
  const Eigen::Index n = data.n();
  const bool use_base = config.alpha > 0.0;
  if (use_base && base == nullptr) {
    throw ValidationError("posterior bootstrap: alpha > 0 requires a base measure");
  }
  loss.validate_responses(data.responses());

  PosteriorDraws result;
  result.seed = config.seed;
  result.config = config;

  // Atomic bases fix the imaginary rows once: the per-draw redraw of
  // Algorithm-style sampling is a no-op on a finite fixed support.
  Eigen::Index m_eff = config.m;
  const AtomicBase* atomic = nullptr;
  if (use_base) {
    atomic = std::get_if<AtomicBase>(base);
    if (atomic != nullptr) {
      m_eff = atomic->m_atoms();
      if (m_eff != config.m) {
        result.notes.push_back("atomic base: m overridden to the " + std::to_string(m_eff) + " atoms provided");
      }
    }
  }

  // Warm start every solve from the unweighted ERM on the observed data.
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const ErmSolution base_fit = solve_weighted_erm(loss, data.responses(), data.covariates(), uniform, config);
  const Eigen::VectorXd warm = base_fit.theta;

  CombinedRows fixed_rows;
  if (atomic != nullptr) {
    fixed_rows = concat_rows(data, atomic->atoms());
    loss.validate_responses(fixed_rows.y);
  }

  const Eigen::Index b_total = config.B;
  result.draws.resize(b_total, loss.dim());
  result.converged.assign(static_cast<std::size_t>(b_total), 0);
  std::vector<std::uint8_t> ridge_flags(static_cast<std::size_t>(b_total), 0);

  parallel_for(static_cast<std::size_t>(b_total), config.threads, [&](std::size_t t) {
    RngStream stream(config.seed, stream_tag::bootstrap_task, static_cast<std::uint64_t>(t));
    ErmSolution sol;
    try {
      if (!use_base) {
        const WeightVector w = sample_weights(n, 0, 0.0, stream);
        sol = solve_weighted_erm(loss, data.responses(), data.covariates(), w.observed, config, &warm);
      } else if (atomic != nullptr) {
        const WeightVector w = sample_weights(n, m_eff, config.alpha, stream);
        const Eigen::VectorXd wc = concat_weights(w);
        sol = solve_weighted_erm(loss, fixed_rows.y, fixed_rows.x, wc, config, &warm);
      } else {
        const ImputedDataset imaginary = draw_base(*base, m_eff, stream);
        loss.validate_responses(imaginary.labels());
        const CombinedRows rows = concat_rows(data, imaginary);
        const WeightVector w = sample_weights(n, m_eff, config.alpha, stream);
        const Eigen::VectorXd wc = concat_weights(w);
        sol = solve_weighted_erm(loss, rows.y, rows.x, wc, config, &warm);
      }
    } catch (const NumericError& e) {
      throw NumericError("draw " + std::to_string(t) + ": " + e.what());
    }
    if (!sol.theta.allFinite()) {
      throw NumericError("draw " + std::to_string(t) + ": solver returned a non-finite parameter");
    }
    result.draws.row(static_cast<Eigen::Index>(t)) = sol.theta.transpose();
    result.converged[t] = sol.converged ? 1 : 0;
    ridge_flags[t] = sol.ridge_fallback ? 1 : 0;
  });

  std::size_t failed = 0;
  std::size_t first_failed = 0;
  for (std::size_t t = 0; t < result.converged.size(); ++t) {
    if (result.converged[t] == 0) {
      if (failed == 0) first_failed = t;
      ++failed;
    }
  }
  const double frac = static_cast<double>(failed) / static_cast<double>(b_total);
  if (failed > 0 && frac > config.max_nonconverged_frac) {
    throw NumericError("posterior bootstrap: " + std::to_string(failed) + " of " + std::to_string(b_total) +
                       " draws did not converge (first at draw " + std::to_string(first_failed) +
                       "), exceeding the tolerated fraction " + std::to_string(config.max_nonconverged_frac));
  }
  if (failed > 0) {
    result.notes.push_back(std::to_string(failed) + " draws did not converge; retained with converged=0");
  }
  const std::size_t ridged = static_cast<std::size_t>(std::count(ridge_flags.begin(), ridge_flags.end(), 1));
  if (ridged > 0) {
    result.notes.push_back(std::to_string(ridged) + " draws used the ridge fallback for a rank-deficient design");
  }
  return result;
}

std::pair<double, double> credible_interval(const PosteriorDraws& draws, Eigen::Index coordinate, double level) {
  const Eigen::Index b = draws.n_draws();
  if (b < 20) throw ValidationError("credible_interval: needs at least 20 draws");
  if (coordinate < 0 || coordinate >= draws.dim()) throw ValidationError("credible_interval: coordinate out of range");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("credible_interval: level must lie in (0,1)");

  std::vector<double> values(static_cast<std::size_t>(b));
  for (Eigen::Index t = 0; t < b; ++t) values[static_cast<std::size_t>(t)] = draws.draws(t, coordinate);
  std::sort(values.begin(), values.end());

  const auto interpolate = [&](double q) {
    const double pos = q * static_cast<double>(b - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {interpolate((1.0 - level) / 2.0), interpolate((1.0 + level) / 2.0)};
}

Eigen::VectorXd posterior_predictive_probs(const PosteriorDraws& draws, const LossModel& loss, RowRef x_new) {
  const auto* softmax = dynamic_cast<const SoftmaxLoss*>(&loss);
  if (softmax == nullptr) {
    throw ValidationError("posterior_predictive_probs: requires the softmax loss");
  }
  if (draws.dim() != softmax->dim()) {
    throw ValidationError("posterior_predictive_probs: draw dimension does not match the loss");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(softmax->n_classes());
  for (Eigen::Index t = 0; t < draws.n_draws(); ++t) {
    mean += softmax->class_probabilities(draws.draws.row(t).transpose(), x_new);
  }
  mean /= static_cast<double>(draws.n_draws());
  return mean;
}

Eigen::Index majority_vote_predict(const PosteriorDraws& draws, const LossModel& loss, RowRef x_new) {
  const Eigen::VectorXd probs = posterior_predictive_probs(draws, loss, x_new);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < probs.size(); ++c) {
    if (probs(c) > probs(best)) best = c;
  }
  return best;
}

void write_draws_csv(const PosteriorDraws& draws, const std::string& path) {
  std::string text;
  for (Eigen::Index j = 0; j < draws.dim(); ++j) text += "theta_" + std::to_string(j + 1) + ",";
  text += "converged\n";
  for (Eigen::Index t = 0; t < draws.n_draws(); ++t) {
    for (Eigen::Index j = 0; j < draws.dim(); ++j) text += format_double(draws.draws(t, j)) + ",";
    text += draws.converged[static_cast<std::size_t>(t)] ? "1\n" : "0\n";
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << text;
  if (!out) throw ValidationError(path + ": write failed");
}

std::string summary_json(const PosteriorDraws& draws, double level) {
  nlohmann::ordered_json root;
  root["n_draws"] = draws.n_draws();
  root["level"] = level;
  std::size_t nonconverged = 0;
  for (const auto flag : draws.converged) {
    if (flag == 0) ++nonconverged;
  }
  root["nonconverged"] = nonconverged;
  nlohmann::ordered_json coords = nlohmann::ordered_json::array();
  const auto b = static_cast<double>(draws.n_draws());
  for (Eigen::Index j = 0; j < draws.dim(); ++j) {
    const double mean = draws.draws.col(j).mean();
    double ss = 0.0;
    for (Eigen::Index t = 0; t < draws.n_draws(); ++t) {
      const double dev = draws.draws(t, j) - mean;
      ss += dev * dev;
    }
    const double sd = b > 1.0 ? std::sqrt(ss / (b - 1.0)) : 0.0;
    const auto [lo, hi] = credible_interval(draws, j, level);
    nlohmann::ordered_json c;
    c["coordinate"] = j + 1;
    c["mean"] = mean;
    c["sd"] = sd;
    c["lo"] = lo;
    c["hi"] = hi;
    coords.push_back(std::move(c));
  }
  root["coordinates"] = std::move(coords);
  root["notes"] = draws.notes;
  return root.dump(2) + "\n";
}

}  // namespace dpboot
