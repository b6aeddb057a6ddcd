#include "dpboot/base_measure.hpp"

#include <cmath>

#include "dpboot/errors.hpp"

namespace dpboot {

AtomicBase::AtomicBase(ImputedDataset atoms) : atoms_(std::move(atoms)) {
  if (!atoms_.has_labels()) throw ValidationError("AtomicBase: atoms must carry hard labels");
  if (atoms_.n() < 1) throw ValidationError("AtomicBase: need at least one atom");
}

PredictiveBase::PredictiveBase(ImputedDataset prompts) : prompts_(std::move(prompts)) {
  if (!prompts_.has_labels() && !prompts_.has_probabilities()) {
    throw ValidationError("PredictiveBase: prompts must carry labels or probabilities");
  }
  const Eigen::Index n = prompts_.n();
  if (prompts_.has_prompt_weights()) {
    weights_ = prompts_.prompt_weights();
    const double total = weights_.sum();
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw ValidationError("PredictiveBase: prompt weights must have a positive finite sum");
    }
    weights_ /= total;
    // A second pass pins the sum within 1e-12 of 1.
    weights_ /= weights_.sum();
    uniform_ = false;
  } else {
    weights_ = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    uniform_ = true;
  }
}

namespace {

/// Inverse-CDF draw from the normalized prompt weights.
Eigen::Index draw_prompt_index(const PredictiveBase& base, RngStream& rng) {
  const Eigen::Index n = base.prompts().n();
  if (base.uniform_weights()) return static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
  const double u = rng.uniform();
  double cum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cum += base.prompt_weights()(i);
    if (u < cum) return i;
  }
  return n - 1;
}

double draw_label(const ImputedDataset& prompts, Eigen::Index row, RngStream& rng) {
  if (!prompts.has_probabilities()) return prompts.labels()(row);
  const auto& probs = prompts.probabilities();
  if (probs.cols() == 1) {
    return rng.uniform() < probs(row, 0) ? 1.0 : 0.0;
  }
  const double u = rng.uniform();
  double cum = 0.0;
  for (Eigen::Index k = 0; k < probs.cols(); ++k) {
    cum += probs(row, k);
    if (u < cum) return static_cast<double>(k);
  }
  return static_cast<double>(probs.cols() - 1);
}

}  // namespace

ImputedDataset draw_base(const BaseMeasure& base, Eigen::Index m, RngStream& rng) {
  if (m < 1) throw ValidationError("draw_base: m must be >= 1");
  if (const auto* atomic = std::get_if<AtomicBase>(&base)) {
    return atomic->atoms();
  }
  const auto& predictive = std::get<PredictiveBase>(base);
  const auto& prompts = predictive.prompts();
  RowMatrixXd x(m, prompts.d());
  Eigen::VectorXd labels(m);
  for (Eigen::Index t = 0; t < m; ++t) {
    const Eigen::Index j = draw_prompt_index(predictive, rng);
    x.row(t) = prompts.covariates().row(j);
    labels(t) = draw_label(prompts, j, rng);
  }
  return ImputedDataset::with_labels(std::move(x), std::move(labels));
}

ImputedDataset thresholded_labels(const PredictiveBase& base, double cutoff) {
  const auto& prompts = base.prompts();
  if (!prompts.has_probabilities()) {
    throw ValidationError("thresholded_labels: base carries no probabilities");
  }
  if (prompts.n_classes() != 2) {
    throw ValidationError("thresholded_labels: only binary problems can be thresholded");
  }
  if (!(cutoff > 0.0 && cutoff < 1.0)) {
    throw ValidationError("thresholded_labels: cutoff must lie in (0,1)");
  }
  const auto& probs = prompts.probabilities();
  Eigen::VectorXd labels(prompts.n());
  for (Eigen::Index i = 0; i < prompts.n(); ++i) {
    const double p1 = probs.cols() == 1 ? probs(i, 0) : probs(i, 1);
    labels(i) = p1 > cutoff ? 1.0 : 0.0;
  }
  RowMatrixXd x = prompts.covariates();
  return ImputedDataset::with_labels(std::move(x), std::move(labels));
}

}  // namespace dpboot
