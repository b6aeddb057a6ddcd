#pragma once

#include <variant>

#include "dpboot/dataset.hpp"
#include "dpboot/rng.hpp"

namespace dpboot {

/// Finite-support base measure: the m_atoms rows are the full support and are
/// returned verbatim by draw_base.
class AtomicBase {
 public:
  /// Requires hard labels and at least one atom; throws ValidationError.
  explicit AtomicBase(ImputedDataset atoms);

  const ImputedDataset& atoms() const { return atoms_; }
  Eigen::Index m_atoms() const { return atoms_.n(); }

 private:
  ImputedDataset atoms_;
};

/// Predictive base measure: a categorical prompt distribution over rows
/// (weights g_i, uniform by default) composed with each row's label
/// distribution. Rows carrying only hard labels are resampled verbatim,
/// which covers real-valued predictions.
class PredictiveBase {
 public:
  /// Requires labels or probabilities; normalizes prompt weights so they sum
  /// to 1 within 1e-12. Throws ValidationError on an all-zero weight vector.
  explicit PredictiveBase(ImputedDataset prompts);

  const ImputedDataset& prompts() const { return prompts_; }
  /// Normalized g_i; uniform when the dataset carried no weight column.
  const Eigen::VectorXd& prompt_weights() const { return weights_; }
  bool uniform_weights() const { return uniform_; }

 private:
  ImputedDataset prompts_;
  Eigen::VectorXd weights_;
  bool uniform_ = true;
};

using BaseMeasure = std::variant<AtomicBase, PredictiveBase>;

/// Samples m imaginary observations with hard labels. AtomicBase ignores m
/// and returns its atoms verbatim without consuming randomness; the caller is
/// responsible for noting the override. PredictiveBase draws m iid rows:
/// prompt index from g, then a label from that row's distribution.
ImputedDataset draw_base(const BaseMeasure& base, Eigen::Index m, RngStream& rng);

/// Deterministic comparator to sampling: label 1 iff P(Y=1) > cutoff,
/// one output row per prompt row. Binary problems only.
ImputedDataset thresholded_labels(const PredictiveBase& base, double cutoff = 0.5);

}  // namespace dpboot
