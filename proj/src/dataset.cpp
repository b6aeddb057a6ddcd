#include "dpboot/dataset.hpp"

#include <cmath>
#include <sstream>

#include "dpboot/errors.hpp"

namespace dpboot {

namespace {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << what << " contains a non-finite value";
    throw ValidationError(msg.str());
  }
}

}  // namespace

LabeledDataset::LabeledDataset(Eigen::VectorXd responses, RowMatrixXd covariates)
    : responses_(std::move(responses)), covariates_(std::move(covariates)) {
  if (responses_.size() == 0) throw ValidationError("labeled dataset is empty");
  if (covariates_.rows() != responses_.size()) {
    std::ostringstream msg;
    msg << "labeled dataset: " << responses_.size() << " responses but " << covariates_.rows()
        << " covariate rows";
    throw ValidationError(msg.str());
  }
  require_finite(responses_, "responses");
  if (covariates_.size() > 0) require_finite(covariates_, "covariates");
}

ImputedDataset ImputedDataset::with_labels(RowMatrixXd covariates, Eigen::VectorXd labels) {
  ImputedDataset out;
  out.covariates_ = std::move(covariates);
  out.labels_ = std::move(labels);
  out.validate();
  return out;
}

ImputedDataset ImputedDataset::with_probabilities(RowMatrixXd covariates, RowMatrixXd probabilities,
                                                  std::optional<Eigen::VectorXd> prompt_weights) {
  ImputedDataset out;
  out.covariates_ = std::move(covariates);
  out.probabilities_ = std::move(probabilities);
  out.prompt_weights_ = std::move(prompt_weights);
  out.validate();
  return out;
}

ImputedDataset ImputedDataset::with_both(RowMatrixXd covariates, Eigen::VectorXd labels, RowMatrixXd probabilities,
                                         std::optional<Eigen::VectorXd> prompt_weights) {
  ImputedDataset out;
  out.covariates_ = std::move(covariates);
  out.labels_ = std::move(labels);
  out.probabilities_ = std::move(probabilities);
  out.prompt_weights_ = std::move(prompt_weights);
  out.validate();
  return out;
}

const Eigen::VectorXd& ImputedDataset::labels() const {
  if (!labels_) throw ValidationError("imputed dataset carries no hard labels");
  return *labels_;
}

const RowMatrixXd& ImputedDataset::probabilities() const {
  if (!probabilities_) throw ValidationError("imputed dataset carries no probabilities");
  return *probabilities_;
}

const Eigen::VectorXd& ImputedDataset::prompt_weights() const {
  if (!prompt_weights_) throw ValidationError("imputed dataset carries no prompt weights");
  return *prompt_weights_;
}

Eigen::Index ImputedDataset::n_classes() const {
  const Eigen::Index k = probabilities().cols();
  return k == 1 ? 2 : k;
}

void ImputedDataset::validate() const {
  if (covariates_.rows() == 0) throw ValidationError("imputed dataset is empty");
  if (!labels_ && !probabilities_) {
    throw ValidationError("imputed dataset needs hard labels or probabilities");
  }
  if (covariates_.size() > 0) require_finite(covariates_, "imputed covariates");
  if (labels_) {
    require_finite(*labels_, "imputed labels");
    if (labels_->size() != covariates_.rows()) {
      throw ValidationError("imputed dataset: label count does not match covariate rows");
    }
  }
  if (probabilities_) {
    const RowMatrixXd& p = *probabilities_;
    require_finite(p, "imputed probabilities");
    if (p.rows() != covariates_.rows()) {
      throw ValidationError("imputed dataset: probability rows do not match covariate rows");
    }
    if (p.cols() < 1) throw ValidationError("imputed dataset: probability table has no columns");
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        if (p(i, j) < 0.0 || p(i, j) > 1.0) {
          std::ostringstream msg;
          msg << "probability out of [0,1] at row " << (i + 1) << ", class " << (j + 1) << ": " << p(i, j);
          throw ValidationError(msg.str());
        }
      }
      if (p.cols() >= 2) {
        const double sum = p.row(i).sum();
        if (std::abs(sum - 1.0) > 1e-6) {
          std::ostringstream msg;
          msg << "probability row " << (i + 1) << " sums to " << sum << ", expected 1 within 1e-6";
          throw ValidationError(msg.str());
        }
      }
    }
  }
  if (prompt_weights_) {
    require_finite(*prompt_weights_, "prompt weights");
    if (prompt_weights_->size() != covariates_.rows()) {
      throw ValidationError("imputed dataset: prompt-weight count does not match rows");
    }
    if ((prompt_weights_->array() < 0.0).any()) {
      throw ValidationError("prompt weights must be nonnegative");
    }
  }
}

void RunConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be finite and >= 0");
  if (m < 1) throw ValidationError("m must be a positive integer");
  if (B < 1) throw ValidationError("B must be a positive integer");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0,1)");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1)");
  if (n_classes < 2) throw ValidationError("n_classes must be at least 2");
  if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
  if (!(tol > 0.0)) throw ValidationError("tol must be positive");
  if (max_nonconverged_frac < 0.0 || max_nonconverged_frac > 1.0) {
    throw ValidationError("max_nonconverged_frac must lie in [0,1]");
  }
  if (threads < 0) throw ValidationError("threads must be >= 0");
}

}  // namespace dpboot
