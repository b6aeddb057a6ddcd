#pragma once

#include <cstdint>
#include <string>

#include "dpboot/dataset.hpp"

namespace dpboot {

enum class ImputedSchema { labels, probabilities };

/// Reads `y,x1,...,xd` (d >= 0). Diagnostics name the offending row and
/// column. Row order is preserved.
LabeledDataset load_labeled(const std::string& path);

/// Reads `x1,...,xd,y` (labels) or `x1,...,xd,p1,...,pK[,g]` (probabilities;
/// K=1 means Bernoulli P(Y=1), the optional g column carries nonuniform
/// prompt weights). Probability rows within 1e-3 of summing to one are
/// renormalized; larger deviations are rejected.
ImputedDataset load_imputed(const std::string& path, ImputedSchema schema);

/// Decides labels vs probabilities from the header: a `y` column after the
/// covariate block means labels, a `p1` column means probabilities.
ImputedSchema detect_imputed_schema(const std::string& path);

/// Reads a covariates-only file with header `x1,...,xd`.
RowMatrixXd load_covariates(const std::string& path);

/// Reads a one-column file whose header must equal expected_header.
Eigen::VectorXd load_column(const std::string& path, const std::string& expected_header);

/// Reads the theta block of a `theta_1,...,theta_p,converged` draws file.
RowMatrixXd load_draws_matrix(const std::string& path);

void write_labeled_csv(const LabeledDataset& data, const std::string& path);
void write_imputed_csv(const ImputedDataset& data, const std::string& path);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string fnv1a64_file(const std::string& path);

}  // namespace dpboot
