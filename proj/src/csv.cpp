#include "dpboot/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "dpboot/errors.hpp"

namespace dpboot {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

double parse_cell(const std::string& raw, const std::string& path, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    std::ostringstream msg;
    msg << path << ": row " << row << ", column " << column << ": non-numeric cell '" << cell << "'";
    throw ValidationError(msg.str());
  }
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  for (auto& name : split_csv_line(line)) table.header.push_back(trim(name));
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_index;
    const auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path << ": row " << row_index << " has " << cells.size() << " cells, expected "
          << table.header.size();
      throw ValidationError(msg.str());
    }
    std::vector<double> values(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      values[j] = parse_cell(cells[j], path, row_index, table.header[j]);
    }
    table.rows.push_back(std::move(values));
  }
  if (table.rows.empty()) throw ValidationError(path + ": no data rows");
  return table;
}

bool is_indexed_name(const std::string& name, char prefix, std::size_t index) {
  return name == std::string(1, prefix) + std::to_string(index);
}

/// Leading run of x1, x2, ... in the header.
std::size_t count_covariate_columns(const std::vector<std::string>& header) {
  std::size_t d = 0;
  while (d < header.size() && is_indexed_name(header[d], 'x', d + 1)) ++d;
  return d;
}

}  // namespace

LabeledDataset load_labeled(const std::string& path) {
  const CsvTable table = read_table(path);
  if (table.header.empty() || table.header[0] != "y") {
    throw ValidationError(path + ": expected header starting with 'y'");
  }
  const std::size_t d = table.header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (!is_indexed_name(table.header[j + 1], 'x', j + 1)) {
      throw ValidationError(path + ": expected covariate column 'x" + std::to_string(j + 1) + "', found '" +
                            table.header[j + 1] + "'");
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
  Eigen::VectorXd y(n);
  RowMatrixXd x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    y(i) = row[0];
    for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = row[j + 1];
  }
  try {
    return LabeledDataset(std::move(y), std::move(x));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

ImputedDataset load_imputed(const std::string& path, ImputedSchema schema) {
  const CsvTable table = read_table(path);
  const std::size_t d = count_covariate_columns(table.header);
  const std::size_t n = table.rows.size();

  RowMatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.rows[i][j];
    }
  }

  if (schema == ImputedSchema::labels) {
    if (table.header.size() != d + 1 || table.header[d] != "y") {
      throw ValidationError(path + ": expected header 'x1,...,xd,y' for the labels schema");
    }
    Eigen::VectorXd labels(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) labels(static_cast<Eigen::Index>(i)) = table.rows[i][d];
    try {
      return ImputedDataset::with_labels(std::move(x), std::move(labels));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }

  // probabilities schema: p1..pK then an optional trailing g column
  std::size_t k = 0;
  while (d + k < table.header.size() && is_indexed_name(table.header[d + k], 'p', k + 1)) ++k;
  if (k == 0) {
    throw ValidationError(path + ": expected probability columns 'p1,...,pK' for the probabilities schema");
  }
  const bool has_g = (d + k < table.header.size()) && table.header[d + k] == "g";
  if (d + k + (has_g ? 1 : 0) != table.header.size()) {
    throw ValidationError(path + ": unexpected trailing columns after the probability block");
  }

  RowMatrixXd probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double p = table.rows[i][d + j];
      if (p < 0.0 || p > 1.0) {
        std::ostringstream msg;
        msg << path << ": row " << (i + 1) << ", column " << table.header[d + j]
            << ": probability out of [0,1]: " << p;
        throw ValidationError(msg.str());
      }
      probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
    }
    if (k >= 2) {
      const double sum = probs.row(static_cast<Eigen::Index>(i)).sum();
      if (std::abs(sum - 1.0) > 1e-3) {
        std::ostringstream msg;
        msg << path << ": row " << (i + 1) << ": probabilities sum to " << sum
            << ", outside the 1e-3 renormalization tolerance";
        throw ValidationError(msg.str());
      }
      probs.row(static_cast<Eigen::Index>(i)) /= sum;
    }
  }

  std::optional<Eigen::VectorXd> g;
  if (has_g) {
    Eigen::VectorXd weights(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) weights(static_cast<Eigen::Index>(i)) = table.rows[i][d + k];
    g = std::move(weights);
  }
  try {
    return ImputedDataset::with_probabilities(std::move(x), std::move(probs), std::move(g));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

ImputedSchema detect_imputed_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  std::vector<std::string> header;
  for (auto& name : split_csv_line(line)) header.push_back(trim(name));
  const std::size_t d = count_covariate_columns(header);
  if (d < header.size() && header[d] == "y") return ImputedSchema::labels;
  if (d < header.size() && header[d] == "p1") return ImputedSchema::probabilities;
  throw ValidationError(path + ": expected a 'y' or 'p1' column after the covariate block");
}

RowMatrixXd load_covariates(const std::string& path) {
  const CsvTable table = read_table(path);
  const std::size_t d = count_covariate_columns(table.header);
  if (d != table.header.size()) {
    throw ValidationError(path + ": expected only covariate columns 'x1,...,xd'");
  }
  RowMatrixXd x(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.rows[i][j];
    }
  }
  if (!x.allFinite()) throw ValidationError(path + ": covariates must be finite");
  return x;
}

Eigen::VectorXd load_column(const std::string& path, const std::string& expected_header) {
  const CsvTable table = read_table(path);
  if (table.header.size() != 1 || table.header[0] != expected_header) {
    throw ValidationError(path + ": expected a single column named '" + expected_header + "'");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) v(static_cast<Eigen::Index>(i)) = table.rows[i][0];
  if (!v.allFinite()) throw ValidationError(path + ": values must be finite");
  return v;
}

RowMatrixXd load_draws_matrix(const std::string& path) {
  const CsvTable table = read_table(path);
  std::size_t p = 0;
  while (p < table.header.size() && table.header[p] == "theta_" + std::to_string(p + 1)) ++p;
  if (p == 0 || p + 1 != table.header.size() || table.header[p] != "converged") {
    throw ValidationError(path + ": expected header 'theta_1,...,theta_p,converged'");
  }
  RowMatrixXd draws(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.rows[i][j];
    }
  }
  if (!draws.allFinite()) throw ValidationError(path + ": draws must be finite");
  return draws;
}

std::string format_double(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << contents;
  if (!out) throw ValidationError(path + ": write failed");
}

}  // namespace

void write_labeled_csv(const LabeledDataset& data, const std::string& path) {
  std::string text = "y";
  for (Eigen::Index j = 0; j < data.d(); ++j) text += ",x" + std::to_string(j + 1);
  text += "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    text += format_double(data.responses()(i));
    for (Eigen::Index j = 0; j < data.d(); ++j) text += "," + format_double(data.covariates()(i, j));
    text += "\n";
  }
  write_file(path, text);
}

void write_imputed_csv(const ImputedDataset& data, const std::string& path) {
  std::string text;
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    if (j > 0) text += ",";
    text += "x" + std::to_string(j + 1);
  }
  const bool probs = data.has_probabilities();
  if (probs) {
    for (Eigen::Index j = 0; j < data.probabilities().cols(); ++j) {
      if (data.d() > 0 || j > 0) text += ",";
      text += "p" + std::to_string(j + 1);
    }
    if (data.has_prompt_weights()) text += ",g";
  } else {
    if (data.d() > 0) text += ",";
    text += "y";
  }
  text += "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    std::string row;
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      if (j > 0) row += ",";
      row += format_double(data.covariates()(i, j));
    }
    if (probs) {
      for (Eigen::Index j = 0; j < data.probabilities().cols(); ++j) {
        if (!row.empty() || j > 0) row += ",";
        row += format_double(data.probabilities()(i, j));
      }
      if (data.has_prompt_weights()) row += "," + format_double(data.prompt_weights()(i));
    } else {
      if (!row.empty()) row += ",";
      row += format_double(data.labels()(i));
    }
    text += row + "\n";
  }
  write_file(path, text);
}

std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file for digest");
  std::uint64_t hash = 14695981039346656037ULL;
  char chunk[4096];
  while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(chunk[i]);
      hash *= 1099511628211ULL;
    }
    if (!in) break;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

}  // namespace dpboot
