#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dpboot/csv.hpp"
#include "dpboot/dataset.hpp"
#include "dpboot/errors.hpp"
#include "dpboot/rng.hpp"

using namespace dpboot;
namespace fs = std::filesystem;

namespace {

/// Writes content to a fresh file under the system temp dir and returns its
/// path; files are cleaned up per test case.
class TempFile {
 public:
  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path_ = (fs::temp_directory_path() / ("dpboot_dm_" + std::to_string(counter++) + ".csv")).string();
    std::ofstream out(path_, std::ios::binary);
    out << content;
  }
  ~TempFile() { std::remove(path_.c_str()); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace

TEST_CASE("labeled csv with no covariates") {
  TempFile f("y\n1\n0\n1\n");
  const LabeledDataset data = load_labeled(f.path());
  CHECK(data.n() == 3);
  CHECK(data.d() == 0);
  CHECK(data.responses()(0) == 1.0);
  CHECK(data.responses()(1) == 0.0);
  CHECK(data.responses()(2) == 1.0);
}

TEST_CASE("labeled csv with covariates and crlf endings") {
  TempFile f("y,x1,x2\r\n1.5,0.25,-3\r\n2.5,1,4\r\n");
  const LabeledDataset data = load_labeled(f.path());
  CHECK(data.n() == 2);
  CHECK(data.d() == 2);
  CHECK(data.covariates()(0, 1) == -3.0);
  CHECK(data.covariates()(1, 0) == 1.0);
}

TEST_CASE("non-numeric cell names the row and column") {
  TempFile f("y,x1\n1,foo\n");
  CHECK_THROWS_WITH_AS(load_labeled(f.path()),
                       doctest::Contains("row 1, column x1"), ValidationError);
}

TEST_CASE("ragged row is rejected with its row number") {
  TempFile f("y,x1\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(load_labeled(f.path()), doctest::Contains("row 2"), ValidationError);
}

TEST_CASE("empty and header-only files are rejected") {
  TempFile empty("");
  CHECK_THROWS_AS(load_labeled(empty.path()), ValidationError);
  TempFile header_only("y,x1\n");
  CHECK_THROWS_AS(load_labeled(header_only.path()), ValidationError);
  CHECK_THROWS_AS(load_labeled("/nonexistent/missing.csv"), ValidationError);
}

TEST_CASE("imputed probabilities with a single bernoulli column") {
  TempFile f("p1\n0.9\n0.1\n");
  const ImputedDataset data = load_imputed(f.path(), ImputedSchema::probabilities);
  CHECK(data.n() == 2);
  CHECK(data.d() == 0);
  CHECK(data.n_classes() == 2);
  CHECK(data.probabilities()(0, 0) == 0.9);
  CHECK_FALSE(data.has_labels());
}

TEST_CASE("probability rows near one are renormalized, far ones rejected") {
  TempFile near("p1,p2\n0.5001,0.5001\n");
  const ImputedDataset data = load_imputed(near.path(), ImputedSchema::probabilities);
  CHECK(data.probabilities()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(data.probabilities()(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

  TempFile far("p1,p2\n0.9,0.9\n");
  CHECK_THROWS_WITH_AS(load_imputed(far.path(), ImputedSchema::probabilities),
                       doctest::Contains("1.8"), ValidationError);
}

TEST_CASE("probability entries outside the unit interval name their cell") {
  TempFile f("x1,p1\n0.5,1.2\n");
  CHECK_THROWS_WITH_AS(load_imputed(f.path(), ImputedSchema::probabilities),
                       doctest::Contains("row 1"), ValidationError);
}

TEST_CASE("imputed labels schema and prompt-weight column") {
  TempFile labels("x1,y\n0.5,1\n-0.5,0\n");
  const ImputedDataset a = load_imputed(labels.path(), ImputedSchema::labels);
  CHECK(a.has_labels());
  CHECK_FALSE(a.has_probabilities());
  CHECK(a.labels()(1) == 0.0);

  TempFile weighted("x1,p1,g\n0.5,0.7,2\n1.5,0.2,1\n");
  const ImputedDataset b = load_imputed(weighted.path(), ImputedSchema::probabilities);
  CHECK(b.has_prompt_weights());
  CHECK(b.prompt_weights()(0) == 2.0);
}

TEST_CASE("schema detection from the header") {
  TempFile labels("x1,y\n0.5,1\n");
  CHECK(detect_imputed_schema(labels.path()) == ImputedSchema::labels);
  TempFile probs("x1,p1,p2\n0.5,0.6,0.4\n");
  CHECK(detect_imputed_schema(probs.path()) == ImputedSchema::probabilities);
  TempFile neither("x1,x2\n0.5,1\n");
  CHECK_THROWS_AS(detect_imputed_schema(neither.path()), ValidationError);
}

TEST_CASE("labeled round trip preserves values exactly") {
  RngStream rng(11, stream_tag::synthetic, 90);
  const Eigen::Index n = 40;
  Eigen::VectorXd y(n);
  RowMatrixXd x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = rng.normal() * 1e3;
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal() / 7.0;
  }
  const LabeledDataset data(y, x);
  TempFile f("");
  write_labeled_csv(data, f.path());
  const LabeledDataset back = load_labeled(f.path());
  REQUIRE(back.n() == n);
  // Shortest round-trip formatting makes the reload bitwise identical, which
  // is stronger than the 1e-12 contract.
  CHECK((back.responses() - data.responses()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.covariates() - data.covariates()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("imputed round trip preserves probabilities and weights") {
  RowMatrixXd x(2, 1);
  x << 0.25, -1.75;
  RowMatrixXd p(2, 3);
  p << 0.2, 0.3, 0.5, 0.1, 0.6, 0.3;
  Eigen::VectorXd g(2);
  g << 0.125, 0.875;
  const ImputedDataset data = ImputedDataset::with_probabilities(x, p, g);
  TempFile f("");
  write_imputed_csv(data, f.path());
  const ImputedDataset back = load_imputed(f.path(), ImputedSchema::probabilities);
  CHECK((back.probabilities() - data.probabilities()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.prompt_weights() - data.prompt_weights()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("format_double round-trips doubles through text") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("fnv1a digest is stable and input-sensitive") {
  TempFile a("y\n1\n");
  TempFile b("y\n2\n");
  const std::string da = fnv1a64_file(a.path());
  CHECK(da.size() == 16);
  CHECK(da == fnv1a64_file(a.path()));
  CHECK(da != fnv1a64_file(b.path()));
}

TEST_CASE("non-finite inputs are rejected at construction") {
  Eigen::VectorXd y(2);
  y << 1.0, std::numeric_limits<double>::quiet_NaN();
  RowMatrixXd x(2, 0);
  CHECK_THROWS_AS(LabeledDataset(y, x), ValidationError);
}

TEST_CASE("imputed dataset shape mismatches are rejected") {
  RowMatrixXd x(2, 1);
  x << 0.0, 1.0;
  Eigen::VectorXd labels(3);
  labels << 0, 1, 0;
  CHECK_THROWS_AS(ImputedDataset::with_labels(x, labels), ValidationError);

  RowMatrixXd p(2, 1);
  p << 0.5, 0.5;
  Eigen::VectorXd g(2);
  g << 1.0, -0.5;
  CHECK_THROWS_AS(ImputedDataset::with_probabilities(x, p, g), ValidationError);
}

TEST_CASE("run config validation rejects out-of-range fields") {
  RunConfig ok;
  CHECK_NOTHROW(ok.validate());

  RunConfig bad = ok;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.level = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.B = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = ok;
  bad.max_nonconverged_frac = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
