#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpboot/calibration.hpp"
#include "dpboot/errors.hpp"
#include "dpboot/sandwich.hpp"
#include "oracle_helpers.hpp"

using namespace dpboot;

namespace {

LabeledDataset scalar_data(const Eigen::VectorXd& y) { return LabeledDataset(y, RowMatrixXd(y.size(), 0)); }

BaseMeasure resampling_base(const Eigen::VectorXd& labels) {
  return BaseMeasure{PredictiveBase(ImputedDataset::with_labels(RowMatrixXd(labels.size(), 0), labels))};
}

BaseMeasure atomic_base(const Eigen::VectorXd& labels) {
  return BaseMeasure{AtomicBase(ImputedDataset::with_labels(RowMatrixXd(labels.size(), 0), labels))};
}

}  // namespace

TEST_CASE("ppi variance pins the hand examples") {
  Eigen::VectorXd y(4), imputed(4);
  y << 1.0, 0.0, 1.0, 0.0;
  imputed << 1.0, 1.0, 0.0, 0.0;

  SUBCASE("perfect predictions leave only the imputed term") {
    const PpiVariance v = ppi_variance_mean(y, y, imputed);
    CHECK(v.sigma2_rect == 0.0);
    CHECK(v.sigma2_f == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(v.total == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
    CHECK(v.n == 4);
    CHECK(v.N == 4);
  }

  SUBCASE("constant imputed predictions leave only the rectifier term") {
    Eigen::VectorXd f(4);
    f << 1.5, -0.5, 1.25, 0.25;
    const PpiVariance v = ppi_variance_mean(y, f, Eigen::VectorXd::Constant(4, 0.5));
    CHECK(v.sigma2_f == 0.0);
    const Eigen::VectorXd rect = f - y;
    const double expected = (rect.array() - rect.mean()).square().sum() / 3.0;
    CHECK(v.total == doctest::Approx(expected / 4.0).epsilon(1e-15));
  }

  SUBCASE("fully degenerate inputs give zero variance") {
    const PpiVariance v = ppi_variance_mean(y, y, Eigen::VectorXd::Constant(4, 0.5));
    CHECK(v.total == 0.0);
  }

  SUBCASE("length mismatches and tiny samples are rejected") {
    Eigen::VectorXd f3(3);
    f3 << 1, 0, 1;
    CHECK_THROWS_AS(ppi_variance_mean(y, f3, imputed), ValidationError);
    Eigen::VectorXd one(1);
    one << 1.0;
    CHECK_THROWS_AS(ppi_variance_mean(one, one, imputed), ValidationError);
    CHECK_THROWS_AS(ppi_variance_mean(y, y, one), ValidationError);
  }
}

TEST_CASE("classical variance is recovered at alpha zero") {
  RngStream rng(81, stream_tag::synthetic, 0);
  const Eigen::VectorXd y = oracle::normal_vector(60, 0.0, 1.3, rng);
  const LabeledDataset data = scalar_data(y);
  const MeanLoss loss;
  RunConfig cfg;
  const SandwichEstimate est = empirical_sandwich(data, nullptr, loss, 0.0, cfg);
  const double pop_var = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size());
  // tr Sigma(0)/n is the classical variance of the sample mean.
  CHECK(est.sigma_hat.trace() / static_cast<double>(y.size()) ==
        doctest::Approx(pop_var / static_cast<double>(y.size())).epsilon(1e-14));
}

TEST_CASE("ppi matching drives the residual to its tolerance") {
  RngStream rng(82, stream_tag::synthetic, 0);
  const Eigen::Index n = 100;
  const Eigen::VectorXd y = oracle::normal_vector(n, 1.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  const Eigen::VectorXd base_labels = oracle::normal_vector(500, 1.0, 1.0, rng);
  const BaseMeasure base = resampling_base(base_labels);

  Eigen::VectorXd f(n);
  for (Eigen::Index i = 0; i < n; ++i) f(i) = y(i) + 0.3 * rng.normal();
  const PpiVariance ppi = ppi_variance_mean(y, f, base_labels);
  REQUIRE(ppi.total > 0.0);

  const MeanLoss loss;
  RunConfig cfg;
  cfg.seed = 9;
  cfg.m = 400;
  const CalibrationResult res = calibrate_alpha_ppi(data, base, loss, ppi, {0.0, 1e6}, cfg);
  CHECK(res.method == "ppi-match");
  CHECK(res.alpha_star > 0.0);
  CHECK(std::abs(res.residual) <= 1e-8 * ppi.total);
  CHECK(res.iterations <= 60);
  CHECK_FALSE(res.diagnostics.empty());

  // The returned alpha reproduces its own residual: the target function is
  // deterministic given the seed.
  RngStream check_stream(cfg.seed, stream_tag::base_draw, 0);
  const ImputedDataset base_draws = draw_base(base, cfg.m, check_stream);
  const SandwichEstimate at = empirical_sandwich(data, &base_draws, loss, res.alpha_star, cfg);
  const double lhs = at.sigma_hat.trace() / (static_cast<double>(n) + res.alpha_star);
  CHECK(std::abs(lhs - ppi.total) <= 1e-8 * ppi.total);
}

TEST_CASE("a bracket without a sign change reports both residuals") {
  RngStream rng(83, stream_tag::synthetic, 0);
  const Eigen::VectorXd y = oracle::normal_vector(50, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  const BaseMeasure base = resampling_base(y);
  const MeanLoss loss;
  RunConfig cfg;

  // Target far below anything the bracket can reach: both residuals positive.
  PpiVariance tiny;
  tiny.sigma2_f = 1e-12;
  tiny.sigma2_rect = 0.0;
  tiny.n = 50;
  tiny.N = 50;
  tiny.total = 1e-12;
  try {
    calibrate_alpha_ppi(data, base, loss, tiny, {0.0, 10.0}, cfg);
    FAIL("expected a bracketing error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sign") != std::string::npos);
    // Both endpoint residuals appear in the message.
    CHECK(msg.find("residual") != std::string::npos);
  }
}

TEST_CASE("ppi matching validates its inputs") {
  RngStream rng(84, stream_tag::synthetic, 0);
  const Eigen::VectorXd y = oracle::normal_vector(30, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  const BaseMeasure base = resampling_base(y);
  const MeanLoss loss;
  RunConfig cfg;
  PpiVariance zero;
  zero.n = 30;
  zero.N = 30;
  zero.total = 0.0;
  CHECK_THROWS_AS(calibrate_alpha_ppi(data, base, loss, zero, {0.0, 10.0}, cfg), ValidationError);
  PpiVariance ok;
  ok.n = 30;
  ok.N = 30;
  ok.total = 0.01;
  CHECK_THROWS_AS(calibrate_alpha_ppi(data, base, loss, ok, {5.0, 5.0}, cfg), ValidationError);
  CHECK_THROWS_AS(calibrate_alpha_ppi(data, base, loss, ok, {-1.0, 10.0}, cfg), ValidationError);
}

TEST_CASE("overdispersed unbiased base keeps coverage and selects the grid max") {
  RngStream rng(85, stream_tag::synthetic, 0);
  const Eigen::Index n = 150;
  const Eigen::VectorXd y = oracle::normal_vector(n, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  // Centered exactly on the data mean but four times as spread: large-alpha
  // posteriors stay wider than the resampling noise, so every grid point
  // keeps its coverage. Exact centering removes the O(1/sqrt(m)) atom-mean
  // noise that would otherwise shift large-alpha intervals off the data.
  Eigen::VectorXd atoms = oracle::normal_vector(150, 0.0, 4.0, rng);
  atoms.array() += y.mean() - atoms.mean();
  const BaseMeasure base = atomic_base(atoms);

  const MeanLoss loss;
  RunConfig cfg;
  cfg.seed = 17;
  cfg.B = 400;
  const std::vector<double> grid = {1.0, 10.0, 100.0, 1000.0};
  const CalibrationResult res = calibrate_alpha_coverage(data, base, loss, grid, 120, 0.9, cfg);
  CHECK(res.method == "coverage");
  CHECK(res.alpha_star == 1000.0);
  CHECK_FALSE(res.none_qualified);
  REQUIRE(res.diagnostics.size() == 4);
  CHECK(res.diagnostics.back().second >= 0.9);
}

TEST_CASE("a strongly biased base loses coverage as alpha grows") {
  RngStream rng(86, stream_tag::synthetic, 0);
  const Eigen::Index n = 150;
  const Eigen::VectorXd y = oracle::normal_vector(n, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  // Shift of one full sd: roughly 12 standard errors of bias at n=150.
  const Eigen::VectorXd atoms = oracle::normal_vector(150, 1.0, 1.0, rng);
  const BaseMeasure base = atomic_base(atoms);

  const MeanLoss loss;
  RunConfig cfg;
  cfg.seed = 18;
  cfg.B = 400;
  const std::vector<double> grid = {0.0, 1.0, 10.0, 100.0, 1000.0};
  const int n_boot = 150;
  const CalibrationResult res = calibrate_alpha_coverage(data, base, loss, grid, n_boot, 0.9, cfg);
  REQUIRE(res.diagnostics.size() == 5);
  // Large alpha drags the interval a full sigma away: coverage collapses.
  CHECK(res.diagnostics.back().second < 0.5);
  CHECK(res.alpha_star < 1000.0);
  // Nonincreasing in alpha up to 3-sigma binomial slack.
  const double slack = 3.0 * std::sqrt(0.9 * 0.1 / static_cast<double>(n_boot));
  for (std::size_t i = 1; i < res.diagnostics.size(); ++i) {
    CHECK(res.diagnostics[i].second <= res.diagnostics[i - 1].second + slack);
  }
}

TEST_CASE("degenerate responses are flagged") {
  const LabeledDataset data = scalar_data(Eigen::VectorXd::Ones(40));
  const BaseMeasure base = atomic_base(Eigen::VectorXd::Ones(5));
  const MeanLoss loss;
  RunConfig cfg;
  cfg.B = 50;
  const CalibrationResult res = calibrate_alpha_coverage(data, base, loss, {0.0, 1.0}, 60, 0.9, cfg);
  CHECK(res.degenerate_data);
  CHECK(res.alpha_star == 1.0);  // coverage is trivially 1 everywhere
}

TEST_CASE("coverage calibration validates grid and n_boot") {
  RngStream rng(87, stream_tag::synthetic, 0);
  const Eigen::VectorXd y = oracle::normal_vector(30, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  const BaseMeasure base = atomic_base(y);
  const MeanLoss loss;
  RunConfig cfg;
  CHECK_THROWS_AS(calibrate_alpha_coverage(data, base, loss, {}, 60, 0.9, cfg), ValidationError);
  CHECK_THROWS_AS(calibrate_alpha_coverage(data, base, loss, {1.0, 0.5}, 60, 0.9, cfg), ValidationError);
  CHECK_THROWS_AS(calibrate_alpha_coverage(data, base, loss, {0.0, 1.0}, 49, 0.9, cfg), ValidationError);
  CHECK_THROWS_AS(calibrate_alpha_coverage(data, base, loss, {-1.0, 1.0}, 60, 0.9, cfg), ValidationError);
}

TEST_CASE("coverage calibration is deterministic in the seed") {
  RngStream rng(88, stream_tag::synthetic, 0);
  const Eigen::VectorXd y = oracle::normal_vector(50, 0.0, 1.0, rng);
  const LabeledDataset data = scalar_data(y);
  const BaseMeasure base = atomic_base(oracle::normal_vector(40, 0.0, 2.0, rng));
  const MeanLoss loss;
  RunConfig cfg;
  cfg.seed = 33;
  cfg.B = 100;
  const CalibrationResult a = calibrate_alpha_coverage(data, base, loss, {0.0, 2.0}, 60, 0.9, cfg);
  const CalibrationResult b = calibrate_alpha_coverage(data, base, loss, {0.0, 2.0}, 60, 0.9, cfg);
  REQUIRE(a.diagnostics.size() == b.diagnostics.size());
  for (std::size_t i = 0; i < a.diagnostics.size(); ++i) {
    CHECK(a.diagnostics[i].second == b.diagnostics[i].second);
  }
  CHECK(a.alpha_star == b.alpha_star);
}

TEST_CASE("calibration results serialize to json and csv") {
  CalibrationResult res;
  res.alpha_star = 12.5;
  res.method = "coverage";
  res.diagnostics = {{0.0, 0.95}, {12.5, 0.91}};
  res.grid = {0.0, 12.5};
  const std::string json = calibration_json(res);
  CHECK(json.find("\"alpha_star\": 12.5") != std::string::npos);
  CHECK(json.find("\"method\": \"coverage\"") != std::string::npos);
  CHECK(json.find("\"coverage\": 0.95") != std::string::npos);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dpboot_cal.csv").string();
  write_calibration_csv(res, path);
  std::ifstream in(path);
  std::stringstream body;
  body << in.rdbuf();
  CHECK(body.str() == "alpha,coverage\n0,0.95\n12.5,0.91\n");
  std::remove(path.c_str());

  res.method = "ppi-match";
  res.residual = 1e-9;
  res.diagnostics = {{0.0, 0.25}, {100.0, -0.5}};
  const std::string json2 = calibration_json(res);
  CHECK(json2.find("\"residual\":") != std::string::npos);
  write_calibration_csv(res, path);
  std::ifstream in2(path);
  std::stringstream body2;
  body2 << in2.rdbuf();
  CHECK(body2.str().rfind("alpha,residual\n", 0) == 0);
  std::remove(path.c_str());
}
