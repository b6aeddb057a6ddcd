#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpboot/calibration.hpp"
#include "dpboot/csv.hpp"
#include "dpboot/errors.hpp"
#include "dpboot/posterior_bootstrap.hpp"
#include "dpboot/rng.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using dpboot::ValidationError;

struct CommonOpts {
  std::string labeled;
  std::string out;
  std::string base_kind;
  std::string imputed;
  dpboot::RunConfig config;
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts, CLI::Option*& threads_opt) {
  cmd->add_option("--labeled", opts.labeled, "labeled data CSV (header y,x1,...,xd)")->required();
  cmd->add_option("--out", opts.out, "output directory")->required();
  cmd->add_option("--loss", opts.config.loss, "loss id: mean, quantile, ols, logistic, softmax");
  cmd->add_option("--alpha", opts.config.alpha, "DP concentration (0 = Bayesian bootstrap)");
  cmd->add_option("--m", opts.config.m, "imaginary sample size per draw");
  cmd->add_option("--B", opts.config.B, "number of posterior draws");
  cmd->add_option("--level", opts.config.level, "credible level");
  cmd->add_option("--tau", opts.config.tau, "quantile level for the pinball loss");
  cmd->add_option("--k", opts.config.n_classes, "number of classes for the softmax loss");
  cmd->add_option("--seed", opts.config.seed, "master seed");
  cmd->add_option("--max-iter", opts.config.max_iter, "solver iteration cap");
  cmd->add_option("--tol", opts.config.tol, "solver gradient tolerance");
  cmd->add_option("--max-nonconverged-frac", opts.config.max_nonconverged_frac,
                  "tolerated fraction of non-converged draws");
  cmd->add_option("--base", opts.base_kind, "base measure kind: atomic or predictive");
  cmd->add_option("--imputed", opts.imputed, "imputed data CSV backing the base measure");
  threads_opt = cmd->add_option("--threads", opts.config.threads, "worker thread cap (default: all cores)");
}

void resolve_threads(const CLI::Option* threads_opt, dpboot::RunConfig& config) {
  if (threads_opt != nullptr && threads_opt->count() > 0) return;  // explicit flag wins
  if (const char* env = std::getenv("DPBOOT_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || value <= 0) {
      throw ValidationError("DPBOOT_THREADS must be a positive integer");
    }
    config.threads = static_cast<int>(value);
  }
}

std::optional<dpboot::BaseMeasure> make_base(const CommonOpts& opts) {
  if (opts.base_kind.empty() && opts.imputed.empty()) return std::nullopt;
  if (opts.base_kind.empty() || opts.imputed.empty()) {
    throw ValidationError("--base and --imputed must be given together");
  }
  dpboot::ImputedDataset imp = dpboot::load_imputed(opts.imputed, dpboot::detect_imputed_schema(opts.imputed));
  if (opts.base_kind == "atomic") return dpboot::BaseMeasure{dpboot::AtomicBase(std::move(imp))};
  if (opts.base_kind == "predictive") return dpboot::BaseMeasure{dpboot::PredictiveBase(std::move(imp))};
  throw ValidationError("--base must be 'atomic' or 'predictive'");
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw ValidationError(out + ": cannot create output directory: " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError(path + ": cannot open for writing");
  f << text;
  if (!f) throw ValidationError(path + ": write failed");
}

nlohmann::ordered_json config_json(const dpboot::RunConfig& c) {
  nlohmann::ordered_json j;
  j["alpha"] = c.alpha;
  j["m"] = c.m;
  j["B"] = c.B;
  j["level"] = c.level;
  j["loss"] = c.loss;
  j["tau"] = c.tau;
  j["n_classes"] = c.n_classes;
  j["seed"] = c.seed;
  j["max_iter"] = c.max_iter;
  j["tol"] = c.tol;
  j["max_nonconverged_frac"] = c.max_nonconverged_frac;
  j["threads"] = c.threads;
  return j;
}

void write_manifest(const std::string& out_dir, const std::string& command, const dpboot::RunConfig& config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double wall_seconds) {
  nlohmann::ordered_json j;
  j["tool"] = "dpboot";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = config.seed;
  j["config"] = config_json(config);
  nlohmann::ordered_json digests;
  for (const auto& path : inputs) digests[path] = dpboot::fnv1a64_file(path);
  j["inputs"] = std::move(digests);
  std::vector<std::string> all_outputs = outputs;
  all_outputs.push_back("manifest.json");
  j["outputs"] = all_outputs;
  j["wall_clock_seconds"] = wall_seconds;
  write_text(out_dir + "/manifest.json", j.dump(2) + "\n");
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ------------------------------------------------------------------ sample

int cmd_sample(const CommonOpts& opts) {
  const WallClock clock;
  const dpboot::LabeledDataset data = dpboot::load_labeled(opts.labeled);
  const auto loss = dpboot::make_loss(opts.config, data.d());
  const std::optional<dpboot::BaseMeasure> base = make_base(opts);
  if (opts.config.alpha > 0.0 && !base.has_value()) {
    throw ValidationError("alpha > 0 requires --imputed and --base");
  }
  const dpboot::PosteriorDraws draws =
      dpboot::run_posterior_bootstrap(data, base.has_value() ? &*base : nullptr, *loss, opts.config);
  ensure_out_dir(opts.out);
  dpboot::write_draws_csv(draws, opts.out + "/draws.csv");
  write_text(opts.out + "/summary.json", dpboot::summary_json(draws, opts.config.level));
  std::vector<std::string> inputs = {opts.labeled};
  if (!opts.imputed.empty()) inputs.push_back(opts.imputed);
  write_manifest(opts.out, "sample", opts.config, inputs, {"draws.csv", "summary.json"}, clock.seconds());
  return 0;
}

// ------------------------------------------------------------------- sweep

int cmd_sweep(const CommonOpts& opts, const std::vector<double>& alphas, const std::vector<int>& ns, int reps) {
  const WallClock clock;
  if (reps < 1) throw ValidationError("--reps must be >= 1");
  const dpboot::LabeledDataset data = dpboot::load_labeled(opts.labeled);
  const auto loss = dpboot::make_loss(opts.config, data.d());
  const std::optional<dpboot::BaseMeasure> base = make_base(opts);

  std::vector<double> alpha_grid = alphas.empty() ? std::vector<double>{opts.config.alpha} : alphas;
  std::vector<int> n_grid = ns.empty() ? std::vector<int>{static_cast<int>(data.n())} : ns;
  for (const int n : n_grid) {
    if (n < 1 || n > data.n()) {
      throw ValidationError("--ns entries must lie in [1, " + std::to_string(data.n()) + "]");
    }
  }
  const bool needs_base = std::any_of(alpha_grid.begin(), alpha_grid.end(), [](double a) { return a > 0.0; });
  if (needs_base && !base.has_value()) throw ValidationError("alpha > 0 requires --imputed and --base");

  std::string text = "alpha,n,rep,lo,hi,width\n";
  std::uint64_t combo = 0;
  for (const double alpha : alpha_grid) {
    for (const int n_sub : n_grid) {
      for (int rep = 1; rep <= reps; ++rep, ++combo) {
        dpboot::RngStream stream(opts.config.seed, dpboot::stream_tag::sweep, combo);
        // Distinct rows, partial Fisher-Yates over the row indices.
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.n()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        for (int i = 0; i < n_sub; ++i) {
          const auto j = i + static_cast<Eigen::Index>(stream.uniform_index(idx.size() - static_cast<std::size_t>(i)));
          std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        Eigen::VectorXd y(n_sub);
        dpboot::RowMatrixXd x(n_sub, data.d());
        for (int i = 0; i < n_sub; ++i) {
          y(i) = data.responses()(idx[static_cast<std::size_t>(i)]);
          x.row(i) = data.covariates().row(idx[static_cast<std::size_t>(i)]);
        }
        const dpboot::LabeledDataset subset(std::move(y), std::move(x));

        dpboot::RunConfig run = opts.config;
        run.alpha = alpha;
        std::uint64_t mix_state = opts.config.seed ^ (0x9E3779B97F4A7C15ULL * (combo + 1));
        run.seed = dpboot::splitmix64(mix_state);
        const dpboot::PosteriorDraws draws =
            dpboot::run_posterior_bootstrap(subset, base.has_value() ? &*base : nullptr, *loss, run);
        const auto [lo, hi] = dpboot::credible_interval(draws, 0, opts.config.level);
        text += dpboot::format_double(alpha) + "," + std::to_string(n_sub) + "," + std::to_string(rep) + "," +
                dpboot::format_double(lo) + "," + dpboot::format_double(hi) + "," + dpboot::format_double(hi - lo) +
                "\n";
      }
    }
  }
  ensure_out_dir(opts.out);
  write_text(opts.out + "/sweep.csv", text);
  std::vector<std::string> inputs = {opts.labeled};
  if (!opts.imputed.empty()) inputs.push_back(opts.imputed);
  write_manifest(opts.out, "sweep", opts.config, inputs, {"sweep.csv"}, clock.seconds());
  return 0;
}

// --------------------------------------------------------------- calibrate

Eigen::VectorXd expected_labels(const dpboot::ImputedDataset& imp) {
  if (imp.has_probabilities()) {
    const auto& p = imp.probabilities();
    Eigen::VectorXd out(imp.n());
    if (p.cols() == 1) {
      out = p.col(0);
    } else {
      for (Eigen::Index i = 0; i < imp.n(); ++i) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < p.cols(); ++k) acc += static_cast<double>(k) * p(i, k);
        out(i) = acc;
      }
    }
    return out;
  }
  return imp.labels();
}

int cmd_calibrate(const CommonOpts& opts, const std::string& method, const std::vector<double>& alphas, int n_boot,
                  const std::vector<double>& bracket, const std::string& predictions_path) {
  const WallClock clock;
  const dpboot::LabeledDataset data = dpboot::load_labeled(opts.labeled);
  const auto loss = dpboot::make_loss(opts.config, data.d());
  const std::optional<dpboot::BaseMeasure> base = make_base(opts);
  if (!base.has_value()) throw ValidationError("calibrate requires --imputed and --base");

  dpboot::CalibrationResult result;
  std::vector<std::string> inputs = {opts.labeled, opts.imputed};
  if (method == "coverage") {
    if (alphas.empty()) throw ValidationError("--method coverage requires --alphas");
    result = dpboot::calibrate_alpha_coverage(data, *base, *loss, alphas, n_boot, opts.config.level, opts.config);
  } else if (method == "ppi-match") {
    if (predictions_path.empty()) throw ValidationError("--method ppi-match requires --predictions-on-labeled");
    if (bracket.size() != 2) throw ValidationError("--method ppi-match requires --bracket lo,hi");
    const Eigen::VectorXd predictions = dpboot::load_column(predictions_path, "f");
    inputs.push_back(predictions_path);
    const dpboot::ImputedDataset imp =
        dpboot::load_imputed(opts.imputed, dpboot::detect_imputed_schema(opts.imputed));
    const dpboot::PpiVariance ppi =
        dpboot::ppi_variance_mean(data.responses(), predictions, expected_labels(imp));
    result = dpboot::calibrate_alpha_ppi(data, *base, *loss, ppi, {bracket[0], bracket[1]}, opts.config);
  } else {
    throw ValidationError("--method must be 'coverage' or 'ppi-match'");
  }

  ensure_out_dir(opts.out);
  write_text(opts.out + "/calibration.json", dpboot::calibration_json(result));
  dpboot::write_calibration_csv(result, opts.out + "/calibration.csv");
  write_manifest(opts.out, "calibrate", opts.config, inputs, {"calibration.json", "calibration.csv"},
                 clock.seconds());
  return 0;
}

// ----------------------------------------------------------------- predict

int cmd_predict(const std::string& draws_path, const std::string& loss_id, int k, const std::string& x_path,
                const std::string& out, dpboot::RunConfig config) {
  const WallClock clock;
  if (loss_id != "softmax") throw ValidationError("predict supports only --loss softmax");
  const dpboot::RowMatrixXd theta = dpboot::load_draws_matrix(draws_path);
  const dpboot::RowMatrixXd x = dpboot::load_covariates(x_path);
  if (k < 2) throw ValidationError("--k must be >= 2");
  if (x.cols() < 1 || theta.cols() % (k - 1) != 0 || theta.cols() / (k - 1) != x.cols()) {
    throw ValidationError("draws have " + std::to_string(theta.cols()) + " parameters, which does not equal d*(K-1) for d=" +
                          std::to_string(x.cols()) + ", K=" + std::to_string(k));
  }
  const dpboot::SoftmaxLoss loss(x.cols(), k);
  dpboot::PosteriorDraws draws;
  draws.draws = theta;
  draws.converged.assign(static_cast<std::size_t>(theta.rows()), 1);

  std::string text = "class";
  for (int c = 1; c <= k; ++c) text += ",p" + std::to_string(c);
  text += "\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd probs = dpboot::posterior_predictive_probs(draws, loss, x.row(i));
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.size(); ++c) {
      if (probs(c) > probs(best)) best = c;
    }
    text += std::to_string(best);
    for (Eigen::Index c = 0; c < probs.size(); ++c) text += "," + dpboot::format_double(probs(c));
    text += "\n";
  }
  ensure_out_dir(out);
  write_text(out + "/predictions.csv", text);
  config.loss = "softmax";
  config.n_classes = k;
  write_manifest(out, "predict", config, {draws_path, x_path}, {"predictions.csv"}, clock.seconds());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior bootstrap for Dirichlet-process priors centered on model predictions"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOpts sample_opts;
  CLI::Option* sample_threads = nullptr;
  CLI::App* sample = app.add_subcommand("sample", "draw from the posterior and summarize");
  add_common_flags(sample, sample_opts, sample_threads);

  CommonOpts sweep_opts;
  CLI::Option* sweep_threads = nullptr;
  std::vector<double> sweep_alphas;
  std::vector<int> sweep_ns;
  int sweep_reps = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "credible-interval widths over alpha and n grids");
  add_common_flags(sweep, sweep_opts, sweep_threads);
  sweep->add_option("--alphas", sweep_alphas, "comma-separated alpha grid")->delimiter(',');
  sweep->add_option("--ns", sweep_ns, "comma-separated subsample sizes")->delimiter(',');
  sweep->add_option("--reps", sweep_reps, "replications per grid point");

  CommonOpts cal_opts;
  CLI::Option* cal_threads = nullptr;
  std::string cal_method;
  std::vector<double> cal_alphas;
  std::vector<double> cal_bracket;
  int cal_n_boot = 200;
  std::string cal_predictions;
  CLI::App* calibrate = app.add_subcommand("calibrate", "choose alpha by coverage or PPI variance matching");
  add_common_flags(calibrate, cal_opts, cal_threads);
  calibrate->add_option("--method", cal_method, "coverage or ppi-match")->required();
  calibrate->add_option("--alphas", cal_alphas, "comma-separated alpha grid (coverage)")->delimiter(',');
  calibrate->add_option("--n-boot", cal_n_boot, "resample count for the coverage estimate");
  calibrate->add_option("--bracket", cal_bracket, "lo,hi alpha bracket (ppi-match)")->delimiter(',');
  calibrate->add_option("--predictions-on-labeled", cal_predictions, "CSV with column f: predictions on labeled rows");

  std::string pred_draws;
  std::string pred_loss = "softmax";
  int pred_k = 2;
  std::string pred_x;
  std::string pred_out;
  CLI::App* predict = app.add_subcommand("predict", "majority-vote class predictions from saved draws");
  predict->add_option("--draws", pred_draws, "draws.csv from a sample run")->required();
  predict->add_option("--loss", pred_loss, "loss id (softmax)");
  predict->add_option("--k", pred_k, "number of classes")->required();
  predict->add_option("--x", pred_x, "covariate rows CSV (header x1,...,xd)")->required();
  predict->add_option("--out", pred_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sample->parsed()) {
      resolve_threads(sample_threads, sample_opts.config);
      return cmd_sample(sample_opts);
    }
    if (sweep->parsed()) {
      resolve_threads(sweep_threads, sweep_opts.config);
      return cmd_sweep(sweep_opts, sweep_alphas, sweep_ns, sweep_reps);
    }
    if (calibrate->parsed()) {
      resolve_threads(cal_threads, cal_opts.config);
      return cmd_calibrate(cal_opts, cal_method, cal_alphas, cal_n_boot, cal_bracket, cal_predictions);
    }
    if (predict->parsed()) {
      return cmd_predict(pred_draws, pred_loss, pred_k, pred_x, pred_out, dpboot::RunConfig{});
    }
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const dpboot::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dpboot::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
