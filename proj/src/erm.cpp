#include "dpboot/erm.hpp"

#include <cmath>
#include <deque>
#include <vector>

#include "dpboot/errors.hpp"

namespace dpboot {

double weighted_objective(const LossModel& loss, const Eigen::VectorXd& y, const RowMatrixXd& x,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
  if (theta.size() != loss.dim()) throw ValidationError("weighted_objective: theta has the wrong dimension");
  const double value = loss.batch_value(theta, y, x, w);
  if (!std::isfinite(value)) throw NumericError("weighted_objective: objective is not finite");
  return value;
}

namespace {

struct Objective {
  const LossModel& loss;
  const Eigen::VectorXd& y;
  const RowMatrixXd& x;
  const Eigen::VectorXd& w;

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    grad = loss.batch_gradient(theta, y, x, w);
    return loss.batch_value(theta, y, x, w);
  }
};

constexpr double kWolfeC1 = 1e-4;
constexpr double kWolfeC2 = 0.9;
constexpr std::size_t kLbfgsMemory = 10;

struct LinePoint {
  double step = 0.0;
  double f = 0.0;
  double df = 0.0;  // directional derivative
};

// Strong Wolfe zoom on the bracket [lo, hi]; f0/df0 are at step 0.
bool zoom(const Objective& obj, const Eigen::VectorXd& theta, const Eigen::VectorXd& dir, double f0, double df0,
          LinePoint lo, LinePoint hi, Eigen::VectorXd& theta_out, Eigen::VectorXd& grad_out, double& f_out) {
  Eigen::VectorXd trial_grad(theta.size());
  for (int it = 0; it < 40; ++it) {
    const double step = 0.5 * (lo.step + hi.step);
    const Eigen::VectorXd trial = theta + step * dir;
    const double f = obj(trial, trial_grad);
    const double df = trial_grad.dot(dir);
    if (!std::isfinite(f) || f > f0 + kWolfeC1 * step * df0 || f >= lo.f) {
      hi = {step, f, df};
    } else {
      if (std::abs(df) <= -kWolfeC2 * df0) {
        theta_out = trial;
        grad_out = trial_grad;
        f_out = f;
        return true;
      }
      if (df * (hi.step - lo.step) >= 0.0) hi = lo;
      lo = {step, f, df};
    }
    if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
  }
  // Best sufficient-decrease point found; curvature unmet.
  if (lo.step > 0.0 && std::isfinite(lo.f) && lo.f < f0) {
    theta_out = theta + lo.step * dir;
    f_out = obj(theta_out, grad_out);
    return true;
  }
  return false;
}

// Bracketing phase of the strong Wolfe search (initial step 1).
bool line_search(const Objective& obj, const Eigen::VectorXd& theta, const Eigen::VectorXd& dir, double f0,
                 double df0, Eigen::VectorXd& theta_out, Eigen::VectorXd& grad_out, double& f_out) {
  LinePoint prev{0.0, f0, df0};
  double step = 1.0;
  Eigen::VectorXd trial_grad(theta.size());
  for (int it = 0; it < 30; ++it) {
    const Eigen::VectorXd trial = theta + step * dir;
    const double f = obj(trial, trial_grad);
    const double df = std::isfinite(f) ? trial_grad.dot(dir) : 0.0;
    if (!std::isfinite(f) || f > f0 + kWolfeC1 * step * df0 || (it > 0 && f >= prev.f)) {
      return zoom(obj, theta, dir, f0, df0, prev, {step, f, df}, theta_out, grad_out, f_out);
    }
    if (std::abs(df) <= -kWolfeC2 * df0) {
      theta_out = trial;
      grad_out = trial_grad;
      f_out = f;
      return true;
    }
    if (df >= 0.0) {
      return zoom(obj, theta, dir, f0, df0, {step, f, df}, prev, theta_out, grad_out, f_out);
    }
    prev = {step, f, df};
    step *= 2.0;
  }
  return false;
}

ErmSolution lbfgs_minimize(const Objective& obj, const Eigen::VectorXd& start, const RunConfig& controls) {
  const Eigen::Index p = start.size();
  ErmSolution sol;
  sol.theta = start;
  Eigen::VectorXd grad(p);
  double f = obj(sol.theta, grad);
  if (!std::isfinite(f) || !grad.allFinite()) {
    throw NumericError("solve_weighted_erm: objective not finite at the starting point");
  }

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < controls.max_iter; ++iter) {
    if (grad.norm() <= controls.tol * std::max(1.0, std::abs(f))) {
      sol.converged = true;
      break;
    }
    sol.iterations = iter + 1;

    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q.noalias() -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const Eigen::VectorXd& s = s_hist.back();
      const Eigen::VectorXd& yv = y_hist.back();
      q *= s.dot(yv) / yv.squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q.noalias() += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double df0 = grad.dot(dir);
    if (!(df0 < 0.0)) {  // not a descent direction; reset to steepest descent
      dir = -grad;
      df0 = -grad.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    Eigen::VectorXd next_theta(p);
    Eigen::VectorXd next_grad(p);
    double next_f = 0.0;
    if (!line_search(obj, sol.theta, dir, f, df0, next_theta, next_grad, next_f)) {
      break;  // no acceptable step; report non-convergence below
    }

    Eigen::VectorXd s = next_theta - sol.theta;
    Eigen::VectorXd yv = next_grad - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kLbfgsMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    sol.theta = std::move(next_theta);
    grad = std::move(next_grad);
    f = next_f;
  }
  if (!sol.converged) {
    sol.converged = grad.norm() <= controls.tol * std::max(1.0, std::abs(f));
  }
  sol.objective = f;
  return sol;
}

}  // namespace

ErmSolution solve_weighted_erm(const LossModel& loss, const Eigen::VectorXd& y, const RowMatrixXd& x,
                               const Eigen::VectorXd& w, const RunConfig& controls,
                               const Eigen::VectorXd* warm_start) {
  if (y.size() != x.rows() || y.size() != w.size()) {
    throw ValidationError("solve_weighted_erm: responses, covariates, and weights must have matching row counts");
  }
  if (y.size() == 0) throw ValidationError("solve_weighted_erm: no rows");
  double w_sum = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < 0.0 || !std::isfinite(w(i))) throw ValidationError("solve_weighted_erm: weights must be finite and >= 0");
    w_sum += w(i);
  }
  if (!(w_sum > 0.0)) throw ValidationError("solve_weighted_erm: needs at least one strictly positive weight");
  loss.validate_responses(y);

  // Scale equivariance: the argmin is computed under unit-sum weights.
  const Eigen::VectorXd w_norm = w / w_sum;

  if (auto closed = loss.closed_form(y, x, w_norm)) {
    ErmSolution sol;
    sol.theta = std::move(closed->theta);
    sol.ridge_fallback = closed->ridge_fallback;
    sol.converged = true;
    sol.iterations = 0;
    sol.objective = weighted_objective(loss, y, x, w, sol.theta);
    return sol;
  }

  Eigen::VectorXd start = Eigen::VectorXd::Zero(loss.dim());
  if (warm_start != nullptr) {
    if (warm_start->size() != loss.dim()) throw ValidationError("solve_weighted_erm: warm start has wrong dimension");
    start = *warm_start;
  }

  const Objective obj{loss, y, x, w_norm};
  ErmSolution sol = lbfgs_minimize(obj, start, controls);
  sol.objective = weighted_objective(loss, y, x, w, sol.theta);
  return sol;
}

}  // namespace dpboot
