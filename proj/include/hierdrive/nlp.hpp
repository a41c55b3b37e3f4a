#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "hierdrive/common.hpp"

namespace hierdrive {

// Dense constrained NLP: min f(w) s.t. g(w) = 0, h(w) <= 0, lower <= w <= upper.
// Callbacks fill derivative outputs only when the pointer is non-null, so
// value-only evaluations stay cheap inside line searches.
struct NlpProblem {
  int dim = 0;
  int n_eq = 0;
  int n_ineq = 0;
  // Returns f(w); writes the gradient into *grad when grad != nullptr.
  std::function<double(const Eigen::VectorXd& w, Eigen::VectorXd* grad)> objective;
  // Writes g(w) into values (size n_eq); writes the n_eq x dim Jacobian when jac != nullptr.
  std::function<void(const Eigen::VectorXd& w, Eigen::VectorXd& values,
                     Eigen::MatrixXd* jac)>
      equalities;
  // Writes h(w) into values (size n_ineq); Jacobian as above.
  std::function<void(const Eigen::VectorXd& w, Eigen::VectorXd& values,
                     Eigen::MatrixXd* jac)>
      inequalities;
  Eigen::VectorXd lower;  // size dim; -inf entries allowed
  Eigen::VectorXd upper;
};

struct SolveBudget {
  int max_iterations = 6000;  // accepted inner steps across all outer rounds
  double max_wall_time = std::numeric_limits<double>::infinity();  // seconds
};

struct SolveReport {
  Eigen::VectorXd solution;
  double objective_value = 0.0;
  double max_equality_violation = 0.0;
  double max_inequality_violation = 0.0;
  double stationarity = 0.0;  // projected-gradient norm of the Lagrangian
  int iterations = 0;
  int outer_iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
};

struct SolverOptions {
  double tol_feasibility = 1e-4;
  double tol_stationarity = 1e-4;
  double penalty_initial = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e8;
  int max_outer = 30;
  int lbfgs_memory = 8;
  int nonmonotone_window = 8;
  int max_line_search = 40;
};

namespace detail {

inline void project_into(const NlpProblem& p, Eigen::VectorXd& w) {
  for (int i = 0; i < p.dim; ++i) {
    w[i] = std::min(p.upper[i], std::max(p.lower[i], w[i]));
  }
}

inline double projected_gradient_norm(const NlpProblem& p,
                                      const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& grad) {
  double norm = 0.0;
  for (int i = 0; i < p.dim; ++i) {
    const double step = std::min(p.upper[i], std::max(p.lower[i], w[i] - grad[i]));
    norm = std::max(norm, std::abs(step - w[i]));
  }
  return norm;
}

// One evaluation point of the augmented Lagrangian and its ingredients.
struct AlEval {
  double f = 0.0;
  double al = 0.0;
  Eigen::VectorXd g;   // equality values
  Eigen::VectorXd h;   // inequality values
  Eigen::VectorXd grad_f;
  Eigen::MatrixXd jac_g;
  Eigen::MatrixXd jac_h;
  Eigen::VectorXd grad_al;

  double eq_violation() const { return g.size() ? g.cwiseAbs().maxCoeff() : 0.0; }
  double ineq_violation() const {
    return h.size() ? std::max(0.0, h.maxCoeff()) : 0.0;
  }
  bool values_finite() const {
    return is_finite(f) && (!g.size() || g.allFinite()) &&
           (!h.size() || h.allFinite());
  }
};

inline void eval_al(const NlpProblem& p, const Eigen::VectorXd& w,
                    const Eigen::VectorXd& lambda, const Eigen::VectorXd& sigma,
                    double mu, bool with_grad, AlEval& out) {
  out.f = p.objective(w, with_grad ? &out.grad_f : nullptr);
  if (p.n_eq > 0) {
    p.equalities(w, out.g, with_grad ? &out.jac_g : nullptr);
  } else {
    out.g.resize(0);
  }
  if (p.n_ineq > 0) {
    p.inequalities(w, out.h, with_grad ? &out.jac_h : nullptr);
  } else {
    out.h.resize(0);
  }
  double al = out.f;
  if (p.n_eq > 0) {
    al += lambda.dot(out.g) + 0.5 * mu * out.g.squaredNorm();
  }
  for (int i = 0; i < p.n_ineq; ++i) {
    const double t = sigma[i] + mu * out.h[i];
    if (t > 0.0) al += (t * t - sigma[i] * sigma[i]) / (2.0 * mu);
  }
  out.al = al;
  if (with_grad) {
    out.grad_al = out.grad_f;
    if (p.n_eq > 0) {
      out.grad_al.noalias() += out.jac_g.transpose() * (lambda + mu * out.g);
    }
    if (p.n_ineq > 0) {
      Eigen::VectorXd active = (sigma + mu * out.h).cwiseMax(0.0);
      out.grad_al.noalias() += out.jac_h.transpose() * active;
    }
  }
}

// Tracks the best iterate seen: feasible-enough with lowest objective,
// falling back to lowest constraint violation when nothing is feasible.
struct BestIterate {
  Eigen::VectorXd w;
  double f = std::numeric_limits<double>::infinity();
  double violation = std::numeric_limits<double>::infinity();
  bool have_feasible = false;

  void consider(const Eigen::VectorXd& candidate, double f_cand, double viol,
                double tol) {
    if (viol <= tol) {
      if (!have_feasible || f_cand < f) {
        w = candidate;
        f = f_cand;
        violation = viol;
        have_feasible = true;
      }
    } else if (!have_feasible && viol < violation) {
      w = candidate;
      f = f_cand;
      violation = viol;
    }
  }
};

struct LbfgsMemory {
  std::vector<Eigen::VectorXd> s, y;
  std::vector<double> rho;
  double gamma = 1.0;
  int cap = 8;

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
    gamma = 1.0;
  }
  void push(const Eigen::VectorXd& si, const Eigen::VectorXd& yi) {
    const double sy = si.dot(yi);
    if (sy <= 1e-10 * si.norm() * yi.norm()) return;  // curvature too weak
    if (static_cast<int>(s.size()) == cap) {
      s.erase(s.begin());
      y.erase(y.begin());
      rho.erase(rho.begin());
    }
    s.push_back(si);
    y.push_back(yi);
    rho.push_back(1.0 / sy);
    gamma = std::clamp(sy / yi.squaredNorm(), 1e-10, 1e10);
  }
  Eigen::VectorXd direction(const Eigen::VectorXd& grad) const {
    Eigen::VectorXd q = grad;
    const int m = static_cast<int>(s.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho[i] * s[i].dot(q);
      q -= alpha[i] * y[i];
    }
    q *= gamma;
    for (int i = 0; i < m; ++i) {
      const double beta = rho[i] * y[i].dot(q);
      q += (alpha[i] - beta) * s[i];
    }
    return -q;
  }
};

}  // namespace detail

// Augmented-Lagrangian solve with a projected L-BFGS inner loop. Fully
// deterministic: identical inputs give identical outputs on one platform.
inline SolveReport solve(const NlpProblem& problem, Eigen::VectorXd warm_start,
                         const SolveBudget& budget = {},
                         const SolverOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  require(problem.dim > 0, "solve: problem.dim must be positive");
  require(static_cast<int>(warm_start.size()) == problem.dim,
          "solve: warm start length != problem dim");
  require(problem.lower.size() == problem.dim && problem.upper.size() == problem.dim,
          "solve: bounds length != problem dim");
  for (int i = 0; i < problem.dim; ++i) {
    require(problem.lower[i] <= problem.upper[i], "solve: lower bound above upper");
  }

  detail::project_into(problem, warm_start);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(problem.n_eq);
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(problem.n_ineq);
  double mu = opts.penalty_initial;

  detail::AlEval cur;
  detail::eval_al(problem, warm_start, lambda, sigma, mu, true, cur);
  require(cur.values_finite(),
          "solve: objective/constraints non-finite at the warm start");
  require(cur.grad_f.allFinite() &&
              (!cur.jac_g.size() || cur.jac_g.allFinite()) &&
              (!cur.jac_h.size() || cur.jac_h.allFinite()),
          "solve: derivatives non-finite at the warm start");

  const double feas_target = 0.5 * opts.tol_feasibility;
  const double stat_target = 0.5 * opts.tol_stationarity;

  detail::BestIterate best;
  best.consider(warm_start, cur.f,
                std::max(cur.eq_violation(), cur.ineq_violation()),
                opts.tol_feasibility);

  Eigen::VectorXd w = warm_start;
  detail::LbfgsMemory mem;
  mem.cap = opts.lbfgs_memory;
  detail::AlEval trial;

  int total_iters = 0;
  int outer = 0;
  double v_prev = std::numeric_limits<double>::infinity();
  bool out_of_budget = false;

  for (outer = 0; outer < opts.max_outer; ++outer) {
    const double tol_inner =
        std::max(stat_target, 1e-2 * std::pow(0.2, outer));
    mem.clear();
    std::deque<double> recent{cur.al};

    // Inner loop: minimize the AL over the box.
    while (true) {
      if (total_iters >= budget.max_iterations || elapsed() > budget.max_wall_time) {
        out_of_budget = true;
        break;
      }
      const double pg = detail::projected_gradient_norm(problem, w, cur.grad_al);
      if (pg <= tol_inner) break;

      // Mask gradient components that push against an active bound.
      Eigen::VectorXd masked = cur.grad_al;
      for (int i = 0; i < problem.dim; ++i) {
        const bool at_lo = w[i] <= problem.lower[i] + 1e-12 && masked[i] > 0.0;
        const bool at_hi = w[i] >= problem.upper[i] - 1e-12 && masked[i] < 0.0;
        if (at_lo || at_hi) masked[i] = 0.0;
      }

      Eigen::VectorXd d = mem.direction(masked);
      if (!d.allFinite() || d.dot(cur.grad_al) > 0.0) {
        mem.clear();
        d = -masked / std::max(1.0, masked.norm());
      }

      const double ref = *std::max_element(recent.begin(), recent.end());
      double alpha = 1.0;
      bool accepted = false;
      bool retried_steepest = false;
      for (int ls = 0; ls < opts.max_line_search; ++ls) {
        Eigen::VectorXd w_trial = w + alpha * d;
        detail::project_into(problem, w_trial);
        const double step_norm = (w_trial - w).lpNorm<Eigen::Infinity>();
        if (step_norm < 1e-15) {
          if (!retried_steepest && !mem.s.empty()) {
            mem.clear();
            d = -masked / std::max(1.0, masked.norm());
            alpha = 1.0;
            retried_steepest = true;
            continue;
          }
          break;
        }
        detail::eval_al(problem, w_trial, lambda, sigma, mu, false, trial);
        const double decrease = cur.grad_al.dot(w_trial - w);
        if (trial.values_finite() && trial.al <= ref + 1e-4 * decrease) {
          detail::eval_al(problem, w_trial, lambda, sigma, mu, true, trial);
          if (trial.grad_al.allFinite()) {
            const Eigen::VectorXd s_vec = w_trial - w;
            const Eigen::VectorXd y_vec = trial.grad_al - cur.grad_al;
            mem.push(s_vec, y_vec);
            w = w_trial;
            std::swap(cur, trial);
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
        if (alpha < 1e-14 && !retried_steepest && !mem.s.empty()) {
          mem.clear();
          d = -masked / std::max(1.0, masked.norm());
          alpha = 1.0;
          retried_steepest = true;
        }
      }
      if (!accepted) break;  // stalled on this subproblem

      ++total_iters;
      recent.push_back(cur.al);
      if (static_cast<int>(recent.size()) > opts.nonmonotone_window) {
        recent.pop_front();
      }
      best.consider(w, cur.f, std::max(cur.eq_violation(), cur.ineq_violation()),
                    opts.tol_feasibility);
    }

    const double true_eq = cur.eq_violation();
    const double true_ineq = cur.ineq_violation();
    const double pg = detail::projected_gradient_norm(problem, w, cur.grad_al);
    if (true_eq <= feas_target && true_ineq <= feas_target && pg <= stat_target) {
      break;
    }
    if (out_of_budget) break;

    // Hestenes-Powell multiplier updates.
    double v_now = 0.0;
    if (problem.n_eq > 0) v_now = cur.g.cwiseAbs().maxCoeff();
    for (int i = 0; i < problem.n_ineq; ++i) {
      v_now = std::max(v_now, std::abs(std::max(cur.h[i], -sigma[i] / mu)));
    }
    if (problem.n_eq > 0) lambda += mu * cur.g;
    if (problem.n_ineq > 0) sigma = (sigma + mu * cur.h).cwiseMax(0.0);
    if (v_now > 0.25 * v_prev) {
      mu = std::min(mu * opts.penalty_growth, opts.penalty_max);
    }
    v_prev = v_now;

    // Multipliers changed; refresh the AL value/gradient at the current point.
    detail::eval_al(problem, w, lambda, sigma, mu, true, cur);
  }

  // Prefer the final iterate when it is feasible and at least as good as any
  // earlier feasible candidate; otherwise fall back to the tracked best.
  const double final_viol = std::max(cur.eq_violation(), cur.ineq_violation());
  Eigen::VectorXd returned = w;
  if (final_viol > opts.tol_feasibility ||
      (best.have_feasible && best.f < cur.f - 1e-9)) {
    if (best.w.size() == problem.dim) returned = best.w;
  }

  detail::AlEval fin;
  detail::eval_al(problem, returned, lambda, sigma, mu, true, fin);
  Eigen::VectorXd lagrangian_grad = fin.grad_f;
  if (problem.n_eq > 0) lagrangian_grad.noalias() += fin.jac_g.transpose() * lambda;
  if (problem.n_ineq > 0) lagrangian_grad.noalias() += fin.jac_h.transpose() * sigma;

  SolveReport report;
  report.solution = returned;
  report.objective_value = fin.f;
  report.max_equality_violation = fin.eq_violation();
  report.max_inequality_violation = fin.ineq_violation();
  report.stationarity =
      std::min(detail::projected_gradient_norm(problem, returned, lagrangian_grad),
               detail::projected_gradient_norm(problem, returned, fin.grad_al));
  report.iterations = total_iters;
  report.outer_iterations = outer + 1;
  report.converged = report.max_equality_violation <= opts.tol_feasibility &&
                     report.max_inequality_violation <= opts.tol_feasibility &&
                     report.stationarity <= opts.tol_stationarity;
  report.wall_time = elapsed();
  return report;
}

// Compares analytic gradient and Jacobians against central finite
// differences; returns the worst relative error over all entries.
inline double check_gradients(const NlpProblem& problem,
                              const Eigen::VectorXd& point, double step) {
  require(step > 0.0, "check_gradients: step must be positive");
  require(static_cast<int>(point.size()) == problem.dim,
          "check_gradients: point length != problem dim");

  Eigen::VectorXd grad_f;
  const double f0 = problem.objective(point, &grad_f);
  (void)f0;
  Eigen::VectorXd g0, h0;
  Eigen::MatrixXd jac_g, jac_h;
  if (problem.n_eq > 0) problem.equalities(point, g0, &jac_g);
  if (problem.n_ineq > 0) problem.inequalities(point, h0, &jac_h);

  const auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  double worst = 0.0;
  Eigen::VectorXd wp = point, wm = point;
  Eigen::VectorXd gp, gm, hp, hm;
  for (int j = 0; j < problem.dim; ++j) {
    wp[j] = point[j] + step;
    wm[j] = point[j] - step;
    const double fp = problem.objective(wp, nullptr);
    const double fm = problem.objective(wm, nullptr);
    worst = std::max(worst, rel(grad_f[j], (fp - fm) / (2.0 * step)));
    if (problem.n_eq > 0) {
      problem.equalities(wp, gp, nullptr);
      problem.equalities(wm, gm, nullptr);
      for (int i = 0; i < problem.n_eq; ++i) {
        worst = std::max(worst, rel(jac_g(i, j), (gp[i] - gm[i]) / (2.0 * step)));
      }
    }
    if (problem.n_ineq > 0) {
      problem.inequalities(wp, hp, nullptr);
      problem.inequalities(wm, hm, nullptr);
      for (int i = 0; i < problem.n_ineq; ++i) {
        worst = std::max(worst, rel(jac_h(i, j), (hp[i] - hm[i]) / (2.0 * step)));
      }
    }
    wp[j] = point[j];
    wm[j] = point[j];
  }
  return worst;
}

}  // namespace hierdrive
