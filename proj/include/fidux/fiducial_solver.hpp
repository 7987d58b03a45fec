#pragma once

#include "risk_moments.hpp"
#include "survival_data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fidux {

/// The fiducial constraint system in beta for a fixed draw of U*:
///
///   g_h(beta) = beta'x_{i_h} - log sum_{j in R_h} exp(beta'x_j) - log_u[h] >= 0,  h = 1..m
///
/// plus the box |beta_j| <= box[j]. Tied failures use their shared risk set.
/// Holds a non-owning pointer to the risk structure, which must outlive it.
class FeasibilityProblem {
public:
  FeasibilityProblem(const RiskStructure& risk, Eigen::VectorXd log_u, Eigen::VectorXd box)
      : risk_(&risk), log_u_(std::move(log_u)), box_(std::move(box)) {
    if (static_cast<std::size_t>(log_u_.size()) != risk.m())
      throw std::invalid_argument("log_u must have one entry per failure");
    if (static_cast<std::size_t>(box_.size()) != risk.p()) throw std::invalid_argument("box must have one entry per covariate");
    if ((log_u_.array() > 0.0).any()) throw std::invalid_argument("log_u entries must be <= 0");
    if (!(box_.array() > 0.0).all()) throw std::invalid_argument("box bounds must be positive");
  }

  /// Box of half-width bound on the standardized-covariate scale, i.e.
  /// |beta_j| <= bound / sd(x_j).
  static Eigen::VectorXd standardized_box(const RiskStructure& risk, double bound) {
    return Eigen::VectorXd(bound * covariate_scale(risk.x).cwiseInverse());
  }

  const RiskStructure& risk() const { return *risk_; }
  const Eigen::VectorXd& log_u() const { return log_u_; }
  Eigen::VectorXd& log_u() { return log_u_; }
  const Eigen::VectorXd& box() const { return box_; }

  /// g_h(beta) for every h.
  Eigen::VectorXd slacks(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd eta = risk_->x * beta;
    const auto mom = risk_moments(*risk_, eta, MomentOrder::value);
    Eigen::VectorXd g(log_u_.size());
    for (std::size_t h = 0; h < risk_->m(); ++h)
      g(static_cast<Eigen::Index>(h)) = eta(static_cast<Eigen::Index>(risk_->failing_order[h])) -
                                        mom.log_norm[risk_->group_of_failure[h]] - log_u_(static_cast<Eigen::Index>(h));
    return g;
  }

  /// log q_h(beta) for every failure h.
  Eigen::VectorXd log_q(const Eigen::VectorXd& beta) const { return slacks(beta) + log_u_; }

private:
  const RiskStructure* risk_;
  Eigen::VectorXd log_u_;
  Eigen::VectorXd box_;
};

enum class SolveStatus { optimal, box_active, infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::box_active: return "box_active";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

struct SolveReport {
  Eigen::VectorXd argmax;
  double objective = -std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::infeasible;
  double kkt_residual = std::numeric_limits<double>::infinity();
  int newton_steps = 0;
};

struct SolverOptions {
  double feasibility_tol = 1e-7;
  double gap_tol = 1e-8;
  double mu = 20.0;            // barrier parameter growth per outer step
  double t_initial = 1.0;
  double t_start_max = 1e8;    // upper clamp for the warm-start weight
  int max_newton_per_center = 100;
  double center_tol = 1e-9;    // half squared Newton decrement
  double box_active_rel = 1e-6;
};

struct FeasibilityCheck {
  bool feasible = false;
  double max_violation = 0.0;
  std::optional<std::size_t> worst;  // failure index h, or nullopt for a box violation
};

inline FeasibilityCheck check_feasible(const Eigen::VectorXd& beta, const FeasibilityProblem& problem, double tol = 1e-7) {
  FeasibilityCheck out;
  const Eigen::VectorXd g = problem.slacks(beta);
  for (Eigen::Index h = 0; h < g.size(); ++h) {
    const double v = std::isnan(g(h)) ? std::numeric_limits<double>::infinity() : -g(h);
    if (v > out.max_violation) {
      out.max_violation = v;
      out.worst = static_cast<std::size_t>(h);
    }
  }
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = std::abs(beta(j)) - problem.box()(j);
    if (v > out.max_violation) {
      out.max_violation = v;
      out.worst.reset();
    }
  }
  out.feasible = out.max_violation <= tol;
  return out;
}

namespace detail {

// Objective maximized by the barrier method: either linear c'beta, or
// log q_k(beta) for one failure k.
struct Objective {
  std::optional<Eigen::VectorXd> linear;
  std::optional<std::size_t> log_q_of;
};

struct BarrierEval {
  double phi = 0.0;
  double objective = 0.0;
  double min_slack = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Log-barrier model over z = beta (main phase) or z = (beta, s) (phase one,
// maximizing the common margin s of the included constraints).
class BarrierModel {
public:
  BarrierModel(const FeasibilityProblem& prob, std::vector<std::size_t> included, Objective obj, bool phase_one)
      : prob_(prob), included_(std::move(included)), obj_(std::move(obj)), phase_one_(phase_one) {}

  Eigen::Index dim() const { return static_cast<Eigen::Index>(prob_.risk().p()) + (phase_one_ ? 1 : 0); }
  double barrier_terms() const { return static_cast<double>(included_.size() + 2 * prob_.risk().p()); }

  // Returns false outside the barrier domain.
  bool eval(const Eigen::VectorXd& z, double t, bool derivs, BarrierEval& out) const {
    const RiskStructure& rs = prob_.risk();
    const auto p = static_cast<Eigen::Index>(rs.p());
    const Eigen::VectorXd beta = z.head(p);
    const double margin = phase_one_ ? z(p) : 0.0;
    const Eigen::VectorXd& box = prob_.box();

    double phi = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double up = box(j) - beta(j), lo = box(j) + beta(j);
      if (!(up > 0.0) || !(lo > 0.0)) return false;
      phi -= std::log(up) + std::log(lo);
    }

    const bool need_moments = !included_.empty() || obj_.log_q_of.has_value();
    const Eigen::VectorXd eta = rs.x * beta;
    RiskMoments mom;
    if (need_moments) mom = risk_moments(rs, eta, derivs ? MomentOrder::hessian : MomentOrder::value);

    const auto slack_of = [&](std::size_t h) {
      return eta(static_cast<Eigen::Index>(rs.failing_order[h])) - mom.log_norm[rs.group_of_failure[h]] -
             prob_.log_u()(static_cast<Eigen::Index>(h));
    };

    double min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t h : included_) {
      const double g = slack_of(h) - margin;
      if (!(g > 0.0)) return false;
      min_slack = std::min(min_slack, g);
      phi -= std::log(g);
    }

    double f = 0.0;
    if (phase_one_) {
      f = margin;
    } else if (obj_.linear) {
      f = obj_.linear->dot(beta);
    } else if (obj_.log_q_of) {
      f = slack_of(*obj_.log_q_of) + prob_.log_u()(static_cast<Eigen::Index>(*obj_.log_q_of));
    }
    phi -= t * f;
    if (!std::isfinite(phi)) return false;
    out.phi = phi;
    out.objective = f;
    out.min_slack = min_slack;
    if (!derivs) return true;

    const Eigen::Index d = dim();
    out.grad = Eigen::VectorXd::Zero(d);
    out.hess = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double up = box(j) - beta(j), lo = box(j) + beta(j);
      out.grad(j) += 1.0 / up - 1.0 / lo;
      out.hess(j, j) += 1.0 / (up * up) + 1.0 / (lo * lo);
    }
    Eigen::VectorXd a(d);
    for (std::size_t h : included_) {
      const auto k = static_cast<Eigen::Index>(rs.group_of_failure[h]);
      const double g = slack_of(h) - margin;
      a.head(p) = rs.x.row(static_cast<Eigen::Index>(rs.failing_order[h])).transpose() - mom.mean.col(k);
      if (phase_one_) a(p) = -1.0;
      out.grad -= a / g;
      out.hess.noalias() += (a * a.transpose()) / (g * g);
      out.hess.topLeftCorner(p, p) += mom.cov[static_cast<std::size_t>(k)] / g;
    }
    if (phase_one_) {
      out.grad(p) -= t;
    } else if (obj_.linear) {
      out.grad.head(p) -= t * *obj_.linear;
    } else if (obj_.log_q_of) {
      const std::size_t h = *obj_.log_q_of;
      const auto k = static_cast<Eigen::Index>(rs.group_of_failure[h]);
      out.grad.head(p) -= t * (rs.x.row(static_cast<Eigen::Index>(rs.failing_order[h])).transpose() - mom.mean.col(k));
      out.hess.topLeftCorner(p, p) += t * mom.cov[static_cast<std::size_t>(k)];
    }
    return true;
  }

private:
  const FeasibilityProblem& prob_;
  std::vector<std::size_t> included_;
  Objective obj_;
  bool phase_one_;
};

struct PathResult {
  Eigen::VectorXd z;
  BarrierEval last;
  double t = 0.0;
  int newton_steps = 0;
  bool stopped_early = false;
};

// Damped Newton centering along the central path, t <- mu * t until the
// duality-gap bound (#barrier terms)/t drops below gap_tol. `stop` may end
// the run early after any Newton step.
template <class StopFn>
PathResult follow_path(const BarrierModel& model, Eigen::VectorXd z, const SolverOptions& opts, StopFn stop, double t0) {
  PathResult res;
  double t = t0;
  BarrierEval cur, trial;
  if (!model.eval(z, t, true, cur)) throw NumericalError("barrier start point outside the domain");
  const double terms = model.barrier_terms();

  for (int outer = 0; outer < 200; ++outer) {
    for (int it = 0; it < opts.max_newton_per_center; ++it) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.hess);
      Eigen::VectorXd step = -ldlt.solve(cur.grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        const double jitter = 1e-12 * std::max(1.0, cur.hess.diagonal().cwiseAbs().maxCoeff());
        step = -(cur.hess + jitter * Eigen::MatrixXd::Identity(cur.hess.rows(), cur.hess.cols())).ldlt().solve(cur.grad);
      }
      const double slope = cur.grad.dot(step);
      // Below the rounding level of phi the line search cannot make progress.
      const double resolution = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cur.phi);
      if (!(slope < 0.0) || -slope / 2.0 <= std::max(opts.center_tol, resolution)) break;

      double alpha = 1.0;
      bool accepted = false;
      while (alpha > 1e-14) {
        const Eigen::VectorXd cand = z + alpha * step;
        if (model.eval(cand, t, false, trial) && trial.phi <= cur.phi + 0.25 * alpha * slope) {
          z = cand;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // stalled at floating-point resolution
      model.eval(z, t, true, cur);
      ++res.newton_steps;
      if (stop(z, cur)) {
        res.z = z;
        res.last = cur;
        res.t = t;
        res.stopped_early = true;
        return res;
      }
    }
    if (terms / t <= opts.gap_tol) break;
    t *= opts.mu;
    model.eval(z, t, true, cur);
  }
  res.z = z;
  res.last = cur;
  res.t = t;
  return res;
}

// Returns a strictly interior starting point for the included constraints,
// or nullopt if their intersection with the box has empty interior.
inline std::optional<Eigen::VectorXd> interior_start(const FeasibilityProblem& prob, const std::vector<std::size_t>& included,
                                                     Eigen::VectorXd beta, const SolverOptions& opts, int& steps) {
  const Eigen::VectorXd& box = prob.box();
  beta = beta.cwiseMax(-0.999 * box).cwiseMin(0.999 * box);
  if (included.empty()) return beta;

  const Eigen::VectorXd g = prob.slacks(beta);
  double min_g = std::numeric_limits<double>::infinity();
  for (std::size_t h : included) min_g = std::min(min_g, g(static_cast<Eigen::Index>(h)));
  if (min_g > 1e-12) return beta;

  // Phase one: maximize the common margin s with g_h(beta) - s > 0.
  const auto p = beta.size();
  Eigen::VectorXd z(p + 1);
  z.head(p) = beta;
  z(p) = min_g - 1.0;
  BarrierModel model(prob, included, Objective{}, true);
  const double target = 1e-4;
  auto run = follow_path(
      model, z, opts, [&](const Eigen::VectorXd& zz, const BarrierEval&) { return zz(p) >= target; }, opts.t_initial);
  steps += run.newton_steps;
  if (run.z(p) > 0.0) return Eigen::VectorXd(run.z.head(p));
  return std::nullopt;
}

// Objective weight at which the start point is closest to centered, in the
// local norm of the barrier Hessian; a warm start near the previous optimum
// then skips most of the path. Clamped to [t_initial, t_start_max].
inline double start_weight(const BarrierModel& model, const Eigen::VectorXd& z, const SolverOptions& opts) {
  BarrierEval bar, full;
  if (!model.eval(z, 0.0, true, bar) || !model.eval(z, 1.0, true, full)) return opts.t_initial;
  const Eigen::VectorXd c = full.grad - bar.grad;  // minus objective gradient
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(bar.hess);
  const Eigen::VectorXd hc = ldlt.solve(c);
  const double denom = c.dot(hc);
  if (ldlt.info() != Eigen::Success || !(denom > 0.0)) return opts.t_initial;
  const double t = -bar.grad.dot(hc) / denom;
  return std::isfinite(t) ? std::clamp(t, opts.t_initial, opts.t_start_max) : opts.t_initial;
}

inline SolveReport solve(const FeasibilityProblem& prob, std::vector<std::size_t> included, Objective obj,
                         const Eigen::VectorXd& warm_start, const SolverOptions& opts) {
  SolveReport rep;
  const auto start = interior_start(prob, included, warm_start, opts, rep.newton_steps);
  if (!start) {
    rep.argmax = warm_start;
    rep.status = SolveStatus::infeasible;
    return rep;
  }
  BarrierModel model(prob, std::move(included), std::move(obj), false);
  auto run = follow_path(
      model, *start, opts, [](const Eigen::VectorXd&, const BarrierEval&) { return false; }, start_weight(model, *start, opts));
  rep.newton_steps += run.newton_steps;
  rep.argmax = run.z;
  rep.objective = run.last.objective;
  rep.kkt_residual = std::max(run.last.grad.norm() / run.t, model.barrier_terms() / run.t);

  const Eigen::VectorXd& box = prob.box();
  const double box_gap = ((box - rep.argmax.cwiseAbs()).cwiseQuotient(box)).minCoeff();
  rep.status = box_gap <= opts.box_active_rel ? SolveStatus::box_active : SolveStatus::optimal;
  return rep;
}

// When log q_k still rises toward a box face, the rise can fall below the
// gap tolerance and the path stops short of the face. Move such coordinates
// onto the face if the other constraints still hold and log q_k does not drop.
inline void snap_to_box(const FeasibilityProblem& prob, std::size_t k, SolveReport& rep) {
  const RiskStructure& rs = prob.risk();
  const auto kk = static_cast<Eigen::Index>(k);
  const auto i = static_cast<Eigen::Index>(rs.failing_order[k]);
  const auto g = static_cast<Eigen::Index>(rs.group_of_failure[k]);
  const Eigen::VectorXd eta = rs.x * rep.argmax;
  const auto mom = risk_moments(rs, eta, MomentOrder::gradient);
  for (Eigen::Index j = 0; j < rep.argmax.size(); ++j) {
    const double slope = rs.x(i, j) - mom.mean(j, g);
    if (slope == 0.0) continue;
    Eigen::VectorXd cand = rep.argmax;
    cand(j) = slope > 0.0 ? prob.box()(j) : -prob.box()(j);
    const Eigen::VectorXd slack = prob.slacks(cand);
    bool ok = true;
    for (Eigen::Index h = 0; h < slack.size() && ok; ++h) ok = h == kk || slack(h) >= 0.0;
    const double value = slack(kk) + prob.log_u()(kk);
    if (ok && value >= rep.objective) {
      rep.argmax = cand;
      rep.objective = value;
      rep.status = SolveStatus::box_active;
    }
  }
}

}  // namespace detail

/// Maximizes log q_k(beta) subject to the other m - 1 constraints and the
/// box; q_k* = exp(objective). The warm start should satisfy the other
/// constraints (a phase-one search recovers an interior point otherwise).
inline SolveReport solve_qk_star(const FeasibilityProblem& problem, std::size_t k, const Eigen::VectorXd& warm_start,
                                 const SolverOptions& opts = {}) {
  const std::size_t m = problem.risk().m();
  if (k >= m) throw std::out_of_range("failure index out of range");
  std::vector<std::size_t> included;
  included.reserve(m - 1);
  for (std::size_t h = 0; h < m; ++h)
    if (h != k) included.push_back(h);
  detail::Objective obj;
  obj.log_q_of = k;
  auto rep = detail::solve(problem, std::move(included), std::move(obj), warm_start, opts);
  if (rep.status == SolveStatus::infeasible) return rep;
  detail::snap_to_box(problem, k, rep);
  rep.objective = std::min(rep.objective, 0.0);
  return rep;
}

inline SolveReport solve_qk_star(const FeasibilityProblem& problem, std::size_t k, const SolverOptions& opts = {}) {
  return solve_qk_star(problem, k, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.risk().p())), opts);
}

/// Maximizes w'beta over all m constraints and the box.
inline SolveReport solve_representative(const FeasibilityProblem& problem, const Eigen::VectorXd& w,
                                        const Eigen::VectorXd& warm_start, const SolverOptions& opts = {}) {
  if (static_cast<std::size_t>(w.size()) != problem.risk().p()) throw std::invalid_argument("direction dimension mismatch");
  std::vector<std::size_t> included(problem.risk().m());
  for (std::size_t h = 0; h < included.size(); ++h) included[h] = h;
  detail::Objective obj;
  obj.linear = w;
  return detail::solve(problem, std::move(included), std::move(obj), warm_start, opts);
}

inline SolveReport solve_representative(const FeasibilityProblem& problem, const Eigen::VectorXd& w,
                                        const SolverOptions& opts = {}) {
  return solve_representative(problem, w, Eigen::VectorXd::Zero(w.size()), opts);
}

}  // namespace fidux
