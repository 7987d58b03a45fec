#pragma once

#include "risk_moments.hpp"
#include "survival_data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace fidux {

namespace detail {

inline void check_dimension(const Eigen::VectorXd& beta, const RiskStructure& rs) {
  if (static_cast<std::size_t>(beta.size()) != rs.p())
    throw std::invalid_argument("coefficient dimension " + std::to_string(beta.size()) + " does not match covariate dimension " +
                                std::to_string(rs.p()));
}

}  // namespace detail

/// Breslow log partial likelihood: sum over failures of
/// beta'x_i - log sum_{j in R_k(i)} exp(beta'x_j).
inline double log_partial_likelihood(const Eigen::VectorXd& beta, const RiskStructure& rs) {
  detail::check_dimension(beta, rs);
  const Eigen::VectorXd eta = rs.x * beta;
  const auto mom = risk_moments(rs, eta, MomentOrder::value);
  double ll = 0.0;
  for (std::size_t h = 0; h < rs.m(); ++h)
    ll += eta(static_cast<Eigen::Index>(rs.failing_order[h])) - mom.log_norm[rs.group_of_failure[h]];
  return ll;
}

inline Eigen::VectorXd gradient(const Eigen::VectorXd& beta, const RiskStructure& rs) {
  detail::check_dimension(beta, rs);
  const auto mom = risk_moments(rs, rs.x * beta, MomentOrder::gradient);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(beta.size());
  for (std::size_t h = 0; h < rs.m(); ++h)
    g += rs.x.row(static_cast<Eigen::Index>(rs.failing_order[h])).transpose() -
         mom.mean.col(static_cast<Eigen::Index>(rs.group_of_failure[h]));
  return g;
}

inline Eigen::MatrixXd hessian(const Eigen::VectorXd& beta, const RiskStructure& rs) {
  detail::check_dimension(beta, rs);
  const auto mom = risk_moments(rs, rs.x * beta, MomentOrder::hessian);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(beta.size(), beta.size());
  for (std::size_t h = 0; h < rs.m(); ++h) hess -= mom.cov[rs.group_of_failure[h]];
  return hess;
}

enum class DivergenceReason { monotone, non_identifiable, iteration_cap };

inline const char* to_string(DivergenceReason r) {
  switch (r) {
    case DivergenceReason::monotone: return "monotone";
    case DivergenceReason::non_identifiable: return "non_identifiable";
    case DivergenceReason::iteration_cap: return "iteration_cap";
  }
  return "unknown";
}

struct MleOptions {
  double gtol = 1e-8;
  int max_iterations = 100;
  // Bound on |beta_j * sd(x_j)|; crossing it is taken as monotone likelihood.
  double divergence_bound = 30.0;
  // Optional penalty ridge * |beta|^2 subtracted from the log partial likelihood.
  double ridge = 0.0;
};

struct MleResult {
  Eigen::VectorXd beta_hat;
  bool converged = false;
  double log_pl = 0.0;
  double gradient_norm = 0.0;
  std::optional<Eigen::MatrixXd> neg_hessian_inverse;
  int iterations = 0;
  std::optional<DivergenceReason> divergence_reason;

  /// Wald standard errors from the inverse observed information, if available.
  std::optional<Eigen::VectorXd> standard_errors() const {
    if (!neg_hessian_inverse) return std::nullopt;
    return Eigen::VectorXd(neg_hessian_inverse->diagonal().cwiseMax(0.0).cwiseSqrt());
  }
};

namespace detail {

inline std::optional<Eigen::MatrixXd> inverse_if_pd(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  if (!inv.allFinite()) return std::nullopt;
  return inv;
}

}  // namespace detail

/// Damped Newton-Raphson for the (optionally ridge-penalized) Breslow log
/// partial likelihood, started at beta = 0. Step halving keeps the objective
/// non-decreasing. Divergence is reported through divergence_reason, never
/// thrown.
inline MleResult newton_mle(const RiskStructure& rs, const MleOptions& opts = {}) {
  const auto p = static_cast<Eigen::Index>(rs.p());
  const Eigen::VectorXd scale = covariate_scale(rs.x);
  const auto objective = [&](const Eigen::VectorXd& b) {
    return log_partial_likelihood(b, rs) - opts.ridge * b.squaredNorm();
  };

  MleResult res;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double value = objective(beta);
  double step_size = 0.0;
  int stalled = 0;
  double curvature_at_zero = 0.0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Eigen::VectorXd g = gradient(beta, rs) - 2.0 * opts.ridge * beta;
    const Eigen::MatrixXd info = -hessian(beta, rs) + 2.0 * opts.ridge * Eigen::MatrixXd::Identity(p, p);
    res.iterations = iter;
    res.gradient_norm = g.norm();

    if (iter == 0 && opts.ridge == 0.0) {
      // Information is positive definite at every beta or at none: a null
      // direction means x'v is constant on every risk set.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
      const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
      curvature_at_zero = eig.eigenvalues().minCoeff();
      if (eig.eigenvalues().minCoeff() <= 1e-10 * std::max(1.0, top)) {
        res.beta_hat = beta;
        res.log_pl = value;
        res.divergence_reason = DivergenceReason::non_identifiable;
        return res;
      }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(g) <= 0.0) step = g;

    // A small gradient alone is not enough: along a monotone direction the
    // gradient and curvature vanish together while the Newton step stays O(1).
    step_size = step.cwiseProduct(scale).lpNorm<Eigen::Infinity>();
    if (step_size <= 1e-4 && res.gradient_norm <= opts.gtol) {
      res.converged = true;
      break;
    }
    // Near the optimum the gain can sit below the rounding level of the
    // objective before the gradient reaches gtol; stop after a few such steps.
    const bool at_rounding = 0.5 * step.dot(g) <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value));
    stalled = at_rounding && step_size <= 1e-4 ? stalled + 1 : 0;
    if (stalled > 3) break;

    double alpha = 1.0;
    Eigen::VectorXd trial = beta + step;
    double trial_value = objective(trial);
    while (!(trial_value >= value) && alpha > 1e-12) {
      alpha *= 0.5;
      trial = beta + alpha * step;
      trial_value = objective(trial);
    }
    if (!(trial_value >= value)) break;  // no ascent possible at machine precision
    beta = trial;
    value = trial_value;
    res.iterations = iter + 1;

    if ((beta.cwiseProduct(scale)).lpNorm<Eigen::Infinity>() > opts.divergence_bound) {
      res.divergence_reason = DivergenceReason::monotone;
      break;
    }
  }
  if (!res.converged && !res.divergence_reason) {
    // Iteration cap or stalled line search: classify by the step Newton
    // still asks for at the final iterate.
    const Eigen::VectorXd g = gradient(beta, rs) - 2.0 * opts.ridge * beta;
    const Eigen::MatrixXd info = -hessian(beta, rs) + 2.0 * opts.ridge * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd step = info.ldlt().solve(g);
    if (!step.allFinite() || step.dot(g) <= 0.0) step = g;
    res.gradient_norm = g.norm();
    step_size = step.cwiseProduct(scale).lpNorm<Eigen::Infinity>();
    if (step_size > 1e-2) {
      res.divergence_reason = DivergenceReason::monotone;
    } else if (res.gradient_norm <= std::max(opts.gtol, 1e-6)) {
      res.converged = true;
    } else {
      res.divergence_reason = DivergenceReason::iteration_cap;
    }
  }

  res.beta_hat = beta;
  res.log_pl = value;
  const Eigen::MatrixXd info = -hessian(beta, rs) + 2.0 * opts.ridge * Eigen::MatrixXd::Identity(p, p);
  res.neg_hessian_inverse = detail::inverse_if_pd(info);
  const bool curvature_lost =
      opts.ridge == 0.0 && Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(info, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() <=
                               1e-10 * curvature_at_zero;
  if (res.converged && (!res.neg_hessian_inverse || curvature_lost)) {
    // Information was positive definite at zero, so losing it means the
    // iterate has run off far enough for gradient and curvature to underflow.
    res.converged = false;
    res.divergence_reason = DivergenceReason::monotone;
  }
  return res;
}

}  // namespace fidux
