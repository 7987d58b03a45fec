#pragma once

#include "survival_data.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

namespace fidux {

enum class MomentOrder { value, gradient, hessian };

/// Softmax moments of the covariates over every risk set R_k for linear
/// predictor eta: log-normalizer log sum_{j in R_k} exp(eta_j), the weighted
/// mean of x and (on request) the weighted covariance.
///
/// The log-normalizer is the conic term s_k of the exponential-cone form
/// (sum_j t_{j,k} <= 1 with t_{j,k} >= exp(eta_j - s_k)); here it is evaluated
/// directly. Risk sets are nested, so all of them come out of one pass over
/// the subjects in descending time with a rescaled running sum.
struct RiskMoments {
  std::vector<double> log_norm;
  Eigen::MatrixXd mean;              // p x K
  std::vector<Eigen::MatrixXd> cov;  // K matrices p x p, only for MomentOrder::hessian
};

inline RiskMoments risk_moments(const RiskStructure& rs, const Eigen::VectorXd& eta, MomentOrder order) {
  const auto p = static_cast<Eigen::Index>(rs.p());
  const std::size_t groups = rs.groups();
  RiskMoments out;
  out.log_norm.resize(groups);
  if (order != MomentOrder::value) out.mean.resize(p, static_cast<Eigen::Index>(groups));
  if (order == MomentOrder::hessian) out.cov.resize(groups);

  double shift = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd diff(p);

  std::size_t added = 0;
  for (std::size_t g = groups; g-- > 0;) {
    for (; added < rs.risk_prefix[g]; ++added) {
      const auto j = static_cast<Eigen::Index>(rs.descending[added]);
      const double e = eta(j);
      if (e > shift) {
        const double r = std::exp(shift - e);
        total *= r;
        if (order == MomentOrder::hessian) scatter *= r;
        shift = e;
      }
      const double w = std::exp(e - shift);
      total += w;
      if (order == MomentOrder::value) continue;
      diff = rs.x.row(j).transpose() - mean;
      const double frac = w / total;
      mean += frac * diff;
      if (order == MomentOrder::hessian) scatter.noalias() += (w * (1.0 - frac)) * diff * diff.transpose();
    }
    out.log_norm[g] = shift + std::log(total);
    if (order != MomentOrder::value) out.mean.col(static_cast<Eigen::Index>(g)) = mean;
    if (order == MomentOrder::hessian) out.cov[g] = scatter / total;
  }
  return out;
}

/// Per-column standard deviation (n - 1 denominator); 1 for constant
/// columns. Used to express box bounds on the scale of standardized
/// covariates.
inline Eigen::VectorXd covariate_scale(const Eigen::MatrixXd& x) {
  Eigen::VectorXd s(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mu = x.col(c).mean();
    const double ss = (x.col(c).array() - mu).square().sum();
    const double sd = x.rows() > 1 ? std::sqrt(ss / static_cast<double>(x.rows() - 1)) : 0.0;
    s(c) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

}  // namespace fidux
