#pragma once

#include "rng.hpp"
#include "survival_data.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace fidux {

// Piecewise-constant baseline hazard with knots at the distinct failure
// times t_1 < ... < t_K. Interval k is (t_{k-1}, t_k] with t_0 = 0; the
// extra interval K+1 is (t_K, inf).
struct BaselineHazardSample {
  std::vector<double> knots;      // t_0 = 0, t_1, ..., t_K
  std::vector<double> rates;      // K + 1 entries
  std::vector<double> exposures;  // K + 1 entries
  std::vector<double> uniforms;   // the W used for each rate
  double last_observed = 0.0;     // max Y; evaluation past it is extrapolation
};

/// l_k = sum_i (t_k ^ Y_i - t_{k-1} ^ Y_i) exp(beta'x_i) for k = 1..K, and
/// the exposure beyond t_K as entry K + 1.
inline std::vector<double> compute_exposures(const RiskStructure& rs, const Eigen::VectorXd& beta) {
  if (static_cast<std::size_t>(beta.size()) != rs.p()) throw std::invalid_argument("coefficient dimension mismatch");
  if (!beta.allFinite()) throw std::invalid_argument("coefficients must be finite");
  const Eigen::VectorXd risk = (rs.x * beta).array().exp();
  const std::size_t groups = rs.groups();
  std::vector<double> l(groups + 1, 0.0);
  for (Eigen::Index i = 0; i < risk.size(); ++i) {
    const double yi = rs.y(i);
    double prev = 0.0;
    for (std::size_t k = 0; k < groups && prev < yi; ++k) {
      const double upto = std::min(rs.failure_times[k], yi);
      l[k] += (upto - prev) * risk(i);
      prev = upto;
    }
    if (yi > prev) l[groups] += (yi - prev) * risk(i);
  }
  return l;
}

/// Rate for the open last interval: max(l_K, 2 l_{K+1}).
inline double last_interval_rate(double l_last_knot, double l_beyond) { return std::max(l_last_knot, 2.0 * l_beyond); }

/// lambda_k = -log(W_k) / l_k with W_k ~ Uniform(0, 1), i.e. Exponential
/// with rate l_k.
inline BaselineHazardSample sample_baseline(const RiskStructure& rs, const Eigen::VectorXd& beta, Rng& rng) {
  if (rs.groups() == 0) throw DataError("no failures: fiducial inversion undefined");
  BaselineHazardSample s;
  s.exposures = compute_exposures(rs, beta);
  s.knots.reserve(rs.groups() + 1);
  s.knots.push_back(0.0);
  s.knots.insert(s.knots.end(), rs.failure_times.begin(), rs.failure_times.end());
  s.last_observed = rs.y.maxCoeff();

  const std::size_t groups = rs.groups();
  s.rates.resize(groups + 1);
  s.uniforms.resize(groups + 1);
  for (std::size_t k = 0; k <= groups; ++k) {
    const double rate = k < groups ? s.exposures[k] : last_interval_rate(s.exposures[groups - 1], s.exposures[groups]);
    s.uniforms[k] = rng.uniform();
    s.rates[k] = -std::log(s.uniforms[k]) / rate;
  }
  return s;
}

inline double cumulative_hazard(const BaselineHazardSample& s, double t) {
  if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
  double total = 0.0;
  for (std::size_t k = 1; k < s.knots.size(); ++k) {
    if (t <= s.knots[k - 1]) return total;
    total += s.rates[k - 1] * (std::min(t, s.knots[k]) - s.knots[k - 1]);
  }
  if (t > s.knots.back()) total += s.rates.back() * (t - s.knots.back());
  return total;
}

inline bool extrapolated(const BaselineHazardSample& s, double t) { return t > s.last_observed; }

/// Breslow estimator: sum over failure times t_k <= t of d_k / sum_{R_k} exp(beta'x_j).
inline double breslow_cumulative_hazard(const RiskStructure& rs, const Eigen::VectorXd& beta, double t) {
  const Eigen::VectorXd risk = (rs.x * beta).array().exp();
  double total = 0.0;
  for (std::size_t k = 0; k < rs.groups() && rs.failure_times[k] <= t; ++k) {
    double denom = 0.0;
    for (std::size_t j : rs.risk_sets[k]) denom += risk(static_cast<Eigen::Index>(j));
    total += static_cast<double>(rs.tie_groups[k].size()) / denom;
  }
  return total;
}

}  // namespace fidux
