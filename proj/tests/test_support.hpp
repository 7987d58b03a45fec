#pragma once

// Shared test fixtures and independent oracles. Nothing here calls the
// library routine it is used to check.

#include <fidux/rng.hpp>
#include <fidux/survival_data.hpp>

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <functional>
#include <vector>

namespace fidux::oracle {

// Random dataset: normal covariates, exponential failure times, uniform
// censoring. Times are continuous, so no ties.
inline SurvivalDataset random_dataset(Rng& rng, std::size_t n, std::size_t p, double censor_max = 2.0) {
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rng.normal();
    const double t = rng.exponential(std::exp(0.5 * x.row(i).sum()));
    const double c = rng.uniform(0.0, censor_max);
    y(i) = std::min(t, c);
    d[i] = t <= c ? 1 : 0;
  }
  if (std::find(d.begin(), d.end(), 1) == d.end()) d[0] = 1;
  return SurvivalDataset(x, y, d);
}

// Direct product form: prod over failures of exp(b'x_i) / sum_{y_j >= y_i} exp(b'x_j),
// evaluated by brute force in the raw (non-log) domain.
inline double direct_log_partial_likelihood(const SurvivalDataset& data, const Eigen::VectorXd& beta) {
  double prod = 1.0;
  double log_acc = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.delta()[i] != 1) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < data.n(); ++j)
      if (data.y()(j) >= data.y()(i)) denom += std::exp(data.x().row(j).dot(beta));
    prod *= std::exp(data.x().row(i).dot(beta)) / denom;
    if (prod < 1e-200) {
      log_acc += std::log(prod);
      prod = 1.0;
    }
  }
  return log_acc + std::log(prod);
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                                          double h = 1e-5) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    Eigen::VectorXd a = at, b = at;
    a(j) += h;
    b(j) -= h;
    g(j) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Brute-force q_h(beta) = exp(b'x_{i}) / sum_{y_j >= y_i} exp(b'x_j) for a
// failing subject i, straight from the definition.
inline double direct_q(const SurvivalDataset& data, std::size_t i, const Eigen::VectorXd& beta) {
  double denom = 0.0;
  for (std::size_t j = 0; j < data.n(); ++j)
    if (data.y()(j) >= data.y()(i)) denom += std::exp(data.x().row(j).dot(beta));
  return std::exp(data.x().row(i).dot(beta)) / denom;
}

// One-sample KS distance between a sample and a CDF.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// Asymptotic Kolmogorov tail probability Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_two_sample_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  const double d = ks_two_sample(a, b);
  const double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) / static_cast<double>(a.size() + b.size());
  const double sq = std::sqrt(ne);
  return kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d);
}

// log U*_h = log q_h(beta0) + log V_h with V_h uniform, so beta0 is feasible.
inline Eigen::VectorXd feasible_log_u(const SurvivalDataset& data, const RiskStructure& rs, const Eigen::VectorXd& beta0, Rng& rng) {
  Eigen::VectorXd lu(rs.m());
  for (std::size_t h = 0; h < rs.m(); ++h) lu(h) = std::log(direct_q(data, rs.failing_order[h], beta0)) + std::log(rng.uniform());
  return lu;
}

struct GridResult {
  double best = -std::numeric_limits<double>::infinity();
  double argmax = 0.0;
};

// Exhaustive 1-d search over 1e5 points of [-b, b], constraints checked
// directly from the definition of q.
inline GridResult grid_search(const SurvivalDataset& data, const RiskStructure& rs, const Eigen::VectorXd& log_u, double b,
                              std::optional<std::size_t> k, double w) {
  GridResult out;
  const int points = 100000;
  for (int i = 0; i < points; ++i) {
    const double beta = -b + 2.0 * b * i / (points - 1);
    const Eigen::VectorXd bv = Eigen::VectorXd::Constant(1, beta);
    bool ok = true;
    for (std::size_t h = 0; h < rs.m() && ok; ++h)
      if (!k || h != *k) ok = std::log(direct_q(data, rs.failing_order[h], bv)) >= log_u(h);
    if (!ok) continue;
    const double v = k ? std::log(direct_q(data, rs.failing_order[*k], bv)) : w * beta;
    if (v > out.best) {
      out.best = v;
      out.argmax = beta;
    }
  }
  return out;
}

}  // namespace fidux::oracle
