#pragma once

#include "fiducial_solver.hpp"
#include "partial_likelihood.hpp"
#include "rng.hpp"
#include "survival_data.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace fidux {

struct FiducialConfig {
  int n_mcmc = 400;
  int n_burn = 40;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;  // Philox substream for the chain
  double alpha = 0.05;
  double box_bound = 30.0;   // on the standardized-covariate scale
  SolverOptions solver;

  void validate() const {
    if (n_mcmc < 1) throw std::invalid_argument("n_mcmc must be at least 1");
    if (n_burn < 0) throw std::invalid_argument("n_burn must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(box_bound > 0.0)) throw std::invalid_argument("box bound must be positive");
  }
};

/// U* is held on the log scale; u_star() recovers it.
struct GibbsState {
  Eigen::VectorXd log_u;
  Eigen::VectorXd beta;

  Eigen::VectorXd u_star() const { return log_u.array().exp(); }
};

class ChainError : public NumericalError {
public:
  ChainError(const std::string& what, int sweep, const GibbsState& state)
      : NumericalError(what + " at sweep " + std::to_string(sweep) + "\n" + dump(state)), sweep_(sweep) {}
  int sweep() const { return sweep_; }

private:
  static std::string dump(const GibbsState& s) {
    std::ostringstream os;
    os.precision(17);
    os << "beta: " << s.beta.transpose() << "\nlog_u: " << s.log_u.transpose();
    return os.str();
  }
  int sweep_;
};

struct SweepStats {
  int box_active = 0;
  int newton_steps = 0;
};

/// Starting point: the MLE when it converged, otherwise the ridge maximizer
/// of log-PL - 1e-2 |beta|^2. U*_h ~ Uniform(0, q_h(start)).
inline GibbsState init_chain(const RiskStructure& rs, const MleResult& mle, const FiducialConfig& cfg, Rng& rng) {
  if (rs.m() == 0) throw DataError("no failures: fiducial inversion undefined");
  Eigen::VectorXd start;
  if (mle.converged) {
    start = mle.beta_hat;
  } else {
    MleOptions ridge;
    ridge.ridge = 1e-2;
    start = newton_mle(rs, ridge).beta_hat;
  }
  const Eigen::VectorXd box = FeasibilityProblem::standardized_box(rs, cfg.box_bound);
  start = start.cwiseMax(-0.999 * box).cwiseMin(0.999 * box);

  const FeasibilityProblem at_zero(rs, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rs.m())), box);
  GibbsState s;
  s.log_u = at_zero.log_q(start);
  for (Eigen::Index h = 0; h < s.log_u.size(); ++h) s.log_u(h) += std::log(rng.uniform());
  s.beta = start;
  return s;
}

/// One sweep: U*_1..U*_m in order, each redrawn uniformly below its
/// conditional maximum q_h*, then one representative beta maximizing w'beta
/// for w ~ N(0, I).
inline GibbsState gibbs_sweep(GibbsState state, const RiskStructure& rs, const FiducialConfig& cfg, Rng& rng, int sweep = 0,
                              SweepStats* stats = nullptr) {
  FeasibilityProblem prob(rs, state.log_u, FeasibilityProblem::standardized_box(rs, cfg.box_bound));
  for (std::size_t k = 0; k < rs.m(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto rep = solve_qk_star(prob, k, state.beta, cfg.solver);
    if (rep.status == SolveStatus::infeasible) throw ChainError("conditional maximum infeasible for failure " + std::to_string(k), sweep, state);
    if (stats) stats->newton_steps += rep.newton_steps;

    // The barrier optimum can trail the current point by the duality gap;
    // keep whichever is higher so the current point stays feasible.
    double log_qstar = prob.log_q(state.beta)(kk);
    if (rep.objective >= log_qstar && check_feasible(rep.argmax, prob).feasible) {
      log_qstar = rep.objective;
      state.beta = rep.argmax;
    }
    log_qstar = std::min(log_qstar, 0.0);
    state.log_u(kk) = log_qstar + std::log(rng.uniform());
    prob.log_u()(kk) = state.log_u(kk);
  }

  Eigen::VectorXd w(static_cast<Eigen::Index>(rs.p()));
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = rng.normal();
  const auto rep = solve_representative(prob, w, state.beta, cfg.solver);
  if (rep.status == SolveStatus::infeasible) throw ChainError("representative problem infeasible", sweep, state);
  if (stats) {
    stats->newton_steps += rep.newton_steps;
    if (rep.status == SolveStatus::box_active) ++stats->box_active;
  }
  state.beta = rep.argmax;
  const auto chk = check_feasible(state.beta, prob, cfg.solver.feasibility_tol);
  if (!chk.feasible) throw ChainError("representative violates a constraint by " + std::to_string(chk.max_violation), sweep, state);
  return state;
}

/// Effective sample size per column by Geyer's initial monotone sequence.
inline Eigen::VectorXd effective_sample_size(const Eigen::MatrixXd& draws) {
  const Eigen::Index n = draws.rows();
  Eigen::VectorXd ess(draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    const Eigen::VectorXd x = draws.col(c).array() - draws.col(c).mean();
    const double var = x.squaredNorm() / static_cast<double>(n);
    if (n < 4 || var <= 0.0) {
      ess(c) = static_cast<double>(n);
      continue;
    }
    const auto acf = [&](Eigen::Index lag) { return x.head(n - lag).dot(x.tail(n - lag)) / (static_cast<double>(n) * var); };
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; 2 * t + 1 < n; ++t) {
      double pair = acf(2 * t) + acf(2 * t + 1);
      if (pair <= 0.0) break;
      pair = std::min(pair, prev);
      prev = pair;
      sum += pair;
    }
    const double tau = std::max(2.0 * sum - 1.0, 1.0 / static_cast<double>(n));
    ess(c) = static_cast<double>(n) / tau;
  }
  return ess;
}

struct FiducialSamples {
  Eigen::MatrixXd draws;  // n_mcmc x p, post burn-in
  Eigen::VectorXd effective_sample_size;
  int box_active_count = 0;
  int newton_steps = 0;
};

inline FiducialSamples run_gibbs(const RiskStructure& rs, const MleResult& mle, const FiducialConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, cfg.stream);
  GibbsState state = init_chain(rs, mle, cfg, rng);
  FiducialSamples out;
  out.draws.resize(cfg.n_mcmc, static_cast<Eigen::Index>(rs.p()));
  SweepStats stats;
  for (int s = 0; s < cfg.n_burn + cfg.n_mcmc; ++s) {
    SweepStats* track = s >= cfg.n_burn ? &stats : nullptr;
    state = gibbs_sweep(std::move(state), rs, cfg, rng, s, track);
    if (s >= cfg.n_burn) out.draws.row(s - cfg.n_burn) = state.beta.transpose();
  }
  out.box_active_count = stats.box_active;
  out.newton_steps = stats.newton_steps;
  out.effective_sample_size = effective_sample_size(out.draws);
  return out;
}

inline FiducialSamples run_gibbs(const RiskStructure& rs, const FiducialConfig& cfg) { return run_gibbs(rs, newton_mle(rs), cfg); }

/// Linear interpolation between order statistics (R type 7).
inline double quantile_type7(std::vector<double> v, double prob) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct FiducialSummary {
  Eigen::VectorXd point_estimate;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
};

inline FiducialSummary summarize(const Eigen::MatrixXd& draws, double alpha) {
  if (draws.rows() == 0) throw std::invalid_argument("no draws to summarize");
  FiducialSummary s;
  const Eigen::Index p = draws.cols();
  s.point_estimate.resize(p);
  s.ci_lower.resize(p);
  s.ci_upper.resize(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    std::vector<double> col(draws.col(c).data(), draws.col(c).data() + draws.rows());
    s.point_estimate(c) = quantile_type7(col, 0.5);
    s.ci_lower(c) = quantile_type7(col, alpha / 2.0);
    s.ci_upper(c) = quantile_type7(col, 1.0 - alpha / 2.0);
  }
  return s;
}

inline FiducialSummary summarize(const FiducialSamples& samples, double alpha) { return summarize(samples.draws, alpha); }

// ---------------------------------------------------------------------------
// One-covariate fiducial density.

class DegenerateDensity : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Range of p_i(beta) over the real line for each failure. p_i is
/// log-concave, so its infimum is a limit at +-inf and its supremum is
/// either a limit or the interior point where the softmax mean equals x_i.
class DensityModel1d {
public:
  explicit DensityModel1d(const RiskStructure& rs) : rs_(&rs) {
    if (rs.p() != 1) throw std::invalid_argument("the one-covariate density needs exactly one covariate");
    range_.assign(rs.m(), 0.0);
    bool any = false;
    for (std::size_t h = 0; h < rs.m(); ++h) {
      range_[h] = probability_range(h);
      any = any || range_[h] > 0.0;
    }
    if (!any) throw DegenerateDensity("degenerate fiducial density: covariate constant within every risk set");
  }

  const std::vector<double>& probability_ranges() const { return range_; }

  /// log of prod_h p_h(beta) * sum_h |dp_h/dbeta| / (p_h c_h), over
  /// failures with nonconstant p_h. Censored subjects contribute p = c = 1.
  double log_density(double beta) const {
    const Eigen::VectorXd eta = rs_->x.col(0) * beta;
    const auto mom = risk_moments(*rs_, eta, MomentOrder::gradient);
    double log_lik = 0.0;
    double jac = 0.0;
    for (std::size_t h = 0; h < rs_->m(); ++h) {
      const auto i = static_cast<Eigen::Index>(rs_->failing_order[h]);
      const auto g = rs_->group_of_failure[h];
      log_lik += eta(i) - mom.log_norm[g];
      if (range_[h] > 0.0) jac += std::abs(rs_->x(i, 0) - mom.mean(0, static_cast<Eigen::Index>(g))) / range_[h];
    }
    return log_lik + std::log(jac);
  }

  double density(double beta) const { return std::exp(log_density(beta)); }

private:
  double log_p(std::size_t h, double beta) const {
    const auto g = rs_->group_of_failure[h];
    const auto& set = rs_->risk_sets[g];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : set) mx = std::max(mx, beta * rs_->x(static_cast<Eigen::Index>(j), 0));
    double sum = 0.0;
    for (std::size_t j : set) sum += std::exp(beta * rs_->x(static_cast<Eigen::Index>(j), 0) - mx);
    return beta * rs_->x(static_cast<Eigen::Index>(rs_->failing_order[h]), 0) - mx - std::log(sum);
  }

  double softmax_mean(std::size_t h, double beta) const {
    const auto& set = rs_->risk_sets[rs_->group_of_failure[h]];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : set) mx = std::max(mx, beta * rs_->x(static_cast<Eigen::Index>(j), 0));
    double sum = 0.0, wx = 0.0;
    for (std::size_t j : set) {
      const double xj = rs_->x(static_cast<Eigen::Index>(j), 0);
      const double w = std::exp(beta * xj - mx);
      sum += w;
      wx += w * xj;
    }
    return wx / sum;
  }

  double probability_range(std::size_t h) const {
    const auto& set = rs_->risk_sets[rs_->group_of_failure[h]];
    const double xi = rs_->x(static_cast<Eigen::Index>(rs_->failing_order[h]), 0);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n_lo = 0, n_hi = 0;
    for (std::size_t j : set) {
      const double xj = rs_->x(static_cast<Eigen::Index>(j), 0);
      lo = std::min(lo, xj);
      hi = std::max(hi, xj);
    }
    if (hi == lo) return 0.0;
    for (std::size_t j : set) {
      const double xj = rs_->x(static_cast<Eigen::Index>(j), 0);
      n_lo += xj == lo;
      n_hi += xj == hi;
    }
    const double at_plus = xi == hi ? 1.0 / static_cast<double>(n_hi) : 0.0;
    const double at_minus = xi == lo ? 1.0 / static_cast<double>(n_lo) : 0.0;
    double sup = std::max(at_plus, at_minus);
    if (xi > lo && xi < hi) {
      // softmax mean is increasing in beta; bracket and bisect for mean = x_i
      double a = -1.0, b = 1.0;
      while (softmax_mean(h, a) > xi) a *= 2.0;
      while (softmax_mean(h, b) < xi) b *= 2.0;
      for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
        const double mid = 0.5 * (a + b);
        (softmax_mean(h, mid) < xi ? a : b) = mid;
      }
      sup = std::max(sup, std::exp(log_p(h, 0.5 * (a + b))));
    }
    return sup - std::min(at_plus, at_minus);
  }

  const RiskStructure* rs_;
  std::vector<double> range_;
};

inline double fiducial_density_1d(double beta, const RiskStructure& rs) { return DensityModel1d(rs).density(beta); }

struct DensityCheckResult {
  double ks_distance = 0.0;
  double grid_lower = 0.0;
  double grid_upper = 0.0;
  std::size_t grid_points = 0;
  std::size_t draws = 0;
};

/// KS distance between draws and the density normalized by the trapezoid
/// rule on an evenly spaced grid over [lower, upper]; the CDF is linear
/// between grid points.
inline DensityCheckResult density_ks(const RiskStructure& rs, std::vector<double> draws, double lower, double upper,
                                     std::size_t grid_points = 2001) {
  if (draws.empty()) throw std::invalid_argument("no draws for the density check");
  const DensityModel1d model(rs);
  const double step = (upper - lower) / static_cast<double>(grid_points - 1);
  std::vector<double> logd(grid_points), cdf(grid_points, 0.0);
  for (std::size_t g = 0; g < grid_points; ++g) logd[g] = model.log_density(lower + step * static_cast<double>(g));
  const double top = *std::max_element(logd.begin(), logd.end());
  for (std::size_t g = 1; g < grid_points; ++g)
    cdf[g] = cdf[g - 1] + 0.5 * step * (std::exp(logd[g - 1] - top) + std::exp(logd[g] - top));
  for (double& c : cdf) c /= cdf.back();

  const auto cdf_at = [&](double b) {
    if (b <= lower) return 0.0;
    if (b >= upper) return 1.0;
    const double pos = (b - lower) / step;
    const auto g = std::min(static_cast<std::size_t>(pos), grid_points - 2);
    const double frac = pos - static_cast<double>(g);
    return cdf[g] + frac * (cdf[g + 1] - cdf[g]);
  };

  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = cdf_at(draws[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return {d, lower, upper, grid_points, draws.size()};
}

}  // namespace fidux
