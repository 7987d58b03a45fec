#pragma once

#include "gibbs_sampler.hpp"
#include "partial_likelihood.hpp"
#include "rng.hpp"
#include "survival_data.hpp"

#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace fidux {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ConstantBaseline {
  double rate = 1.0;
};

/// Cumulative baseline hazard with a continuous part of constant rate plus
/// jumps of the given sizes at the given (increasing) times.
struct JumpBaseline {
  std::vector<double> times;
  std::vector<double> jumps;
  double continuous_rate = 0.0;
};

struct UniformCensoring {
  double c_max = 2.0;
};

struct FixedHorizon {
  double horizon = 1.0;
};

struct BernoulliCovariates {
  double prob = 0.5;
};

struct NormalCovariates {};

/// Same covariate matrix in every replication.
struct FixedCovariates {
  Eigen::MatrixXd x;
};

struct SimulationDesign {
  std::size_t n = 20;
  Eigen::VectorXd beta_true = Eigen::VectorXd::Zero(2);
  std::variant<ConstantBaseline, JumpBaseline> baseline = ConstantBaseline{};
  std::variant<UniformCensoring, FixedHorizon> censoring = UniformCensoring{};
  std::variant<BernoulliCovariates, NormalCovariates, FixedCovariates> covariates = BernoulliCovariates{};

  void validate() const {
    if (n == 0) throw ConfigError("sample size must be positive");
    if (beta_true.size() == 0 || !beta_true.allFinite()) throw ConfigError("true coefficients must be finite and nonempty");
    if (const auto* c = std::get_if<ConstantBaseline>(&baseline); c && !(c->rate > 0.0)) throw ConfigError("baseline rate must be positive");
    if (const auto* j = std::get_if<JumpBaseline>(&baseline)) {
      if (j->times.size() != j->jumps.size()) throw ConfigError("jump times and sizes differ in length");
      if (!(j->continuous_rate >= 0.0)) throw ConfigError("continuous rate must be nonnegative");
      for (std::size_t k = 0; k < j->times.size(); ++k) {
        if (!(j->times[k] > 0.0) || (k > 0 && !(j->times[k] > j->times[k - 1]))) throw ConfigError("jump times must be positive and increasing");
        if (!(j->jumps[k] > 0.0)) throw ConfigError("jump sizes must be positive");
      }
    }
    if (const auto* u = std::get_if<UniformCensoring>(&censoring); u && !(u->c_max > 0.0)) throw ConfigError("c_max must be positive");
    if (const auto* f = std::get_if<FixedHorizon>(&censoring); f && !(f->horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (const auto* b = std::get_if<BernoulliCovariates>(&covariates); b && !(b->prob > 0.0 && b->prob < 1.0))
      throw ConfigError("Bernoulli probability must lie in (0, 1)");
    if (const auto* f = std::get_if<FixedCovariates>(&covariates);
        f && (static_cast<std::size_t>(f->x.rows()) != n || f->x.cols() != beta_true.size()))
      throw ConfigError("fixed covariate matrix must be n x p");
  }

  std::size_t p() const { return static_cast<std::size_t>(beta_true.size()); }
};

namespace detail {

inline Eigen::RowVectorXd draw_covariates(const SimulationDesign& d, std::size_t i, Rng& rng) {
  const auto p = static_cast<Eigen::Index>(d.p());
  Eigen::RowVectorXd x(p);
  if (const auto* b = std::get_if<BernoulliCovariates>(&d.covariates)) {
    for (Eigen::Index j = 0; j < p; ++j) x(j) = rng.bernoulli(b->prob) ? 1.0 : 0.0;
  } else if (std::holds_alternative<NormalCovariates>(d.covariates)) {
    for (Eigen::Index j = 0; j < p; ++j) x(j) = rng.normal();
  } else {
    x = std::get<FixedCovariates>(d.covariates).x.row(static_cast<Eigen::Index>(i));
  }
  return x;
}

inline double draw_censoring(const SimulationDesign& d, Rng& rng) {
  if (const auto* u = std::get_if<UniformCensoring>(&d.censoring)) return rng.uniform(0.0, u->c_max);
  return std::get<FixedHorizon>(d.censoring).horizon;
}

// Index drawn with probability weight[i] / sum(weight) over `candidates`.
inline std::size_t draw_categorical(const std::vector<std::size_t>& candidates, const Eigen::VectorXd& weight, double total, Rng& rng) {
  double target = rng.uniform() * total;
  for (std::size_t c : candidates) {
    target -= weight(static_cast<Eigen::Index>(c));
    if (target <= 0.0) return c;
  }
  return candidates.back();
}

}  // namespace detail

/// T_i ~ Exponential(rate lambda_0 exp(beta'x_i)) by inverse CDF, C_i from
/// the censoring law, Y = min(T, C), delta = 1{T <= C}.
inline SurvivalDataset generate_standard(const SimulationDesign& design, Rng& rng) {
  design.validate();
  const auto* base = std::get_if<ConstantBaseline>(&design.baseline);
  if (!base) throw ConfigError("the standard generator needs a constant baseline rate");
  const auto n = static_cast<Eigen::Index>(design.n);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(design.p()));
  Eigen::VectorXd y(n);
  std::vector<int> delta(design.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = detail::draw_covariates(design, static_cast<std::size_t>(i), rng);
    const double t = -std::log(rng.uniform()) / (base->rate * std::exp(x.row(i).dot(design.beta_true)));
    const double c = detail::draw_censoring(design, rng);
    y(i) = std::min(t, c);
    delta[static_cast<std::size_t>(i)] = t <= c ? 1 : 0;
  }
  return {x, y, delta};
}

/// Poisson(mean) conditioned on 1 <= m <= max_count, by rejection.
inline long conditioned_poisson(double mean, std::size_t max_count, Rng& rng) {
  if (!(mean > 0.0) || max_count == 0) throw std::invalid_argument("conditioned Poisson needs a positive mean and room for one event");
  for (;;) {
    const long m = rng.poisson(mean);
    if (m >= 1 && static_cast<std::size_t>(m) <= max_count) return m;
  }
}

namespace detail {

// Shared walk for the sequential generators. Starting from everyone at
// risk, spends one Exp(1) budget against the aggregate cumulative hazard of
// the current risk set, removing censored subjects as their times pass.
// A jump either absorbs part of the budget or produces a tied failure set.
inline SurvivalDataset sequential_walk(const SimulationDesign& design, const Eigen::MatrixXd& x, const std::vector<double>& censor,
                                       Rng& rng) {
  const std::size_t n = design.n;
  const Eigen::VectorXd weight = (x * design.beta_true).array().exp();
  double rate = 0.0;
  const JumpBaseline* jumps = std::get_if<JumpBaseline>(&design.baseline);
  if (const auto* c = std::get_if<ConstantBaseline>(&design.baseline)) rate = c->rate;
  if (jumps) rate = jumps->continuous_rate;

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::vector<int> delta(n, 0);
  std::vector<std::size_t> at_risk(n);
  for (std::size_t i = 0; i < n; ++i) at_risk[i] = i;
  std::size_t next_jump = 0;
  double t = 0.0;

  const auto remove = [&](std::size_t i, double time, int status) {
    y(static_cast<Eigen::Index>(i)) = time;
    delta[i] = status;
    at_risk.erase(std::find(at_risk.begin(), at_risk.end(), i));
  };

  while (!at_risk.empty()) {
    double budget = -std::log(rng.uniform());
    bool failed = false;
    while (!failed && !at_risk.empty()) {
      double total = 0.0, next_censor = std::numeric_limits<double>::infinity();
      for (std::size_t i : at_risk) {
        total += weight(static_cast<Eigen::Index>(i));
        next_censor = std::min(next_censor, censor[i]);
      }
      const double jump_time = jumps && next_jump < jumps->times.size() ? jumps->times[next_jump] : std::numeric_limits<double>::infinity();
      const double horizon = std::min(next_censor, jump_time);

      const double hazard = rate * total;
      if (hazard > 0.0 && budget <= hazard * (horizon - t)) {
        t += budget / hazard;
        remove(draw_categorical(at_risk, weight, total, rng), t, 1);
        failed = true;
        break;
      }
      if (!std::isfinite(horizon)) {
        // No failure before every censoring time: the walk ends.
        for (std::size_t i : std::vector<std::size_t>(at_risk)) remove(i, censor[i], 0);
        break;
      }
      budget -= hazard * (horizon - t);
      t = horizon;
      if (jump_time <= next_censor) {
        const double eta = jumps->jumps[next_jump] * total;
        ++next_jump;
        if (budget <= eta) {
          // Tied failures: m ~ Poisson(eta) given m >= 1 and m <= |R|, then m
          // distinct subjects by multinomial draws rejected on repeats.
          const long m = conditioned_poisson(eta, at_risk.size(), rng);
          std::vector<std::size_t> chosen;
          for (;;) {
            chosen.clear();
            for (long r = 0; r < m; ++r) chosen.push_back(draw_categorical(at_risk, weight, total, rng));
            std::vector<std::size_t> sorted = chosen;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) break;
          }
          for (std::size_t i : chosen) remove(i, t, 1);
          failed = true;
          break;
        }
        budget -= eta;
      }
      // Censored subjects leave after any failure at the same instant.
      for (std::size_t i : std::vector<std::size_t>(at_risk))
        if (censor[i] <= t) remove(i, censor[i], 0);
    }
  }
  return {x, y, delta};
}

}  // namespace detail

/// Sequential construction: draw the next failure time from the aggregate
/// survival of the current risk set, then the failing subject with
/// probability exp(beta'x_i) / sum_{R} exp(beta'x_j). Subjects leave the
/// risk set at their censoring time. Infinite censoring times are allowed.
inline SurvivalDataset generate_sequential_dga(const SimulationDesign& design, const std::vector<double>& censoring_times, Rng& rng) {
  design.validate();
  if (!std::holds_alternative<ConstantBaseline>(design.baseline)) throw ConfigError("the sequential generator needs a constant baseline rate");
  if (censoring_times.size() != design.n) throw ConfigError("need one censoring time per subject");
  for (double c : censoring_times)
    if (!(c > 0.0)) throw ConfigError("censoring times must be positive");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(design.n), static_cast<Eigen::Index>(design.p()));
  for (std::size_t i = 0; i < design.n; ++i) x.row(static_cast<Eigen::Index>(i)) = detail::draw_covariates(design, i, rng);
  return detail::sequential_walk(design, x, censoring_times, rng);
}

/// Approximate tie-producing generator for a baseline with jumps.
/// Censoring times come from the design's censoring law.
inline SurvivalDataset generate_discrete_dga(const SimulationDesign& design, Rng& rng) {
  design.validate();
  if (!std::holds_alternative<JumpBaseline>(design.baseline)) throw ConfigError("the discrete generator needs a jump baseline");
  const auto n = static_cast<Eigen::Index>(design.n);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(design.p()));
  std::vector<double> censor(design.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = detail::draw_covariates(design, static_cast<std::size_t>(i), rng);
    censor[static_cast<std::size_t>(i)] = detail::draw_censoring(design, rng);
  }
  return detail::sequential_walk(design, x, censor, rng);
}

// ---------------------------------------------------------------------------
// Simulation study.

struct Scenario {
  std::string name;
  SimulationDesign design;
};

struct StudyConfig {
  int replications = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  FiducialConfig fiducial;  // seed and stream are set per replication
  MleOptions mle;
};

struct ReplicationResult {
  Eigen::VectorXd mle_estimate;
  std::optional<Eigen::VectorXd> mle_lower, mle_upper;  // Wald interval when the information is invertible
  bool mle_converged = false;
  std::optional<DivergenceReason> divergence_reason;
  FiducialSummary fiducial;
  int box_active = 0;
  std::size_t failures = 0;
  int regenerated = 0;  // datasets redrawn because they had no failure
};

struct EstimatorAggregate {
  std::vector<double> mse;
  std::vector<double> mean_ci_length;
  std::vector<double> coverage;
  int replications = 0;  // replications entering the aggregate
};

struct ScenarioReport {
  std::string name;
  Eigen::VectorXd beta_true;
  EstimatorAggregate fiducial;
  EstimatorAggregate mle_excluded;  // MLE over converged replications only
  std::vector<double> mle_mse_included;  // MSE over all replications, divergent estimates taken where Newton stopped
  int mle_nonconverged = 0;
  int fiducial_box_active = 0;
  std::vector<ReplicationResult> replications;
};

struct StudyReport {
  std::vector<ScenarioReport> scenarios;
};

inline double normal_quantile(double prob) { return boost::math::quantile(boost::math::normal(), prob); }

/// One replication: data from the data substream, MLE with Wald interval,
/// fiducial chain on its own substream.
inline ReplicationResult run_replication(const SimulationDesign& design, const StudyConfig& cfg, std::uint64_t scenario, std::uint64_t rep) {
  Rng data_rng(cfg.seed, substream_id(scenario, rep, StreamPurpose::data));
  ReplicationResult out;
  SurvivalDataset data = generate_standard(design, data_rng);
  while (data.failures() == 0) {
    ++out.regenerated;
    data = generate_standard(design, data_rng);
  }
  const RiskStructure rs = build_risk_structure(data);
  out.failures = rs.m();

  const MleResult mle = newton_mle(rs, cfg.mle);
  out.mle_estimate = mle.beta_hat;
  out.mle_converged = mle.converged;
  out.divergence_reason = mle.divergence_reason;
  if (mle.neg_hessian_inverse) {
    const double z = normal_quantile(1.0 - cfg.fiducial.alpha / 2.0);
    const Eigen::VectorXd se = mle.neg_hessian_inverse->diagonal().cwiseMax(0.0).cwiseSqrt();
    out.mle_lower = Eigen::VectorXd(mle.beta_hat - z * se);
    out.mle_upper = Eigen::VectorXd(mle.beta_hat + z * se);
  }

  FiducialConfig fc = cfg.fiducial;
  fc.seed = cfg.seed;
  fc.stream = substream_id(scenario, rep, StreamPurpose::chain);
  const FiducialSamples samples = run_gibbs(rs, mle, fc);
  out.fiducial = summarize(samples, fc.alpha);
  out.box_active = samples.box_active_count;
  return out;
}

namespace detail {

inline void accumulate(EstimatorAggregate& agg, const Eigen::VectorXd& truth, const Eigen::VectorXd& est, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi) {
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    agg.mse[jj] += (est(j) - truth(j)) * (est(j) - truth(j));
    agg.mean_ci_length[jj] += hi(j) - lo(j);
    agg.coverage[jj] += lo(j) <= truth(j) && truth(j) <= hi(j) ? 1.0 : 0.0;
  }
  ++agg.replications;
}

inline EstimatorAggregate empty_aggregate(std::size_t p) {
  return {std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), 0};
}

inline void finish(EstimatorAggregate& agg) {
  if (agg.replications == 0) return;
  const double r = agg.replications;
  for (auto* v : {&agg.mse, &agg.mean_ci_length, &agg.coverage})
    for (double& x : *v) x /= r;
}

}  // namespace detail

/// Runs every (scenario, replication) pair on a pool of `threads` workers.
/// Each pair draws from its own substreams and results are reduced in index
/// order, so the report does not depend on the thread count.
inline StudyReport run_simulation_study(const std::vector<Scenario>& scenarios, const StudyConfig& cfg,
                                        const std::function<void(std::size_t done, std::size_t total)>& progress = {}) {
  if (scenarios.empty()) throw ConfigError("empty report: no scenarios");
  if (cfg.replications < 1) throw ConfigError("empty report: scenarios need at least one replication");
  cfg.fiducial.validate();
  for (const auto& s : scenarios) s.design.validate();

  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  const std::size_t total = scenarios.size() * reps;
  std::vector<ReplicationResult> results(total);
  std::atomic<std::size_t> next{0}, done{0};
  std::exception_ptr failure;
  std::mutex mutex;

  const auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      {
        std::lock_guard<std::mutex> lock(mutex);
        if (failure) return;
      }
      try {
        results[task] = run_replication(scenarios[task / reps].design, cfg, task / reps, task % reps);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(mutex);
        progress(finished, total);
      }
    }
  };
  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  StudyReport report;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& truth = scenarios[s].design.beta_true;
    const std::size_t p = scenarios[s].design.p();
    ScenarioReport sr;
    sr.name = scenarios[s].name;
    sr.beta_true = truth;
    sr.fiducial = detail::empty_aggregate(p);
    sr.mle_excluded = detail::empty_aggregate(p);
    sr.mle_mse_included.assign(p, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      auto& res = results[s * reps + r];
      detail::accumulate(sr.fiducial, truth, res.fiducial.point_estimate, res.fiducial.ci_lower, res.fiducial.ci_upper);
      for (std::size_t j = 0; j < p; ++j) {
        const double e = res.mle_estimate(static_cast<Eigen::Index>(j)) - truth(static_cast<Eigen::Index>(j));
        sr.mle_mse_included[j] += e * e / static_cast<double>(reps);
      }
      if (res.mle_converged && res.mle_lower) {
        detail::accumulate(sr.mle_excluded, truth, res.mle_estimate, *res.mle_lower, *res.mle_upper);
      } else {
        ++sr.mle_nonconverged;
      }
      sr.fiducial_box_active += res.box_active;
      sr.replications.push_back(std::move(res));
    }
    detail::finish(sr.fiducial);
    detail::finish(sr.mle_excluded);
    report.scenarios.push_back(std::move(sr));
  }
  return report;
}

}  // namespace fidux
