#pragma once

#include "baseline_hazard.hpp"
#include "dga_simulator.hpp"
#include "gibbs_sampler.hpp"
#include "partial_likelihood.hpp"
#include "survival_data.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace fidux {

inline constexpr const char* kReportSchema = "fidux-report/1";

using json = nlohmann::ordered_json;

namespace detail {

inline json vec_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json vec_json(const std::vector<double>& v) { return json(v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// fit

struct FitConfig {
  FiducialConfig fiducial;
  MleOptions mle;
  int baseline_draws = 0;  // 0 disables baseline sampling
  std::vector<std::string> covariate_names;
  std::string input;
};

struct FitReport {
  FitConfig config;
  std::size_t n = 0, p = 0, failures = 0, distinct_times = 0;
  MleResult mle;
  std::optional<Eigen::VectorXd> mle_lower, mle_upper;
  FiducialSamples samples;
  FiducialSummary fiducial;
  std::vector<double> baseline_times;
  std::vector<double> baseline_median, baseline_lower, baseline_upper;
  std::optional<double> seconds;
};

/// MLE, fiducial chain and summary, and optionally the cumulative baseline
/// hazard at the distinct failure times from the last `baseline_draws`
/// fiducial draws.
inline FitReport run_fit(const SurvivalDataset& data, const FitConfig& cfg) {
  FitReport rep;
  rep.config = cfg;
  const RiskStructure rs = build_risk_structure(data);
  rep.n = data.n();
  rep.p = data.p();
  rep.failures = rs.m();
  rep.distinct_times = rs.groups();
  rep.mle = newton_mle(rs, cfg.mle);
  if (rep.mle.converged && rep.mle.neg_hessian_inverse) {
    const double z = normal_quantile(1.0 - cfg.fiducial.alpha / 2.0);
    const Eigen::VectorXd se = *rep.mle.standard_errors();
    rep.mle_lower = Eigen::VectorXd(rep.mle.beta_hat - z * se);
    rep.mle_upper = Eigen::VectorXd(rep.mle.beta_hat + z * se);
  }
  rep.samples = run_gibbs(rs, rep.mle, cfg.fiducial);
  rep.fiducial = summarize(rep.samples, cfg.fiducial.alpha);

  if (cfg.baseline_draws > 0) {
    rep.baseline_times = rs.failure_times;
    const int draws = std::min<int>(cfg.baseline_draws, static_cast<int>(rep.samples.draws.rows()));
    std::vector<std::vector<double>> values(rs.groups());
    Rng rng(cfg.fiducial.seed, substream_id(0, 0, StreamPurpose::baseline));
    for (int d = 0; d < draws; ++d) {
      const Eigen::VectorXd beta = rep.samples.draws.row(rep.samples.draws.rows() - draws + d).transpose();
      const auto sample = sample_baseline(rs, beta, rng);
      for (std::size_t k = 0; k < rs.groups(); ++k) values[k].push_back(cumulative_hazard(sample, rs.failure_times[k]));
    }
    for (const auto& v : values) {
      rep.baseline_median.push_back(quantile_type7(v, 0.5));
      rep.baseline_lower.push_back(quantile_type7(v, cfg.fiducial.alpha / 2.0));
      rep.baseline_upper.push_back(quantile_type7(v, 1.0 - cfg.fiducial.alpha / 2.0));
    }
  }
  return rep;
}

inline json config_json(const FiducialConfig& f) {
  return {{"n_mcmc", f.n_mcmc}, {"n_burn", f.n_burn}, {"alpha", f.alpha}, {"box_bound", f.box_bound}};
}

inline json to_json(const FitReport& r) {
  json out;
  out["schema"] = kReportSchema;
  out["kind"] = "fit";
  out["seed"] = r.config.fiducial.seed;
  json cfg = config_json(r.config.fiducial);
  cfg["baseline_draws"] = r.config.baseline_draws;
  cfg["input"] = r.config.input;
  out["config"] = cfg;
  out["data"] = {{"n", r.n}, {"p", r.p}, {"failures", r.failures}, {"distinct_failure_times", r.distinct_times}};

  const bool diverged = !r.mle.converged;
  out["mle"] = {{"converged", r.mle.converged},
                {"diverged", diverged},
                {"divergence_reason", r.mle.divergence_reason ? json(to_string(*r.mle.divergence_reason)) : json(nullptr)},
                {"iterations", r.mle.iterations},
                {"log_partial_likelihood", r.mle.log_pl},
                {"gradient_norm", r.mle.gradient_norm}};

  json coefs = json::array();
  const Eigen::VectorXd se = r.mle.converged && r.mle.neg_hessian_inverse ? *r.mle.standard_errors() : Eigen::VectorXd();
  for (std::size_t j = 0; j < r.p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const std::string name = j < r.config.covariate_names.size() ? r.config.covariate_names[j] : "x" + std::to_string(j + 1);
    json mle = {{"estimate", diverged ? json(nullptr) : json(r.mle.beta_hat(jj))},
                {"last_iterate", r.mle.beta_hat(jj)},
                {"std_error", se.size() ? json(se(jj)) : json(nullptr)},
                {"ci_lower", r.mle_lower ? json((*r.mle_lower)(jj)) : json(nullptr)},
                {"ci_upper", r.mle_upper ? json((*r.mle_upper)(jj)) : json(nullptr)}};
    json fid = {{"estimate", r.fiducial.point_estimate(jj)},
                {"ci_lower", r.fiducial.ci_lower(jj)},
                {"ci_upper", r.fiducial.ci_upper(jj)},
                {"effective_sample_size", r.samples.effective_sample_size(jj)}};
    coefs.push_back({{"name", name}, {"mle", mle}, {"fiducial", fid}});
  }
  out["coefficients"] = coefs;
  out["chain"] = {{"draws", r.samples.draws.rows()},
                  {"burn_in", r.config.fiducial.n_burn},
                  {"box_active_count", r.samples.box_active_count},
                  {"newton_steps", r.samples.newton_steps}};
  if (!r.baseline_times.empty()) {
    out["baseline"] = {{"times", r.baseline_times},
                       {"cumulative_hazard_median", r.baseline_median},
                       {"cumulative_hazard_lower", r.baseline_lower},
                       {"cumulative_hazard_upper", r.baseline_upper}};
  }
  if (r.seconds) out["timing"] = {{"seconds", *r.seconds}};
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct StudySpec {
  std::vector<Scenario> scenarios;
  StudyConfig config;
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline SimulationDesign design_from_json(const json& s) {
  SimulationDesign d;
  d.n = s.at("n").get<std::size_t>();
  const auto beta = s.at("beta").get<std::vector<double>>();
  d.beta_true = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));

  const json base = s.value("baseline", json{{"type", "constant"}});
  const auto btype = base.value("type", std::string("constant"));
  if (btype == "constant") {
    d.baseline = ConstantBaseline{get_or(base, "rate", 1.0)};
  } else if (btype == "jumps") {
    d.baseline = JumpBaseline{base.at("times").get<std::vector<double>>(), base.at("jumps").get<std::vector<double>>(),
                              get_or(base, "continuous_rate", 0.0)};
  } else {
    throw ConfigError("unknown baseline type '" + btype + "'");
  }

  const json cens = s.value("censoring", json{{"type", "uniform"}});
  const auto ctype = cens.value("type", std::string("uniform"));
  if (ctype == "uniform") {
    d.censoring = UniformCensoring{get_or(cens, "c_max", 2.0)};
  } else if (ctype == "fixed") {
    d.censoring = FixedHorizon{cens.at("horizon").get<double>()};
  } else {
    throw ConfigError("unknown censoring type '" + ctype + "'");
  }

  const json cov = s.value("covariates", json{{"type", "bernoulli"}});
  const auto xtype = cov.value("type", std::string("bernoulli"));
  if (xtype == "bernoulli") {
    d.covariates = BernoulliCovariates{get_or(cov, "prob", 0.5)};
  } else if (xtype == "normal") {
    d.covariates = NormalCovariates{};
  } else {
    throw ConfigError("unknown covariate law '" + xtype + "'");
  }
  d.validate();
  return d;
}

}  // namespace detail

/// Scenario file: {"replications", "n_mcmc", "n_burn", "alpha", "seed",
/// "box_bound", "scenarios": [{"name", "n", "beta", "baseline",
/// "censoring", "covariates"}]}. Every top-level key is optional except
/// "scenarios".
inline StudySpec parse_study(const json& j) {
  try {
    StudySpec spec;
    spec.config.replications = detail::get_or(j, "replications", 200);
    spec.config.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
    spec.config.fiducial.n_mcmc = detail::get_or(j, "n_mcmc", 400);
    spec.config.fiducial.n_burn = detail::get_or(j, "n_burn", spec.config.fiducial.n_mcmc / 10);
    spec.config.fiducial.alpha = detail::get_or(j, "alpha", 0.05);
    spec.config.fiducial.box_bound = detail::get_or(j, "box_bound", 30.0);
    if (!j.contains("scenarios") || !j.at("scenarios").is_array()) throw ConfigError("scenario file needs a 'scenarios' array");
    for (const auto& s : j.at("scenarios")) {
      spec.scenarios.push_back({s.value("name", "scenario " + std::to_string(spec.scenarios.size() + 1)), detail::design_from_json(s)});
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
}

inline json aggregate_json(const EstimatorAggregate& a) {
  return {{"replications", a.replications}, {"mse", a.mse}, {"ci_length", a.mean_ci_length}, {"coverage", a.coverage}};
}

inline json to_json(const StudyReport& r, const StudyConfig& cfg, bool details) {
  json out;
  out["schema"] = kReportSchema;
  out["kind"] = "simulate";
  out["seed"] = cfg.seed;
  json c = config_json(cfg.fiducial);
  c["replications"] = cfg.replications;
  out["config"] = c;
  json scen = json::array();
  for (const auto& s : r.scenarios) {
    json js = {{"name", s.name},
               {"beta_true", detail::vec_json(s.beta_true)},
               {"mle_nonconverged", s.mle_nonconverged},
               {"fiducial_box_active", s.fiducial_box_active},
               {"fiducial", aggregate_json(s.fiducial)},
               {"mle_excluded", aggregate_json(s.mle_excluded)},
               {"mle_included", {{"replications", s.replications.size()}, {"mse", s.mle_mse_included}}}};
    if (details) {
      json reps = json::array();
      for (const auto& rr : s.replications) {
        reps.push_back({{"failures", rr.failures},
                        {"mle_converged", rr.mle_converged},
                        {"divergence_reason", rr.divergence_reason ? json(to_string(*rr.divergence_reason)) : json(nullptr)},
                        {"mle_estimate", detail::vec_json(rr.mle_estimate)},
                        {"fiducial_estimate", detail::vec_json(rr.fiducial.point_estimate)},
                        {"fiducial_ci_lower", detail::vec_json(rr.fiducial.ci_lower)},
                        {"fiducial_ci_upper", detail::vec_json(rr.fiducial.ci_upper)},
                        {"box_active", rr.box_active}});
      }
      js["replication_details"] = reps;
    }
    scen.push_back(js);
  }
  out["scenarios"] = scen;
  return out;
}

/// Text table in the layout of the usual MLE-versus-fiducial comparison:
/// MSE (x 1e-2), mean CI length, coverage (%). An asterisk marks MLE rows
/// with non-converged replications, which are excluded from that row.
inline std::string render_table(const StudyReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "Scenario" << std::setw(14) << "Estimator" << std::right << std::setw(14) << "MSE(x1e-2)"
     << std::setw(14) << "CI length" << std::setw(14) << "Coverage(%)" << "\n";
  const auto row = [&](const std::string& scen, const std::string& est, double mse, double len, double cov, bool star) {
    std::ostringstream m;
    m << std::fixed << std::setprecision(1) << mse * 100.0 << (star ? "*" : "");
    os << std::left << std::setw(28) << scen << std::setw(14) << est << std::right << std::setw(14) << m.str() << std::setw(14)
       << std::fixed << std::setprecision(2) << len << std::setw(14) << std::setprecision(1) << cov * 100.0 << "\n";
  };
  for (const auto& s : r.scenarios) {
    for (std::size_t j = 0; j < s.fiducial.mse.size(); ++j) {
      const std::string b = "beta" + std::to_string(j + 1);
      const std::string label = j == 0 ? s.name : "";
      if (s.mle_excluded.replications > 0) {
        row(label, "MLE " + b, s.mle_excluded.mse[j], s.mle_excluded.mean_ci_length[j], s.mle_excluded.coverage[j], s.mle_nonconverged > 0);
      }
      row("", "Fiducial " + b, s.fiducial.mse[j], s.fiducial.mean_ci_length[j], s.fiducial.coverage[j], false);
    }
  }
  bool any = false;
  for (const auto& s : r.scenarios) any = any || s.mle_nonconverged > 0;
  if (any) os << "* MLE did not converge in some replications; those are excluded from the row\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// density-check

struct DensityCheckReport {
  std::uint64_t seed = 0;
  DensityCheckResult check;
  double threshold = 0.1;
  FiducialConfig config;
  bool mle_converged = false;
};

inline json to_json(const DensityCheckReport& r) {
  json out;
  out["schema"] = kReportSchema;
  out["kind"] = "density-check";
  out["seed"] = r.seed;
  out["config"] = config_json(r.config);
  out["mle_converged"] = r.mle_converged;
  out["ks_distance"] = r.check.ks_distance;
  out["threshold"] = r.threshold;
  out["passed"] = r.check.ks_distance <= r.threshold;
  out["draws"] = r.check.draws;
  out["grid"] = {{"lower", r.check.grid_lower}, {"upper", r.check.grid_upper}, {"points", r.check.grid_points}};
  return out;
}

}  // namespace fidux
