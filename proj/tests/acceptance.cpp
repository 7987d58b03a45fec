// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// on the command line to run a subset.

#include <fidux/fidux.hpp>

#include "test_support.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

namespace {

using namespace fidux;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Clock {
public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome derivatives() {
  const Clock clock;
  Rng rng(101);
  double worst_g = 0.0, worst_h = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t p = 1 + static_cast<std::size_t>(inst % 3);
    const std::size_t n = 6 + static_cast<std::size_t>(rng.uniform() * 20.0);  // 6..25
    const auto data = oracle::random_dataset(rng, n, p);
    const auto rs = build_risk_structure(data);
    Eigen::VectorXd beta(p);
    for (std::size_t j = 0; j < p; ++j) beta(j) = rng.uniform(-1.5, 1.5);
    const auto f = [&](const Eigen::VectorXd& b) { return oracle::direct_log_partial_likelihood(data, b); };

    const Eigen::VectorXd g = gradient(beta, rs);
    const Eigen::VectorXd fd = oracle::central_difference(f, beta);
    for (std::size_t j = 0; j < p; ++j) worst_g = std::max(worst_g, oracle::relative_error(g(j), fd(j)));

    const Eigen::MatrixXd h = hessian(beta, rs);
    const double step = 1e-3;
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t l = 0; l < p; ++l) {
        const auto shifted = [&](double sj, double sl) {
          Eigen::VectorXd b = beta;
          b(j) += sj;
          b(l) += sl;
          return f(b);
        };
        const double second =
            (shifted(step, step) - shifted(step, -step) - shifted(-step, step) + shifted(-step, -step)) / (4.0 * step * step);
        worst_h = std::max(worst_h, oracle::relative_error(h(j, l), second));
      }
    }
  }
  const double secs = clock.seconds();
  return {worst_g <= 1e-6 && worst_h <= 1e-5 && secs < 10.0,
          fmt("max rel err gradient %.2e (<= 1e-6), Hessian %.2e (<= 1e-5), %.2f s (< 10 s)", worst_g, worst_h, secs)};
}

Outcome solver_equivalence() {
  const Clock clock;
  Rng rng(202);
  double worst_obj = 0.0, worst_arg = 0.0;
  int problems = 0;
  const double b = 10.0;
  for (int inst = 0; inst < 30; ++inst) {
    Eigen::MatrixXd x(5, 1);
    for (Eigen::Index i = 0; i < 5; ++i) x(i, 0) = rng.normal();
    const SurvivalDataset data(x, (Eigen::VectorXd(5) << 1, 2, 3, 4, 5).finished(), {1, 1, 1, 0, 0});
    const auto rs = build_risk_structure(data);
    const Eigen::VectorXd lu = oracle::feasible_log_u(data, rs, Eigen::VectorXd::Constant(1, rng.uniform(-2.0, 2.0)), rng);
    FeasibilityProblem prob(rs, lu, Eigen::VectorXd::Constant(1, b));
    for (std::size_t k = 0; k < rs.m(); ++k) {
      const auto sol = solve_qk_star(prob, k);
      const auto grid = oracle::grid_search(data, rs, lu, b, k, 0.0);
      worst_obj = std::max(worst_obj, std::abs(sol.objective - grid.best));
      worst_arg = std::max(worst_arg, std::abs(sol.argmax(0) - grid.argmax));
      ++problems;
    }
    const double w = rng.normal();
    const auto sol = solve_representative(prob, Eigen::VectorXd::Constant(1, w));
    const auto grid = oracle::grid_search(data, rs, lu, b, std::nullopt, w);
    worst_obj = std::max(worst_obj, std::abs(sol.objective - grid.best));
    worst_arg = std::max(worst_arg, std::abs(sol.argmax(0) - grid.argmax));
    ++problems;
  }
  const double secs = clock.seconds();
  return {worst_obj <= 1e-3 && worst_arg <= 1e-2 && secs < 30.0,
          fmt("%d problems on 30 instances: max |objective diff| %.2e (<= 1e-3), max |argmax diff| %.2e (<= 1e-2), %.1f s (< 30 s)",
              problems, worst_obj, worst_arg, secs)};
}

SurvivalDataset model3_dataset(std::uint64_t seed) {
  SimulationDesign d;
  d.n = 20;
  d.beta_true = (Eigen::VectorXd(2) << 0.5, 1.0).finished();
  Rng rng(seed);
  return generate_standard(d, rng);
}

Outcome chain_feasibility() {
  const auto rs = build_risk_structure(model3_dataset(303));
  FiducialConfig cfg;
  cfg.seed = 303;
  Rng rng(cfg.seed);
  auto state = init_chain(rs, newton_mle(rs), cfg, rng);
  const Eigen::VectorXd box = FeasibilityProblem::standardized_box(rs, cfg.box_bound);
  int violations = 0;
  double worst = 0.0;
  for (int s = 0; s < 500; ++s) {
    state = gibbs_sweep(std::move(state), rs, cfg, rng, s);
    const auto chk = check_feasible(state.beta, FeasibilityProblem(rs, state.log_u, box), 1e-7);
    violations += !chk.feasible;
    worst = std::max(worst, chk.max_violation);
  }
  return {violations == 0, fmt("500 sweeps, %zu failures: %d violations > 1e-7 (largest %.2e)", rs.m(), violations, worst)};
}

Outcome density_oracle() {
  const Clock clock;
  std::ifstream in(FIDUX_DATA_DIR "/density_n15.csv");
  const auto data = load_dataset(in, CsvSchema{});
  const auto rs = build_risk_structure(data);
  FiducialConfig cfg;
  cfg.n_mcmc = 2000;
  cfg.n_burn = 200;
  cfg.seed = 1;
  const auto samples = run_gibbs(rs, cfg);
  const double bound = FeasibilityProblem::standardized_box(rs, cfg.box_bound)(0);
  const std::vector<double> draws(samples.draws.data(), samples.draws.data() + samples.draws.rows());
  const auto check = density_ks(rs, draws, -bound, bound);
  const double secs = clock.seconds();
  return {check.ks_distance <= 0.1 && secs < 300.0,
          fmt("n=%zu, %zu draws: KS %.4f (<= 0.1), %.1f s (< 300 s)", data.n(), check.draws, check.ks_distance, secs)};
}

// First event from both generators on three subjects with a common fixed
// censoring time: which subject fails first (or none), and when.
Outcome proposition_one() {
  const Clock clock;
  const int reps = 20000;
  Eigen::MatrixXd x(3, 1);
  x << -0.8, 0.3, 1.2;
  SimulationDesign d;
  d.n = 3;
  d.beta_true = Eigen::VectorXd::Constant(1, 0.7);
  d.covariates = FixedCovariates{x};
  d.censoring = FixedHorizon{0.6};
  const std::vector<double> censor(3, 0.6);

  const auto first = [](const SurvivalDataset& data) {
    std::size_t who = 3;
    double t = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 3; ++i)
      if (data.delta()[i] == 1 && data.y()(static_cast<Eigen::Index>(i)) < t) {
        t = data.y()(static_cast<Eigen::Index>(i));
        who = i;
      }
    return std::pair{who, t};
  };
  Rng rs(505), rq(506);
  std::array<std::array<double, 4>, 2> counts{};
  std::vector<double> t_std, t_seq;
  for (int r = 0; r < reps; ++r) {
    const auto [is, ts] = first(generate_standard(d, rs));
    const auto [iq, tq] = first(generate_sequential_dga(d, censor, rq));
    counts[0][is] += 1;
    counts[1][iq] += 1;
    if (is < 3) t_std.push_back(ts);
    if (iq < 3) t_seq.push_back(tq);
  }
  double stat = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const double expected = (counts[0][j] + counts[1][j]) / 2.0;
    for (std::size_t g = 0; g < 2; ++g) stat += (counts[g][j] - expected) * (counts[g][j] - expected) / expected;
  }
  const double p_chi = boost::math::cdf(boost::math::complement(boost::math::chi_squared(3.0), stat));
  const double p_ks = oracle::ks_two_sample_pvalue(t_std, t_seq);
  const double secs = clock.seconds();
  return {p_chi > 0.01 && p_ks > 0.01 && secs < 60.0,
          fmt("%d reps: chi-square p %.3f, KS p %.3f (both > 0.01), %.1f s (< 60 s)", reps, p_chi, p_ks, secs)};
}

Outcome baseline_sampler() {
  Rng data_rng(606);
  const auto data = oracle::random_dataset(data_rng, 12, 1);
  const auto rs = build_risk_structure(data);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 0.4);
  const std::size_t m = rs.groups();
  Rng rng(607);
  std::vector<double> sum(m, 0.0);
  bool last_exact = true;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto s = sample_baseline(rs, beta, rng);
    for (std::size_t k = 0; k < m; ++k) sum[k] += s.rates[k];
    const double rate = std::max(s.exposures[m - 1], 2.0 * s.exposures[m]);
    last_exact = last_exact && s.rates[m] == -std::log(s.uniforms[m]) / rate;
  }
  // Exposures from the definition, independent of the library.
  double worst = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double l = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double yi = data.y()(static_cast<Eigen::Index>(i));
      l += (std::min(rs.failure_times[k], yi) - std::min(prev, yi)) * std::exp(beta(0) * data.x()(static_cast<Eigen::Index>(i), 0));
    }
    prev = rs.failure_times[k];
    worst = std::max(worst, std::abs(sum[k] / draws * l - 1.0));
  }
  last_exact = last_exact && last_interval_rate(2.0, 0.5) == 2.0;
  return {worst <= 0.01 && last_exact,
          fmt("%zu intervals, 1e5 draws: max |mean * l_k - 1| %.4f (<= 0.01); last-interval rate exact: %s", m, worst,
              last_exact ? "yes" : "no")};
}

SimulationDesign table_design(double b1, double b2) {
  SimulationDesign d;
  d.n = 20;
  d.beta_true = (Eigen::VectorXd(2) << b1, b2).finished();
  d.censoring = UniformCensoring{2.0};
  d.covariates = BernoulliCovariates{0.5};
  return d;
}

// Replications where at least half the representatives ended on the box,
// i.e. the fiducial median sits at the bound.
int box_bound_reps(const ScenarioReport& s, int n_mcmc) {
  int count = 0;
  for (const auto& r : s.replications) count += 2 * r.box_active >= n_mcmc;
  return count;
}

StudyConfig desk_config(std::uint64_t seed) {
  StudyConfig cfg;
  cfg.replications = 100;
  cfg.seed = seed;
  cfg.threads = 1;
  cfg.fiducial.n_mcmc = 200;
  cfg.fiducial.n_burn = 20;
  return cfg;
}

Outcome table_model3() {
  const Clock clock;
  const auto report = run_simulation_study({{"Model 3", table_design(0.5, 1.0)}}, desk_config(707));
  const auto& f = report.scenarios[0].fiducial;
  const double secs = clock.seconds();
  bool ok = secs <= 3600.0;
  for (std::size_t j = 0; j < 2; ++j)
    ok = ok && f.coverage[j] >= 0.85 && f.coverage[j] <= 0.99 && f.mean_ci_length[j] >= 1.8 && f.mean_ci_length[j] <= 3.4;
  return {ok, fmt("coverage %.2f / %.2f (in [0.85, 0.99]), mean CI length %.2f / %.2f (in [1.8, 3.4]), MSE %.3f / %.3f, "
                  "MLE non-converged %d, reps with median on the box %d, %.0f s",
                  f.coverage[0], f.coverage[1], f.mean_ci_length[0], f.mean_ci_length[1], f.mse[0], f.mse[1],
                  report.scenarios[0].mle_nonconverged, box_bound_reps(report.scenarios[0], 200), secs)};
}

Outcome mle_failure_robustness() {
  const Clock clock;
  const auto report = run_simulation_study({{"Model 1", table_design(-0.5, 0.0)}}, desk_config(808));
  const auto& s = report.scenarios[0];
  int divergent = 0, finite = 0;
  for (const auto& r : s.replications) {
    if (r.mle_converged) continue;
    ++divergent;
    finite += r.fiducial.point_estimate.allFinite() && r.fiducial.ci_lower.allFinite() && r.fiducial.ci_upper.allFinite();
  }
  const bool ok = finite == divergent && s.fiducial.mse[0] <= 2.0 && s.fiducial.mse[1] <= 2.0;
  return {ok, fmt("%d MLE-divergent reps, %d with finite fiducial estimate and CI; fiducial MSE %.3f / %.3f (<= 2.0); "
                  "MLE MSE over converged reps %.3f / %.3f; reps with median on the box %d; %.0f s",
                  divergent, finite, s.fiducial.mse[0], s.fiducial.mse[1], s.mle_excluded.mse[0], s.mle_excluded.mse[1],
                  box_bound_reps(s, 200), clock.seconds())};
}

Outcome bvm_sanity() {
  const Clock clock;
  SimulationDesign d;
  d.n = 200;
  d.beta_true = Eigen::VectorXd::Constant(1, 0.5);
  d.covariates = NormalCovariates{};
  Rng data_rng(909);
  const auto rs = build_risk_structure(generate_standard(d, data_rng));
  const auto mle = newton_mle(rs);
  FiducialConfig cfg;
  cfg.n_mcmc = 1000;
  cfg.n_burn = 100;
  cfg.seed = 909;
  const auto samples = run_gibbs(rs, mle, cfg);
  const Eigen::VectorXd col = samples.draws.col(0);
  const double sd = std::sqrt((col.array() - col.mean()).square().sum() / static_cast<double>(col.size() - 1));
  const auto se = mle.standard_errors();
  if (!mle.converged || !se) return {false, "MLE did not converge on the n=200 dataset"};
  const double ratio = sd / (*se)(0);
  return {std::abs(ratio - 1.0) <= 0.2,
          fmt("%zu failures: fiducial sd %.4f, MLE SE %.4f, ratio %.3f (within 20%%), ESS %.0f, %.0f s", rs.m(), sd, (*se)(0), ratio,
              samples.effective_sample_size(0), clock.seconds())};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome reproducibility() {
  const std::string cli = FIDUX_CLI_PATH;
  const std::string dir = FIDUX_BINARY_DIR;
  const std::string data = FIDUX_DATA_DIR;
  const auto run = [&](const std::string& args, const std::string& out) {
    const std::string cmd = "\"" + cli + "\" " + args + " -o \"" + out + "\" 2>/dev/null";
    return std::system(cmd.c_str()) == 0;
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, args] : std::vector<std::pair<std::string, std::string>>{
           {"fit", "fit \"" + data + "/example6.csv\" --seed 11 --baseline-draws 50"},
           {"fit-monotone", "fit \"" + data + "/monotone.csv\" --seed 12"},
           {"simulate", "simulate \"" + data + "/smoke.json\" --reps 3 --seed 13 --threads 1 --details"},
           {"simulate-threads", "simulate \"" + data + "/smoke.json\" --reps 3 --seed 13 --threads 4 --details"}}) {
    const std::string a = dir + "/repro_" + name + "_a.json", b = dir + "/repro_" + name + "_b.json";
    const bool ran = run(args, a) && run(args, b);
    const std::string ja = slurp(a), jb = slurp(b);
    const bool same = ran && !ja.empty() && ja == jb;
    ok = ok && same;
    detail += name + (same ? " identical (" + std::to_string(ja.size()) + " bytes); " : " DIFFERS; ");
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"derivative correctness", derivatives},
      {"solver equivalence", solver_equivalence},
      {"chain feasibility", chain_feasibility},
      {"density oracle", density_oracle},
      {"sequential DGA equivalence", proposition_one},
      {"baseline sampler", baseline_sampler},
      {"desk-scale Model 3 study", table_model3},
      {"MLE-failure robustness (Model 1)", mle_failure_robustness},
      {"fiducial spread vs MLE standard error", bvm_sanity},
      {"report reproducibility", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failed += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " [" << number << "] " << criteria[i].first << ": " << out.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
