#include <fidux/fidux.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kInputError = 2, kNumericalError = 3 };

fidux::SurvivalDataset read_csv(const std::string& path, const fidux::CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw fidux::DataError("cannot open '" + path + "'");
  return fidux::load_dataset(in, schema);
}

void write_json(const fidux::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw fidux::ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

struct SchemaFlags {
  std::string time = "time";
  std::string status = "status";
  std::vector<std::string> covariates;
  char delimiter = ',';

  void attach(CLI::App* cmd) {
    cmd->add_option("--time-col", time, "time column name")->capture_default_str();
    cmd->add_option("--status-col", status, "status column name (1 = failure, 0 = censored)")->capture_default_str();
    cmd->add_option("--covariates", covariates, "covariate column names; default x1, x2, ...")->delimiter(',');
    cmd->add_option("--delimiter", delimiter, "field delimiter")->capture_default_str();
  }

  fidux::CsvSchema schema() const { return {time, status, covariates, delimiter}; }
};

struct ChainFlags {
  int n_mcmc = 400;
  int n_burn = 40;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  double box = 30.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--n-mcmc", n_mcmc, "retained Gibbs sweeps")->capture_default_str();
    cmd->add_option("--n-burn", n_burn, "burn-in sweeps")->capture_default_str();
    cmd->add_option("--seed", seed, "random seed")->capture_default_str();
    cmd->add_option("--alpha", alpha, "interval level is 1 - alpha")->capture_default_str();
    cmd->add_option("--box", box, "coefficient bound on the standardized-covariate scale")->capture_default_str();
  }

  fidux::FiducialConfig config() const {
    fidux::FiducialConfig c;
    c.n_mcmc = n_mcmc;
    c.n_burn = n_burn;
    c.seed = seed;
    c.alpha = alpha;
    c.box_bound = box;
    return c;
  }
};

int cmd_fit(const std::string& path, const SchemaFlags& sf, const ChainFlags& cf, int baseline_draws, bool timing, bool table,
            const std::string& output) {
  const auto data = read_csv(path, sf.schema());
  fidux::FitConfig cfg;
  cfg.fiducial = cf.config();
  cfg.fiducial.validate();
  cfg.baseline_draws = baseline_draws;
  cfg.input = path;
  cfg.covariate_names = sf.covariates;
  const auto start = std::chrono::steady_clock::now();
  auto report = fidux::run_fit(data, cfg);
  if (timing) report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(fidux::to_json(report), output);
  if (table) {
    std::cerr << "coefficient      mle            fiducial      fiducial CI\n";
    for (std::size_t j = 0; j < report.p; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      std::ostringstream mle;
      if (report.mle.converged) {
        mle << report.mle.beta_hat(jj);
      } else {
        mle << "diverged";
      }
      std::cerr << std::left << std::setw(17) << (j < cfg.covariate_names.size() ? cfg.covariate_names[j] : "x" + std::to_string(j + 1))
                << std::setw(15) << mle.str() << std::setw(14) << report.fiducial.point_estimate(jj) << "[" << report.fiducial.ci_lower(jj)
                << ", " << report.fiducial.ci_upper(jj) << "]\n";
    }
  }
  return kOk;
}

int cmd_simulate(const std::string& path, std::optional<int> reps, std::optional<int> n_mcmc,
                 std::optional<int> n_burn, std::optional<std::uint64_t> seed, int threads, bool details, const std::string& output,
                 const std::string& table_path) {
  std::ifstream in(path);
  if (!in) throw fidux::ConfigError("cannot open '" + path + "'");
  fidux::json j;
  try {
    j = fidux::json::parse(in);
  } catch (const fidux::json::exception& e) {
    throw fidux::ConfigError(std::string("scenario file: ") + e.what());
  }
  fidux::StudySpec spec = fidux::parse_study(j);
  if (reps) spec.config.replications = *reps;
  if (n_mcmc) spec.config.fiducial.n_mcmc = *n_mcmc;
  if (n_burn) spec.config.fiducial.n_burn = *n_burn;
  if (seed) spec.config.seed = *seed;
  spec.config.threads = threads;

  const auto report = fidux::run_simulation_study(spec.scenarios, spec.config, [](std::size_t done, std::size_t total) {
    std::cerr << "\rreplication " << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  });
  write_json(fidux::to_json(report, spec.config, details), output);
  const std::string table = fidux::render_table(report);
  if (table_path.empty()) {
    std::cerr << table;
  } else {
    std::ofstream t(table_path);
    if (!t) throw fidux::ConfigError("cannot write '" + table_path + "'");
    t << table;
  }
  return kOk;
}

int cmd_density_check(const std::string& path, const SchemaFlags& sf, const ChainFlags& cf, double threshold, const std::string& output) {
  const auto data = read_csv(path, sf.schema());
  if (data.p() != 1) throw fidux::ConfigError("density-check needs exactly one covariate, got " + std::to_string(data.p()));
  const auto rs = fidux::build_risk_structure(data);
  fidux::DensityModel1d{rs};  // reports a degenerate density before any sampling
  fidux::FiducialConfig cfg = cf.config();
  cfg.validate();
  const auto mle = fidux::newton_mle(rs);
  const auto samples = fidux::run_gibbs(rs, mle, cfg);
  const double bound = fidux::FeasibilityProblem::standardized_box(rs, cfg.box_bound)(0);
  std::vector<double> draws(samples.draws.data(), samples.draws.data() + samples.draws.rows());

  fidux::DensityCheckReport rep;
  rep.seed = cfg.seed;
  rep.config = cfg;
  rep.threshold = threshold;
  rep.mle_converged = mle.converged;
  rep.check = fidux::density_ks(rs, draws, -bound, bound);
  write_json(fidux::to_json(rep), output);
  return rep.check.ks_distance <= threshold ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized fiducial inference for the Cox proportional hazards model"};
  app.require_subcommand(1);

  SchemaFlags fit_schema, dens_schema;
  ChainFlags fit_chain, dens_chain;
  std::string fit_input, fit_output, sim_input, sim_output, sim_table, dens_input, dens_output;
  int baseline_draws = 0;
  bool timing = false, table = false, details = false;
  std::optional<int> reps, n_mcmc, n_burn;
  std::optional<std::uint64_t> sim_seed;
  int threads = 1;
  double threshold = 0.1;

  auto* fit = app.add_subcommand("fit", "fit a dataset: MLE plus fiducial estimates and intervals");
  fit->add_option("csv", fit_input, "input CSV")->required();
  fit_schema.attach(fit);
  fit_chain.attach(fit);
  fit->add_option("--baseline-draws", baseline_draws, "fiducial draws used for the cumulative baseline hazard (0 = off)")
      ->capture_default_str();
  fit->add_flag("--timing", timing, "include wall-clock timing in the report");
  fit->add_flag("--table", table, "print a coefficient table to stderr");
  fit->add_option("-o,--output", fit_output, "JSON output path (default stdout)");

  auto* sim = app.add_subcommand("simulate", "run a simulation study from a scenario file");
  sim->add_option("scenarios", sim_input, "scenario JSON file")->required();
  sim->add_option("--reps", reps, "replications per scenario");
  sim->add_option("--n-mcmc", n_mcmc, "retained Gibbs sweeps");
  sim->add_option("--n-burn", n_burn, "burn-in sweeps");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_flag("--details", details, "include per-replication records");
  sim->add_option("-o,--output", sim_output, "JSON output path (default stdout)");
  sim->add_option("--table", sim_table, "text table output path (default stderr)");

  auto* dens = app.add_subcommand("density-check", "compare chain draws with the one-covariate fiducial density");
  dens->add_option("csv", dens_input, "input CSV with one covariate")->required();
  dens_schema.attach(dens);
  dens_chain.n_mcmc = 2000;
  dens_chain.n_burn = 200;
  dens_chain.attach(dens);
  dens->add_option("--threshold", threshold, "largest accepted KS distance")->capture_default_str();
  dens->add_option("-o,--output", dens_output, "JSON output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInputError;
  }

  try {
    if (*fit) return cmd_fit(fit_input, fit_schema, fit_chain, baseline_draws, timing, table, fit_output);
    if (*sim) return cmd_simulate(sim_input, reps, n_mcmc, n_burn, sim_seed, threads, details, sim_output, sim_table);
    if (*dens) return cmd_density_check(dens_input, dens_schema, dens_chain, threshold, dens_output);
  } catch (const fidux::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fidux::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fidux::DegenerateDensity& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fidux::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
  return kOk;
}
