// balancer: covariate-balancing randomization from the command line.
//
//   balancer allocate --input units.csv --method cam --output alloc.csv
//   balancer simulate table3 --reps 2000 --seed 1 --out results/
//   balancer timing --C 10 --R 1 --D 5
//
// Exit codes: 0 success, 2 configuration/parse/I-O error, 3 allocator error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "balancer/balancer.hpp"

namespace fs = std::filesystem;
using namespace balancer;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAllocator = 3;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BALANCER_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "warning: ignoring non-numeric BALANCER_SEED\n";
    }
  }
  return 1;
}

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw CsvError(path.string(), 0, 0, "cannot open for writing");
  out << j.dump(2) << '\n';
}

struct AllocateOptions {
  std::string input;
  std::string output;
  std::string method = "cam";
  double q = 0.75;
  std::optional<double> pa;
  std::optional<double> a;
  long max_iters = 1'000'000;
  std::optional<std::uint64_t> seed;
  bool no_shuffle = false;
  bool cr_independent = false;
};

int run_allocate(const AllocateOptions& opt) {
  UnitTable table;
  try {
    table = read_unit_table_csv(opt.input);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const std::uint64_t seed = opt.seed.value_or(default_seed());
  try {
    const CovarianceModel cov = estimate_covariance(table);
    Allocation alloc;
    if (opt.method == "cam") {
      CamParams params;
      params.q = opt.q;
      params.seed = seed;
      params.shuffle = !opt.no_shuffle;
      alloc = allocate_cam(table, cov, params).allocation;
    } else if (opt.method == "cr") {
      alloc = allocate_cr(table, seed,
                          opt.cr_independent ? CrMode::independent : CrMode::balanced);
    } else if (opt.method == "rr") {
      RerandParams params;
      params.threshold = opt.a;
      params.acceptance_prob = opt.pa;
      if (!opt.a && !opt.pa) params.acceptance_prob = 0.3;
      params.max_iters = opt.max_iters;
      params.seed = seed;
      alloc = allocate_rr(table, cov, params).allocation;
    } else {
      std::cerr << "error: unknown method '" << opt.method << "' (cam, cr, rr)\n";
      return kExitConfig;
    }

    const double final_m = mahalanobis(table, cov, alloc);
    write_allocation_csv(opt.output, table, alloc);
    write_json(opt.output + ".json",
               allocation_sidecar(alloc, final_m, cov.regularization, iso_timestamp()));
    std::cout << "wrote " << opt.output << " (" << alloc.count_arm(1) << "/" << alloc.count_arm(2)
              << " units, M = " << final_m << ")\n";
    return 0;
  } catch (const AcceptanceExhausted& e) {
    std::cerr << "allocator error: " << e.what() << '\n';
    return kExitAllocator;
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "allocator error: " << e.what() << '\n';
    return kExitAllocator;
  }
}

struct SimulateOptions {
  std::string experiment;
  long reps = 2000;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int jobs = 1;
  int p = 4;
  int replicate = 1;
};

void write_experiment_outputs(const fs::path& dir, const std::string& name,
                              std::uint64_t seed, long reps,
                              const std::vector<CellResult>& cells, nlohmann::json extra) {
  fs::create_directories(dir);
  nlohmann::json summary;
  summary["schema_version"] = 1;
  summary["experiment"] = name;
  summary["master_seed"] = seed;
  summary["reps"] = reps;
  summary["timestamp"] = iso_timestamp();
  summary["cells"] = nlohmann::json::array();
  for (const CellResult& c : cells) {
    const std::string stem =
        "cell_n" + std::to_string(c.n) + "_p" + std::to_string(c.p) + "_" + c.allocator;
    write_cell_csv((dir / (stem + ".csv")).string(), c);
    nlohmann::json cj = cell_summary_json(c);
    cj["csv"] = stem + ".csv";
    summary["cells"].push_back(cj);
  }
  if (!extra.is_null()) summary["analysis"] = std::move(extra);
  write_json(dir / "summary.json", summary);
}

int run_simulate(const SimulateOptions& opt) {
  const std::uint64_t seed = opt.seed.value_or(default_seed());
  const fs::path dir = fs::path(opt.out_dir) / opt.experiment;

  try {
    if (opt.experiment == "figure1") {
      ExperimentSpec spec;
      spec.name = "figure1";
      spec.grid = {{50, 2}, {100, 2}, {200, 2}, {400, 2},
                   {50, 5}, {100, 5}, {200, 5}, {400, 5},
                   {50, 10}, {100, 10}, {200, 10}, {400, 10}};
      spec.reps = opt.reps;
      spec.master_seed = seed;
      spec.cov_source = CovSource::known_identity;
      spec.allocators = {AllocatorSpec::cam(), AllocatorSpec::rr_with_acceptance(0.3)};
      const auto cells = run_experiment(spec, opt.jobs);
      std::printf("%6s %4s %-8s %12s %12s\n", "n", "p", "method", "mean M", "sd M");
      for (const auto& c : cells)
        std::printf("%6ld %4ld %-8s %12.4f %12.4f\n", static_cast<long>(c.n),
                    static_cast<long>(c.p), c.allocator.c_str(), c.m_stat.mean,
                    std::sqrt(c.m_stat.var));
      write_experiment_outputs(dir, spec.name, seed, opt.reps, cells, nullptr);
    } else if (opt.experiment == "figure3") {
      ExperimentSpec spec;
      spec.name = "figure3";
      const std::vector<Eigen::Index> ns = {100, 200, 400, 800};
      for (Eigen::Index n : ns) spec.grid.push_back({n, opt.p});
      spec.reps = opt.reps;
      spec.master_seed = seed;
      spec.cov_source = CovSource::known_identity;
      spec.allocators = {AllocatorSpec::cam(), AllocatorSpec::cr()};
      const auto cells = run_experiment(spec, opt.jobs);

      std::vector<double> cam_means, cam_ses, cr_means;
      for (Eigen::Index n : ns)
        for (const auto& c : cells)
          if (c.n == n) {
            if (c.allocator == "cam") {
              cam_means.push_back(c.m_stat.mean);
              cam_ses.push_back(c.m_stat.se_mean);
            } else {
              cr_means.push_back(c.m_stat.mean);
            }
          }
      const ConvergenceFit fit = convergence_fit(ns, cam_means, cam_ses);
      std::printf("%6s %14s %14s\n", "n", "E[M] cam", "E[M] cr");
      for (std::size_t i = 0; i < ns.size(); ++i)
        std::printf("%6ld %14.5f %14.5f\n", static_cast<long>(ns[i]), cam_means[i], cr_means[i]);
      std::printf("fit E[M] = %.5f + %.4f / n   (r2 = %.5f, intercept se = %.5f)\n",
                  fit.intercept, fit.slope, fit.r2, fit.intercept_se);
      nlohmann::json extra = {{"slope", fit.slope},
                              {"intercept", fit.intercept},
                              {"r2", fit.r2},
                              {"intercept_se", fit.intercept_se}};
      write_experiment_outputs(dir, spec.name, seed, opt.reps, cells, extra);
    } else if (opt.experiment == "figure4") {
      ExperimentSpec spec;
      spec.name = "figure4";
      const std::vector<Eigen::Index> ns = {100, 400, 1600};
      for (Eigen::Index n : ns) spec.grid.push_back({n, opt.p});
      spec.reps = opt.reps;
      spec.master_seed = seed;
      spec.cov_source = CovSource::known_identity;
      spec.record_mean_diff = true;
      spec.allocators = {AllocatorSpec::cr(), AllocatorSpec::cam(),
                         AllocatorSpec::rr_with_acceptance(0.1)};
      OutcomeModel om;
      om.mu1 = 0.0;
      om.mu2 = 1.0;
      om.beta = Eigen::VectorXd::Ones(opt.p);
      om.noise_sd = 1.0;
      spec.outcome = om;
      const auto cells = run_experiment(spec, opt.jobs);
      const auto privs = priv_from_cells(spec, cells);
      const double r2_pop =
          om.population_r_squared(Eigen::MatrixXd::Identity(opt.p, opt.p));
      std::printf("population R^2 = %.4f\n", r2_pop);
      std::printf("%6s %4s %-8s %10s %10s %10s\n", "n", "p", "method", "PRIV", "se", "u_hat");
      for (const auto& pc : privs)
        std::printf("%6ld %4ld %-8s %10.3f %10.3f %10.4f\n", static_cast<long>(pc.n),
                    static_cast<long>(pc.p), pc.allocator.c_str(), pc.priv_value, pc.priv_se,
                    pc.u_hat);
      nlohmann::json extra;
      extra["population_r2"] = r2_pop;
      extra["priv"] = nlohmann::json::array();
      for (const auto& pc : privs) {
        // Both candidate scalings of the covariate-variance factor are logged;
        // only the 1/n trend is asserted anywhere.
        extra["priv"].push_back({{"n", pc.n},
                                 {"p", pc.p},
                                 {"allocator", pc.allocator},
                                 {"priv", pc.priv_value},
                                 {"priv_se", pc.priv_se},
                                 {"u_candidate_mean_m", pc.u_hat},
                                 {"u_candidate_mean_m_over_p", pc.u_hat / pc.p}});
      }
      const double a = chi2_quantile(opt.p, 0.1);
      extra["rr_reference"] = {{"threshold", a},
                               {"v_a_external_formula", rerand_variance_factor(opt.p, a)}};
      write_experiment_outputs(dir, spec.name, seed, opt.reps, cells, extra);
    } else if (opt.experiment == "table3") {
      const ExperimentSpec spec = table3_spec(opt.reps, seed);
      const auto cells = run_experiment(spec, opt.jobs);
      const Table3Result t3 = table3_summarize(cells, opt.reps);
      std::printf("n*Var of treatment-effect estimates at n=5000, p=4 (%ld reps)\n", t3.reps);
      std::printf("%-22s %14s %14s\n", "", "tau_hat", "tau_tilde");
      std::printf("%-22s %8.2f (%.2f) %8.2f (%.2f)\n", "complete randomization",
                  t3.nvar_tau_hat_cr, t3.se_tau_hat_cr, t3.nvar_tau_tilde_cr,
                  t3.se_tau_tilde_cr);
      std::printf("%-22s %8.2f (%.2f) %8.2f (%.2f)\n", "adaptive (cam)", t3.nvar_tau_hat_cam,
                  t3.se_tau_hat_cam, t3.nvar_tau_tilde_cam, t3.se_tau_tilde_cam);
      nlohmann::json extra = {
          {"nvar_tau_hat_cr", t3.nvar_tau_hat_cr},
          {"nvar_tau_tilde_cr", t3.nvar_tau_tilde_cr},
          {"nvar_tau_hat_cam", t3.nvar_tau_hat_cam},
          {"nvar_tau_tilde_cam", t3.nvar_tau_tilde_cam},
          {"se_tau_hat_cr", t3.se_tau_hat_cr},
          {"se_tau_tilde_cr", t3.se_tau_tilde_cr},
          {"se_tau_hat_cam", t3.se_tau_hat_cam},
          {"se_tau_tilde_cam", t3.se_tau_tilde_cam},
      };
      write_experiment_outputs(dir, spec.name, seed, opt.reps, cells, extra);
    } else if (opt.experiment == "surrogate") {
      SurrogateData data = surrogate_real_data(186, 50, seed);
      if (opt.replicate > 1) data.table = replicate_rows(data.table, opt.replicate);
      ExperimentSpec spec;
      spec.name = "surrogate";
      spec.grid = {{data.table.n(), data.table.p()}};
      spec.reps = opt.reps;
      spec.master_seed = derive_seed(seed, {0x5EEDu});
      spec.fixed_table = data.table;
      spec.outcome = data.fitted;
      spec.allocators = {AllocatorSpec::cr(), AllocatorSpec::cam(),
                         AllocatorSpec::rr_with_threshold(30.0),
                         AllocatorSpec::rr_with_threshold(40.0)};
      const auto cells = run_experiment(spec, opt.jobs);

      const double tau_true = data.fitted.mu1 - data.fitted.mu2;
      double var_cr = 0.0;
      for (const auto& c : cells)
        if (c.allocator == "cr") var_cr = c.tau_hat_stat.var;
      std::printf("surrogate n=%ld, p=%ld, original M=%.2f, true tau=%.4f\n",
                  static_cast<long>(data.table.n()), static_cast<long>(data.table.p()),
                  data.original_m, tau_true);
      std::printf("%-10s %10s %12s %12s %10s\n", "method", "PRIV", "MSE", "mean M", "fails");
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& c : cells) {
        double mse = 0.0;
        long cnt = 0;
        for (const auto& r : c.records)
          if (!r.failed && !std::isnan(r.tau_hat)) {
            mse += (r.tau_hat - tau_true) * (r.tau_hat - tau_true);
            ++cnt;
          }
        mse /= std::max(1L, cnt);
        const double pr = c.allocator == "cr" ? 0.0 : priv(c.tau_hat_stat.var, var_cr);
        std::printf("%-10s %10.2f %12.5f %12.3f %10ld\n", c.allocator.c_str(), pr, mse,
                    c.m_stat.mean, c.failures);
        rows.push_back({{"allocator", c.allocator},
                        {"priv", pr},
                        {"mse", mse},
                        {"mean_m", c.m_stat.mean},
                        {"failures", c.failures}});
      }
      nlohmann::json extra;
      extra["true_tau"] = tau_true;
      extra["original_m"] = data.original_m;
      extra["methods"] = rows;
      write_experiment_outputs(dir, spec.name, seed, opt.reps, cells, extra);
    } else {
      std::cerr << "error: unknown experiment '" << opt.experiment
                << "'; valid names: figure1, figure3, figure4, table3, surrogate\n";
      return kExitConfig;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    // Flush what we know into a failure manifest so partial runs are not lost.
    try {
      fs::create_directories(dir);
      write_json(dir / "failure_manifest.json",
                 {{"experiment", opt.experiment}, {"error", e.what()}});
    } catch (...) {
    }
    std::cerr << "error: " << e.what() << '\n';
    return kExitAllocator;
  }
  return 0;
}

struct TimingOptions {
  std::vector<long> ns = {200, 400, 600};
  std::vector<int> ps = {2, 4, 6, 8, 10, 12};
  double C = 10.0;
  double R = 1.0;
  double D = 5.0;
  std::string out;
};

int run_timing(const TimingOptions& opt) {
  try {
    std::printf("time ratio (adaptive / rerandomization), C=%g R=%g D=%g\n", opt.C, opt.R, opt.D);
    std::printf("%8s", "n\\p");
    for (int p : opt.ps) std::printf(" %12d", p);
    std::printf("\n");
    std::ostringstream csv;
    csv << "n";
    for (int p : opt.ps) csv << ",p" << p;
    csv << "\n";
    for (long n : opt.ns) {
      std::printf("%8ld", n);
      csv << n;
      for (int p : opt.ps) {
        TimeRatioParams params{n, p, opt.C, opt.R, opt.D};
        try {
          const double ratio = time_ratio(params);
          std::printf(" %12.4g", ratio);
          csv << ',' << format_double(ratio);
        } catch (const NoRoot& e) {
          std::printf(" %12s", "no-root");
          csv << ",no-root";
          std::cerr << "warning: n=" << n << " p=" << p << ": " << e.what() << '\n';
        }
      }
      std::printf("\n");
      csv << '\n';
    }
    if (!opt.out.empty()) {
      std::ofstream f(opt.out);
      if (!f) {
        std::cerr << "error: cannot write " << opt.out << '\n';
        return kExitConfig;
      }
      f << csv.str();
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covariate-balancing randomization toolkit"};
  app.require_subcommand(1);

  AllocateOptions alloc_opt;
  CLI::App* alloc_cmd = app.add_subcommand("allocate", "allocate units in a covariate CSV");
  alloc_cmd->add_option("--input", alloc_opt.input, "covariate CSV (unit_id + numeric columns)")
      ->required();
  alloc_cmd->add_option("--output", alloc_opt.output, "allocation CSV to write")->required();
  alloc_cmd->add_option("--method", alloc_opt.method, "cam | cr | rr");
  alloc_cmd->add_option("--q", alloc_opt.q, "biased-coin probability (cam)")
      ->check(CLI::Range(0.5, 1.0));
  alloc_cmd->add_option("--pa", alloc_opt.pa, "acceptance probability (rr)")
      ->check(CLI::Range(0.0, 1.0));
  alloc_cmd->add_option("--a", alloc_opt.a, "balance threshold (rr)");
  alloc_cmd->add_option("--max-iters", alloc_opt.max_iters, "rr iteration cap");
  alloc_cmd->add_option("--seed", alloc_opt.seed, "RNG seed (default: BALANCER_SEED or 1)");
  alloc_cmd->add_flag("--no-shuffle", alloc_opt.no_shuffle, "skip the random arrangement (cam)");
  alloc_cmd->add_flag("--cr-independent", alloc_opt.cr_independent,
                      "independent fair coin per unit instead of a balanced split (cr)");

  SimulateOptions sim_opt;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  sim_cmd->add_option("experiment", sim_opt.experiment,
                      "figure1 | figure3 | figure4 | table3 | surrogate")
      ->required();
  sim_cmd->add_option("--reps", sim_opt.reps, "replications per cell")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_opt.seed, "master seed (default: BALANCER_SEED or 1)");
  sim_cmd->add_option("--out", sim_opt.out_dir, "output directory");
  sim_cmd->add_option("--jobs", sim_opt.jobs, "worker threads")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--p", sim_opt.p, "covariate count for figure3/figure4")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--replicate", sim_opt.replicate, "row replication factor (surrogate)")
      ->check(CLI::PositiveNumber);

  TimingOptions time_opt;
  CLI::App* time_cmd = app.add_subcommand("timing", "analytic time-ratio grid");
  time_cmd->add_option("--n", time_opt.ns, "sample sizes");
  time_cmd->add_option("--p", time_opt.ps, "covariate counts");
  time_cmd->add_option("--C", time_opt.C, "adaptive per-unit-per-covariate cost");
  time_cmd->add_option("--R", time_opt.R, "complete-randomization per-unit cost");
  time_cmd->add_option("--D", time_opt.D, "constant in the a* equation");
  time_cmd->add_option("--out", time_opt.out, "also write the grid as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  if (alloc_cmd->parsed()) return run_allocate(alloc_opt);
  if (sim_cmd->parsed()) return run_simulate(sim_opt);
  if (time_cmd->parsed()) return run_timing(time_opt);
  return kExitConfig;
}
