#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "balancer/allocators.hpp"
#include "balancer/inference.hpp"
#include "balancer/model.hpp"
#include "balancer/rng.hpp"

namespace balancer {

/// Covariate law for synthetic experiments. The heavy-tailed law is
/// exploratory only; the distributional checks assume the normal law.
struct CovariateGenerator {
  enum class Kind { standard_normal, student_t };
  Kind kind = Kind::standard_normal;
  double t_dof = 3.0;

  UnitTable sample(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) const {
    UnitTable t;
    t.X.resize(n, p);
    if (kind == Kind::standard_normal) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) t.X(i, j) = normal(rng);
    } else {
      std::student_t_distribution<double> st(t_dof);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) t.X(i, j) = st(rng);
    }
    return t;
  }
};

/// Which covariance the balance criterion uses: the per-table sample estimate
/// (practice) or the generator's known identity (matches the stated laws).
enum class CovSource { sample, known_identity };

/// One allocator under test inside an experiment.
struct AllocatorSpec {
  Method method = Method::CR;
  double cam_q = 0.75;
  bool cam_shuffle = true;
  std::optional<double> rr_threshold;
  std::optional<double> rr_acceptance;
  long rr_max_iters = 1'000'000;
  CrMode cr_mode = CrMode::balanced;

  std::string label() const {
    switch (method) {
      case Method::CAM: return "cam";
      case Method::CR: return "cr";
      case Method::RR:
        if (rr_threshold) return "rr_a" + std::to_string(*rr_threshold).substr(0, 6);
        return "rr_pa" + std::to_string(rr_acceptance.value_or(0.0)).substr(0, 4);
    }
    return "?";
  }

  static AllocatorSpec cam(double q = 0.75) {
    AllocatorSpec s;
    s.method = Method::CAM;
    s.cam_q = q;
    return s;
  }
  static AllocatorSpec cr() { return AllocatorSpec{}; }
  static AllocatorSpec rr_with_acceptance(double p_a) {
    AllocatorSpec s;
    s.method = Method::RR;
    s.rr_acceptance = p_a;
    return s;
  }
  static AllocatorSpec rr_with_threshold(double a) {
    AllocatorSpec s;
    s.method = Method::RR;
    s.rr_threshold = a;
    return s;
  }
};

/// A Monte Carlo experiment: a grid of (n, p) cells, a covariate law (or a
/// fixed table), an optional outcome model, and a set of allocators. Each
/// replication's RNG stream is derived from (master_seed, cell, rep), so
/// results do not depend on thread scheduling. Within a replication all
/// allocators see the same covariate draw.
struct ExperimentSpec {
  std::string name;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> grid;  // (n, p)
  long reps = 2000;
  CovariateGenerator generator;
  CovSource cov_source = CovSource::sample;
  std::optional<OutcomeModel> outcome;
  std::vector<AllocatorSpec> allocators;
  std::uint64_t master_seed = 1;
  std::optional<UnitTable> fixed_table;  // overrides the generator when set
  bool record_mean_diff = false;         // keep per-covariate mean differences

  void validate() const {
    if (reps < 1) throw std::invalid_argument("ExperimentSpec: requires reps >= 1");
    if (grid.empty()) throw std::invalid_argument("ExperimentSpec: empty grid");
    if (allocators.empty()) throw std::invalid_argument("ExperimentSpec: no allocators");
    for (auto [n, p] : grid) {
      if (n < 2 || p < 1) throw std::invalid_argument("ExperimentSpec: bad grid cell");
      if (outcome && n <= p + 2)
        throw std::invalid_argument("ExperimentSpec: outcome regression needs n > p+2");
    }
  }
};

struct RepRecord {
  double m = std::numeric_limits<double>::quiet_NaN();
  double tau_hat = std::numeric_limits<double>::quiet_NaN();
  double tau_tilde = std::numeric_limits<double>::quiet_NaN();
  double iterations = 1.0;
  double wall_ms = 0.0;
  bool failed = false;
  Eigen::VectorXd mean_diff;  // filled only when record_mean_diff
};

struct Aggregate {
  long count = 0;
  double mean = 0.0;
  double var = 0.0;      // unbiased sample variance
  double se_mean = 0.0;  // sd / sqrt(count)
  double se_var = 0.0;   // var * sqrt(2/(count-1)), normal approximation

  static Aggregate of(const std::vector<double>& xs) {
    Aggregate a;
    a.count = static_cast<long>(xs.size());
    if (a.count == 0) return a;
    double s = 0.0;
    for (double x : xs) s += x;
    a.mean = s / static_cast<double>(a.count);
    if (a.count > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - a.mean) * (x - a.mean);
      a.var = ss / static_cast<double>(a.count - 1);
      a.se_mean = std::sqrt(a.var / static_cast<double>(a.count));
      a.se_var = a.var * std::sqrt(2.0 / static_cast<double>(a.count - 1));
    }
    return a;
  }
};

struct CellResult {
  Eigen::Index n = 0, p = 0;
  std::string allocator;
  std::vector<RepRecord> records;
  Aggregate m_stat, tau_hat_stat, tau_tilde_stat, iterations_stat;
  Eigen::VectorXd mean_diff_var;  // per-covariate variance of xbar1 - xbar2
  long failures = 0;
  double total_wall_ms = 0.0;  // excluded from the determinism contract

  void finalize() {
    std::vector<double> ms, th, tt, it;
    ms.reserve(records.size());
    for (const RepRecord& r : records) {
      total_wall_ms += r.wall_ms;
      if (r.failed) {
        ++failures;
        continue;
      }
      ms.push_back(r.m);
      if (!std::isnan(r.tau_hat)) th.push_back(r.tau_hat);
      if (!std::isnan(r.tau_tilde)) tt.push_back(r.tau_tilde);
      it.push_back(r.iterations);
    }
    m_stat = Aggregate::of(ms);
    tau_hat_stat = Aggregate::of(th);
    tau_tilde_stat = Aggregate::of(tt);
    iterations_stat = Aggregate::of(it);
    if (!records.empty() && records.front().mean_diff.size() > 0) {
      const Eigen::Index p_dim = records.front().mean_diff.size();
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(p_dim);
      long cnt = 0;
      for (const RepRecord& r : records)
        if (!r.failed) {
          mean += r.mean_diff;
          ++cnt;
        }
      if (cnt > 1) {
        mean /= static_cast<double>(cnt);
        Eigen::VectorXd ss = Eigen::VectorXd::Zero(p_dim);
        for (const RepRecord& r : records)
          if (!r.failed) ss += (r.mean_diff - mean).cwiseAbs2();
        mean_diff_var = ss / static_cast<double>(cnt - 1);
      }
    }
  }
};

namespace detail {

inline Eigen::VectorXd raw_mean_difference(const UnitTable& table, const Allocation& alloc) {
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(table.p());
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(table.p());
  long n1 = 0, n2 = 0;
  for (Eigen::Index i = 0; i < table.n(); ++i) {
    if (alloc.arms[static_cast<std::size_t>(i)] == 1) {
      s1 += table.X.row(i).transpose();
      ++n1;
    } else {
      s2 += table.X.row(i).transpose();
      ++n2;
    }
  }
  return s1 / static_cast<double>(std::max(1L, n1)) - s2 / static_cast<double>(std::max(1L, n2));
}

inline void run_one_rep(const ExperimentSpec& spec, std::size_t cell_idx, std::size_t alloc_idx,
                        long rep, const UnitTable* fixed, const CovarianceModel* fixed_cov,
                        RepRecord& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto [n, p] = spec.grid[cell_idx];
  const AllocatorSpec& aspec = spec.allocators[alloc_idx];
  const auto path_seed = [&](std::uint64_t tag) {
    return derive_seed(spec.master_seed,
                       {static_cast<std::uint64_t>(cell_idx), static_cast<std::uint64_t>(rep), tag});
  };

  try {
    UnitTable local;
    const UnitTable* table = fixed;
    if (table == nullptr) {
      auto rng = make_engine(path_seed(0));
      local = spec.generator.sample(n, p, rng);
      table = &local;
    }
    CovarianceModel local_cov;
    const CovarianceModel* cov = fixed_cov;
    if (cov == nullptr) {
      local_cov = spec.cov_source == CovSource::known_identity
                      ? known_covariance(Eigen::MatrixXd::Identity(p, p))
                      : estimate_covariance(*table);
      cov = &local_cov;
    }

    Allocation alloc;
    out.iterations = 1.0;
    switch (aspec.method) {
      case Method::CR:
        alloc = allocate_cr(*table, path_seed(1 + alloc_idx), aspec.cr_mode);
        out.m = mahalanobis(*table, *cov, alloc);
        break;
      case Method::CAM: {
        CamParams cp;
        cp.q = aspec.cam_q;
        cp.shuffle = aspec.cam_shuffle;
        cp.seed = path_seed(1 + alloc_idx);
        CamResult res = allocate_cam(*table, *cov, cp);
        alloc = std::move(res.allocation);
        out.m = mahalanobis(*table, *cov, alloc);
        break;
      }
      case Method::RR: {
        RerandParams rp;
        rp.threshold = aspec.rr_threshold;
        rp.acceptance_prob = aspec.rr_acceptance;
        rp.max_iters = aspec.rr_max_iters;
        rp.seed = path_seed(1 + alloc_idx);
        RerandResult res = allocate_rr(*table, *cov, rp);
        alloc = std::move(res.allocation);
        out.m = res.final_m;
        out.iterations = static_cast<double>(res.iterations);
        break;
      }
    }

    if (spec.outcome) {
      const Eigen::VectorXd y =
          simulate_outcomes(*table, alloc, *spec.outcome, path_seed(101 + alloc_idx));
      out.tau_hat = tau_hat(y, alloc);
      out.tau_tilde = tau_tilde(y, *table, alloc).tau;
    }
    if (spec.record_mean_diff) out.mean_diff = raw_mean_difference(*table, alloc);
  } catch (const std::exception&) {
    out.failed = true;
  }
  out.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Runs every (cell, allocator) combination for spec.reps replications.
/// Replications may run on up to `jobs` threads; aggregates are reduced in
/// replication order afterwards, so they are identical for any job count.
inline std::vector<CellResult> run_experiment(const ExperimentSpec& spec, int jobs = 1) {
  spec.validate();
  if (jobs < 1) jobs = 1;

  const UnitTable* fixed = spec.fixed_table ? &*spec.fixed_table : nullptr;
  std::vector<CellResult> results;
  for (std::size_t ci = 0; ci < spec.grid.size(); ++ci) {
    std::optional<CovarianceModel> fixed_cov;
    if (fixed != nullptr) {
      fixed_cov = spec.cov_source == CovSource::known_identity
                      ? known_covariance(Eigen::MatrixXd::Identity(fixed->p(), fixed->p()))
                      : estimate_covariance(*fixed);
    }
    for (std::size_t ai = 0; ai < spec.allocators.size(); ++ai) {
      CellResult cell;
      cell.n = fixed ? fixed->n() : spec.grid[ci].first;
      cell.p = fixed ? fixed->p() : spec.grid[ci].second;
      cell.allocator = spec.allocators[ai].label();
      cell.records.resize(static_cast<std::size_t>(spec.reps));

      std::atomic<long> next{0};
      auto worker = [&]() {
        for (;;) {
          const long r = next.fetch_add(1);
          if (r >= spec.reps) return;
          detail::run_one_rep(spec, ci, ai, r, fixed, fixed_cov ? &*fixed_cov : nullptr,
                              cell.records[static_cast<std::size_t>(r)]);
        }
      };
      if (jobs == 1) {
        worker();
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }
      cell.finalize();
      results.push_back(std::move(cell));
    }
  }
  return results;
}

struct ConvergenceFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double intercept_se = 0.0;
};

/// Least-squares line through (1/n, E[M]) pairs. Point standard errors
/// propagate into the intercept's standard error.
inline ConvergenceFit convergence_fit(const std::vector<Eigen::Index>& ns,
                                      const std::vector<double>& mean_m,
                                      const std::vector<double>& se_m = {}) {
  if (ns.size() < 4 || ns.size() != mean_m.size())
    throw std::invalid_argument("convergence_fit: requires >= 4 matched grid points");
  const std::size_t k = ns.size();
  double sx = 0.0, sy = 0.0;
  std::vector<double> x(k);
  for (std::size_t i = 0; i < k; ++i) {
    x[i] = 1.0 / static_cast<double>(ns[i]);
    sx += x[i];
    sy += mean_m[i];
  }
  const double xbar = sx / static_cast<double>(k);
  const double ybar = sy / static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (mean_m[i] - ybar);
  }
  ConvergenceFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double pred = fit.intercept + fit.slope * x[i];
    sse += (mean_m[i] - pred) * (mean_m[i] - pred);
    sst += (mean_m[i] - ybar) * (mean_m[i] - ybar);
  }
  fit.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  if (se_m.size() == k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double c = 1.0 / static_cast<double>(k) - xbar * (x[i] - xbar) / sxx;
      acc += c * c * se_m[i] * se_m[i];
    }
    fit.intercept_se = std::sqrt(acc);
  }
  return fit;
}

/// The four-cell n*Var table: {tau_hat, tau_tilde} x {CR, CAM} at n=5000, p=4,
/// mu1=0, mu2=1, beta=(1,1,1,1), eps ~ N(0,36).
struct Table3Result {
  long reps = 0;
  double nvar_tau_hat_cr = 0.0, nvar_tau_tilde_cr = 0.0;
  double nvar_tau_hat_cam = 0.0, nvar_tau_tilde_cam = 0.0;
  double se_tau_hat_cr = 0.0, se_tau_tilde_cr = 0.0;
  double se_tau_hat_cam = 0.0, se_tau_tilde_cam = 0.0;
};

inline ExperimentSpec table3_spec(long reps, std::uint64_t seed) {
  if (reps < 500) throw std::invalid_argument("table3_experiment: requires reps >= 500");
  ExperimentSpec spec;
  spec.name = "table3";
  spec.grid = {{5000, 4}};
  spec.reps = reps;
  spec.master_seed = seed;
  spec.allocators = {AllocatorSpec::cr(), AllocatorSpec::cam()};
  OutcomeModel om;
  om.mu1 = 0.0;
  om.mu2 = 1.0;
  om.beta = Eigen::VectorXd::Ones(4);
  om.noise_sd = 6.0;
  spec.outcome = om;
  return spec;
}

inline Table3Result table3_summarize(const std::vector<CellResult>& cells, long reps) {
  Table3Result out;
  out.reps = reps;
  const double n = 5000.0;
  for (const CellResult& c : cells) {
    if (c.allocator == "cr") {
      out.nvar_tau_hat_cr = n * c.tau_hat_stat.var;
      out.nvar_tau_tilde_cr = n * c.tau_tilde_stat.var;
      out.se_tau_hat_cr = n * c.tau_hat_stat.se_var;
      out.se_tau_tilde_cr = n * c.tau_tilde_stat.se_var;
    } else {
      out.nvar_tau_hat_cam = n * c.tau_hat_stat.var;
      out.nvar_tau_tilde_cam = n * c.tau_tilde_stat.var;
      out.se_tau_hat_cam = n * c.tau_hat_stat.se_var;
      out.se_tau_tilde_cam = n * c.tau_tilde_stat.se_var;
    }
  }
  return out;
}

inline Table3Result table3_experiment(long reps, std::uint64_t seed, int jobs = 1) {
  return table3_summarize(run_experiment(table3_spec(reps, seed), jobs), reps);
}

/// PRIV of tau_hat per (n, p) cell for every non-CR allocator in the spec,
/// against the CR cell of the same (n, p).
struct PrivCell {
  Eigen::Index n = 0, p = 0;
  std::string allocator;
  double priv_value = 0.0;
  double priv_se = 0.0;      // delta-method from the two variance SEs
  double u_hat = 0.0;        // mean M of this allocator's cell
  double var_tau_hat = 0.0;
  double var_tau_hat_cr = 0.0;
};

inline std::vector<PrivCell> priv_from_cells(const ExperimentSpec& spec,
                                             const std::vector<CellResult>& cells) {
  if (!spec.outcome) throw std::invalid_argument("priv_surface: spec needs an outcome model");
  bool has_cr = false;
  for (const auto& a : spec.allocators) has_cr |= a.method == Method::CR;
  if (!has_cr) throw std::invalid_argument("priv_surface: spec needs a CR baseline");

  std::vector<PrivCell> out;
  for (std::size_t ci = 0; ci < spec.grid.size(); ++ci) {
    const CellResult* cr = nullptr;
    for (const auto& c : cells)
      if (c.n == spec.grid[ci].first && c.p == spec.grid[ci].second && c.allocator == "cr") cr = &c;
    for (const auto& c : cells) {
      if (c.n != spec.grid[ci].first || c.p != spec.grid[ci].second) continue;
      if (c.allocator == "cr") continue;
      PrivCell pc;
      pc.n = c.n;
      pc.p = c.p;
      pc.allocator = c.allocator;
      pc.var_tau_hat = c.tau_hat_stat.var;
      pc.var_tau_hat_cr = cr->tau_hat_stat.var;
      pc.priv_value = priv(pc.var_tau_hat, pc.var_tau_hat_cr);
      const double ratio = pc.var_tau_hat / pc.var_tau_hat_cr;
      const double rel_m = c.tau_hat_stat.se_var / pc.var_tau_hat;
      const double rel_cr = cr->tau_hat_stat.se_var / pc.var_tau_hat_cr;
      pc.priv_se = 100.0 * ratio * std::sqrt(rel_m * rel_m + rel_cr * rel_cr);
      pc.u_hat = c.m_stat.mean;
      out.push_back(pc);
    }
  }
  return out;
}

inline std::vector<PrivCell> priv_surface(const ExperimentSpec& spec, int jobs = 1) {
  return priv_from_cells(spec, run_experiment(spec, jobs));
}

/// Synthetic stand-in for a small clinical covariate file: ~60% continuous
/// 0-10-scale columns and ~40% binary ones, mildly correlated through a latent
/// factor. An outcome model is fitted by OLS to outcomes simulated under one
/// initial randomization; its residual pool drives resample-mode noise.
struct SurrogateData {
  UnitTable table;
  OutcomeModel fitted;                // resample noise law
  std::vector<double> residual_pool;  // same pool as fitted.residual_pool
  double original_m = 0.0;            // balance of the initial randomization
};

inline UnitTable replicate_rows(const UnitTable& table, int k) {
  if (k < 1) throw std::invalid_argument("replicate_rows: k >= 1");
  UnitTable out;
  out.X.resize(table.n() * k, table.p());
  for (int r = 0; r < k; ++r) {
    out.X.middleRows(r * table.n(), table.n()) = table.X;
    for (Eigen::Index i = 0; i < table.n(); ++i)
      out.ids.push_back(table.id_of(i) + (k > 1 ? "_r" + std::to_string(r + 1) : ""));
  }
  return out;
}

inline SurrogateData surrogate_real_data(Eigen::Index n_units, Eigen::Index p,
                                         std::uint64_t seed) {
  if (n_units < p + 10) throw InsufficientData("surrogate_real_data: requires n >= p + 10");
  auto rng = make_stream(seed, {0xC6u});
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::Index n_cont = (6 * p + 5) / 10;  // round(0.6 p)
  UnitTable table;
  table.X.resize(n_units, p);
  for (Eigen::Index i = 0; i < n_units; ++i) {
    const double factor = normal(rng);  // shared latent severity
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j < n_cont) {
        const double v = 5.0 + 1.8 * (0.55 * factor + 0.9 * normal(rng));
        table.X(i, j) = std::min(10.0, std::max(0.0, v));
      } else {
        table.X(i, j) = (0.5 * factor + normal(rng)) > 0.0 ? 1.0 : 0.0;
      }
    }
    table.ids.push_back("u" + std::to_string(i + 1));
  }

  // True generating model; noise scaled so the fitted R^2 lands near 1/3.
  OutcomeModel truth;
  truth.mu1 = 0.0;
  truth.mu2 = 1.0;
  truth.beta = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) truth.beta[j] = (j % 3 == 0 ? 0.4 : 0.15);
  const CovarianceModel cov = estimate_covariance(table);
  const double signal = truth.beta.dot(cov.sigma * truth.beta);
  truth.noise_sd = std::sqrt(2.0 * signal);  // R^2 = signal/(signal + 2 signal) = 1/3

  const Allocation original = allocate_cr(table, derive_seed(seed, {0xA110u}));
  const Eigen::VectorXd y = simulate_outcomes(table, original, truth, derive_seed(seed, {0xF00Du}));

  const OlsResult fit = tau_tilde(y, table, original);
  SurrogateData out;
  out.fitted.mu1 = fit.coefficients[0];
  out.fitted.mu2 = fit.coefficients[1];
  out.fitted.beta = fit.coefficients.tail(p);
  out.fitted.noise_law = OutcomeModel::NoiseLaw::resample;
  const Eigen::VectorXd resid = y - detail::arm_indicator_design(table, original, true) *
                                        fit.coefficients;
  out.residual_pool.assign(resid.data(), resid.data() + resid.size());
  out.fitted.residual_pool = out.residual_pool;
  out.fitted.noise_sd = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  out.original_m = mahalanobis(table, cov, original);
  out.table = std::move(table);
  return out;
}

/// Rerandomization effort needed to match the adaptive allocator's realized
/// balance: the RR threshold is pinned to the median adaptive M, then RR
/// iteration counts are measured at that threshold.
struct MatchedRrCost {
  double matched_threshold = 0.0;  // median adaptive M
  double median_iterations = 0.0;
  double mean_iterations = 0.0;
  long failures = 0;  // RR draws that exhausted max_iters
};

inline MatchedRrCost match_rr_to_cam(Eigen::Index n, Eigen::Index p, long reps,
                                     std::uint64_t seed, long rr_max_iters = 200'000) {
  ExperimentSpec cam_spec;
  cam_spec.name = "match_cam";
  cam_spec.grid = {{n, p}};
  cam_spec.reps = reps;
  cam_spec.master_seed = seed;
  cam_spec.cov_source = CovSource::known_identity;
  cam_spec.allocators = {AllocatorSpec::cam()};
  auto cam_cells = run_experiment(cam_spec);
  std::vector<double> ms;
  for (const auto& r : cam_cells.front().records)
    if (!r.failed) ms.push_back(r.m);
  std::sort(ms.begin(), ms.end());
  MatchedRrCost out;
  out.matched_threshold = ms[ms.size() / 2];

  ExperimentSpec rr_spec = cam_spec;
  rr_spec.name = "match_rr";
  rr_spec.master_seed = derive_seed(seed, {0x5252u});
  auto rr = AllocatorSpec::rr_with_threshold(out.matched_threshold);
  rr.rr_max_iters = rr_max_iters;
  rr_spec.allocators = {rr};
  auto rr_cells = run_experiment(rr_spec);
  std::vector<double> iters;
  for (const auto& r : rr_cells.front().records)
    if (!r.failed) iters.push_back(r.iterations);
  out.failures = rr_cells.front().failures;
  if (!iters.empty()) {
    std::sort(iters.begin(), iters.end());
    out.median_iterations = iters[iters.size() / 2];
    double s = 0.0;
    for (double v : iters) s += v;
    out.mean_iterations = s / static_cast<double>(iters.size());
  }
  return out;
}

}  // namespace balancer
