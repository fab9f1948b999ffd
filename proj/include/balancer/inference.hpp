#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "balancer/balance.hpp"
#include "balancer/errors.hpp"
#include "balancer/model.hpp"
#include "balancer/rng.hpp"

namespace balancer {

/// Generative outcome description: y_i = mu1*[arm1] + mu2*[arm2] + x_i . beta + eps_i.
/// Noise is either N(0, noise_sd^2) or drawn uniformly with replacement from a
/// residual pool.
struct OutcomeModel {
  enum class NoiseLaw { normal, resample };

  double mu1 = 0.0;
  double mu2 = 0.0;
  Eigen::VectorXd beta;
  double noise_sd = 1.0;
  NoiseLaw noise_law = NoiseLaw::normal;
  std::vector<double> residual_pool;

  void validate(Eigen::Index p) const {
    if (beta.size() != p) throw std::invalid_argument("OutcomeModel: beta length must equal p");
    if (noise_law == NoiseLaw::normal && !(noise_sd > 0.0))
      throw std::invalid_argument("OutcomeModel: requires noise_sd > 0");
    if (noise_law == NoiseLaw::resample && residual_pool.empty())
      throw std::invalid_argument("OutcomeModel: resample law needs a residual pool");
  }

  /// Population squared multiple correlation beta'Sigma beta / (beta'Sigma beta + sigma^2).
  double population_r_squared(const Eigen::MatrixXd& sigma) const {
    const double signal = beta.dot(sigma * beta);
    double noise = noise_sd * noise_sd;
    if (noise_law == NoiseLaw::resample) {
      double ss = 0.0, mean = 0.0;
      for (double e : residual_pool) mean += e;
      mean /= static_cast<double>(residual_pool.size());
      for (double e : residual_pool) ss += (e - mean) * (e - mean);
      noise = ss / static_cast<double>(residual_pool.size());
    }
    return signal / (signal + noise);
  }
};

/// Outcomes drawn from the model for a fixed allocation.
inline Eigen::VectorXd simulate_outcomes(const UnitTable& table, const Allocation& alloc,
                                         const OutcomeModel& model, std::uint64_t seed) {
  table.validate();
  model.validate(table.p());
  if (alloc.n() != table.n())
    throw std::invalid_argument("simulate_outcomes: allocation length mismatch");

  const Eigen::Index n = table.n();
  Eigen::VectorXd y = table.X * model.beta;
  auto rng = make_engine(seed);
  if (model.noise_law == OutcomeModel::NoiseLaw::normal) {
    std::normal_distribution<double> noise(0.0, model.noise_sd);
    for (Eigen::Index i = 0; i < n; ++i) y[i] += noise(rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, model.residual_pool.size() - 1);
    for (Eigen::Index i = 0; i < n; ++i) y[i] += model.residual_pool[pick(rng)];
  }
  for (Eigen::Index i = 0; i < n; ++i)
    y[i] += alloc.arms[static_cast<std::size_t>(i)] == 1 ? model.mu1 : model.mu2;
  return y;
}

/// Difference-in-means treatment effect estimate.
inline double tau_hat(const Eigen::VectorXd& y, const Allocation& alloc) {
  if (alloc.n() != y.size()) throw std::invalid_argument("tau_hat: length mismatch");
  double s1 = 0.0, s2 = 0.0;
  long n1 = 0, n2 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (alloc.arms[static_cast<std::size_t>(i)] == 1) {
      s1 += y[i];
      ++n1;
    } else {
      s2 += y[i];
      ++n2;
    }
  }
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("tau_hat: an arm is empty");
  return s1 / static_cast<double>(n1) - s2 / static_cast<double>(n2);
}

struct OlsResult {
  double tau = 0.0;
  Eigen::VectorXd coefficients;  // (mu1, mu2, beta_1..beta_p)
  double applied_lambda = 0.0;
};

namespace detail {

// Solves A beta = b with A = Xd'Xd. If A is numerically singular, retries with
// the same ridge ladder used for covariance; SingularDesign if that fails too.
inline OlsResult solve_normal_equations(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::Index k = design.cols();
  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::VectorXd rhs = design.transpose() * y;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  double lambda = 0.0;
  if (!(max_eig > 0.0) || min_eig < 1e-10 * max_eig) {
    const double scale = std::max(gram.trace() / static_cast<double>(k), 1.0e-30);
    lambda = 1e-8 * scale;
    while (min_eig + lambda < 1e-10 * (max_eig + lambda)) {
      lambda *= 100.0;
      if (lambda > scale * 1e6) throw SingularDesign("design matrix rank-deficient beyond ridge");
    }
    gram.diagonal().array() += lambda;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw SingularDesign("normal equations factorization failed");

  OlsResult out;
  out.coefficients = ldlt.solve(rhs);
  out.applied_lambda = lambda;
  return out;
}

inline Eigen::MatrixXd arm_indicator_design(const UnitTable& table, const Allocation& alloc,
                                            bool with_covariates) {
  const Eigen::Index n = table.n();
  const Eigen::Index p = with_covariates ? table.p() : 0;
  Eigen::MatrixXd design(n, 2 + p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool arm1 = alloc.arms[static_cast<std::size_t>(i)] == 1;
    design(i, 0) = arm1 ? 1.0 : 0.0;
    design(i, 1) = arm1 ? 0.0 : 1.0;
  }
  if (with_covariates) design.rightCols(p) = table.X;
  return design;
}

}  // namespace detail

/// Covariate-adjusted OLS treatment effect: regress y on both arm indicators
/// (no intercept) plus the covariates, and report mu1_hat - mu2_hat.
inline OlsResult tau_tilde(const Eigen::VectorXd& y, const UnitTable& table,
                           const Allocation& alloc, bool with_covariates = true) {
  table.validate();
  if (alloc.n() != table.n() || y.size() != table.n())
    throw std::invalid_argument("tau_tilde: length mismatch");
  OlsResult out;
  if (with_covariates) {
    out = detail::solve_normal_equations(detail::arm_indicator_design(table, alloc, true), y);
  } else {
    // The arm-indicator-only design is orthogonal; OLS reduces to the two
    // group means, which keeps tau_tilde identical to tau_hat.
    double s1 = 0.0, s2 = 0.0;
    long n1 = 0, n2 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (alloc.arms[static_cast<std::size_t>(i)] == 1) {
        s1 += y[i];
        ++n1;
      } else {
        s2 += y[i];
        ++n2;
      }
    }
    if (n1 == 0 || n2 == 0) throw SingularDesign("tau_tilde: an arm is empty");
    out.coefficients = Eigen::Vector2d(s1 / static_cast<double>(n1), s2 / static_cast<double>(n2));
  }
  out.tau = out.coefficients[0] - out.coefficients[1];
  return out;
}

/// Pooled within-group squared multiple correlation of y on the covariates:
/// 1 - sum_g SSE_g / sum_g SST_g over the two arms.
inline double r_squared(const Eigen::VectorXd& y, const UnitTable& table, const Allocation& alloc) {
  table.validate();
  if (alloc.n() != table.n() || y.size() != table.n())
    throw std::invalid_argument("r_squared: length mismatch");
  const Eigen::Index p = table.p();

  double sse = 0.0, sst = 0.0;
  for (int arm : {1, 2}) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < table.n(); ++i)
      if (alloc.arms[static_cast<std::size_t>(i)] == arm) rows.push_back(i);
    if (static_cast<Eigen::Index>(rows.size()) <= p + 1)
      throw InsufficientData("r_squared: arm needs more than p+1 units");

    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd design(m, p + 1);
    Eigen::VectorXd yy(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      design(r, 0) = 1.0;
      design.row(r).tail(p) = table.X.row(rows[static_cast<std::size_t>(r)]);
      yy[r] = y[rows[static_cast<std::size_t>(r)]];
    }
    const OlsResult fit = detail::solve_normal_equations(design, yy);
    sse += (yy - design * fit.coefficients).squaredNorm();
    sst += (yy.array() - yy.mean()).square().sum();
  }
  if (sst <= 0.0) return 0.0;  // constant outcome: nothing to explain
  const double r2 = 1.0 - sse / sst;
  return std::min(1.0, std::max(0.0, r2));
}

/// Percent reduction in variance relative to complete randomization.
inline double priv(double var_method, double var_cr) {
  if (!(var_cr > 0.0)) throw std::invalid_argument("priv: requires var_cr > 0");
  return 100.0 * (var_cr - var_method) / var_cr;
}

/// Everything one replication reports.
struct EstimateReport {
  double tau_hat = 0.0;
  double tau_tilde = 0.0;
  long n = 0;
  long p = 0;
  double m_final = 0.0;
  double r_squared = 0.0;
  double applied_lambda = 0.0;
};

inline EstimateReport make_report(const UnitTable& table, const CovarianceModel& cov,
                                  const Allocation& alloc, const Eigen::VectorXd& y) {
  EstimateReport rep;
  rep.n = table.n();
  rep.p = table.p();
  rep.tau_hat = tau_hat(y, alloc);
  const OlsResult ols = tau_tilde(y, table, alloc);
  rep.tau_tilde = ols.tau;
  rep.applied_lambda = std::max(cov.regularization, ols.applied_lambda);
  rep.m_final = mahalanobis(table, cov, alloc);
  rep.r_squared = r_squared(y, table, alloc);
  return rep;
}

}  // namespace balancer
