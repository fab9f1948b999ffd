#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "balancer/errors.hpp"

namespace balancer {

/// n units by p covariates. Rows are units, columns covariates.
struct UnitTable {
  std::vector<std::string> ids;  // one per row; empty means "row index"
  Eigen::MatrixXd X;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    if (X.rows() < 2) throw std::invalid_argument("UnitTable: requires n >= 2");
    if (X.cols() < 1) throw std::invalid_argument("UnitTable: requires p >= 1");
    if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != X.rows())
      throw std::invalid_argument("UnitTable: ids length does not match row count");
    if (!X.allFinite()) throw std::invalid_argument("UnitTable: covariates must be finite");
  }

  std::string id_of(Eigen::Index row) const {
    return ids.empty() ? std::to_string(row + 1) : ids[static_cast<std::size_t>(row)];
  }
};

/// Covariance of the covariates plus a lower-triangular factor W of the
/// (possibly ridge-regularized) precision: W * W^T = (sigma + lambda I)^-1.
/// Whitening with z = W^T x turns Mahalanobis forms into squared norms.
struct CovarianceModel {
  enum class Source { known, sample };

  Eigen::MatrixXd sigma;
  Eigen::MatrixXd precision_factor;  // lower triangular
  double regularization = 0.0;       // lambda actually applied
  Source source = Source::sample;

  Eigen::Index p() const { return sigma.rows(); }
};

enum class Method { CAM, CR, RR };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::CAM: return "cam";
    case Method::CR: return "cr";
    case Method::RR: return "rr";
  }
  return "?";
}

/// Method parameters kept for provenance; unused fields stay NaN.
struct ParamRecord {
  double q = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
  double acceptance_prob = std::numeric_limits<double>::quiet_NaN();
};

/// Arm assignment for every unit, with provenance. Arms are labeled 1 and 2;
/// order records the sequence in which units were allocated.
struct Allocation {
  std::vector<int> arms;             // length n, entries in {1,2}
  Method method = Method::CR;
  ParamRecord params;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> order;   // order[k] = unit allocated k-th

  Eigen::Index n() const { return static_cast<Eigen::Index>(arms.size()); }
  long count_arm(int arm) const {
    long c = 0;
    for (int a : arms) c += (a == arm);
    return c;
  }

  void validate() const {
    if (arms.empty()) throw std::invalid_argument("Allocation: empty");
    for (int a : arms)
      if (a != 1 && a != 2) throw std::invalid_argument("Allocation: arms must be 1 or 2");
    if (order.size() != arms.size())
      throw std::invalid_argument("Allocation: order length does not match");
    std::vector<char> seen(arms.size(), 0);
    for (Eigen::Index u : order) {
      if (u < 0 || u >= n() || seen[static_cast<std::size_t>(u)])
        throw std::invalid_argument("Allocation: order is not a permutation");
      seen[static_cast<std::size_t>(u)] = 1;
    }
  }
};

struct StandardizeResult {
  UnitTable table;
  std::vector<Eigen::Index> zero_variance_columns;
};

/// Centers every column to mean zero and scales unit-variance where possible.
/// Zero-variance columns are centered only and flagged.
inline StandardizeResult standardize(const UnitTable& table) {
  table.validate();
  StandardizeResult out;
  out.table.ids = table.ids;
  out.table.X = table.X;
  const Eigen::Index n = table.n();
  for (Eigen::Index j = 0; j < table.p(); ++j) {
    auto col = out.table.X.col(j);
    col.array() -= col.mean();
    const double var = col.squaredNorm() / static_cast<double>(n - 1);
    if (var > 0.0) {
      col /= std::sqrt(var);
    } else {
      out.zero_variance_columns.push_back(j);
    }
  }
  return out;
}

enum class RidgePolicy { allow, forbid };

namespace detail {

// Factors (sigma + lambda I)^-1 = W W^T with W lower triangular, inflating
// lambda along the ladder {1e-8, 1e-6, ...} * trace/p until the smallest
// eigenvalue clears 1e-10 of the largest.
inline CovarianceModel factor_covariance(Eigen::MatrixXd sigma, CovarianceModel::Source source,
                                         RidgePolicy policy) {
  const Eigen::Index p = sigma.rows();
  if (sigma.cols() != p) throw std::invalid_argument("covariance: sigma must be square");
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("covariance: sigma must be symmetric");
  sigma = 0.5 * (sigma + sigma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  constexpr double kConditionThreshold = 1e-10;

  double lambda = 0.0;
  if (!(max_eig > 0.0) || min_eig < kConditionThreshold * max_eig) {
    if (policy == RidgePolicy::forbid)
      throw std::invalid_argument("covariance: singular and ridge regularization forbidden");
    const double scale = std::max(sigma.trace() / static_cast<double>(p), 1.0e-30);
    lambda = 1e-8 * scale;
    while (min_eig + lambda < kConditionThreshold * (max_eig + lambda)) lambda *= 100.0;
  }

  CovarianceModel model;
  model.sigma = sigma;
  model.regularization = lambda;
  model.source = source;

  Eigen::MatrixXd reg = sigma;
  reg.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt_sigma(reg);
  if (llt_sigma.info() != Eigen::Success)
    throw std::runtime_error("covariance: Cholesky factorization failed");
  // (L L^T)^-1 = L^-T L^-1; Cholesky of that inverse gives the lower factor.
  Eigen::MatrixXd precision = llt_sigma.solve(Eigen::MatrixXd::Identity(p, p));
  precision = (0.5 * (precision + precision.transpose())).eval();
  Eigen::LLT<Eigen::MatrixXd> llt_prec(precision);
  if (llt_prec.info() != Eigen::Success)
    throw std::runtime_error("covariance: precision factorization failed");
  model.precision_factor = llt_prec.matrixL();
  return model;
}

}  // namespace detail

/// Sample covariance of the table (divisor n-1), factored for whitening.
/// Errors when p > n-1 and the policy forbids the ridge repair.
inline CovarianceModel estimate_covariance(const UnitTable& table,
                                           RidgePolicy policy = RidgePolicy::allow) {
  table.validate();
  const Eigen::Index n = table.n();
  if (table.p() > n - 1 && policy == RidgePolicy::forbid)
    throw std::invalid_argument(
        "estimate_covariance: p > n-1 makes the sample covariance singular and ridge is "
        "forbidden");
  Eigen::MatrixXd centered = table.X.rowwise() - table.X.colwise().mean();
  Eigen::MatrixXd sigma =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  return detail::factor_covariance(std::move(sigma), CovarianceModel::Source::sample, policy);
}

/// Wraps an externally known covariance matrix (e.g. the generator's truth).
inline CovarianceModel known_covariance(Eigen::MatrixXd sigma,
                                        RidgePolicy policy = RidgePolicy::allow) {
  return detail::factor_covariance(std::move(sigma), CovarianceModel::Source::known, policy);
}

/// Canonical form: z_i = W^T x_i, so the whitened sample covariance is the
/// identity when cov came from the same table with lambda = 0.
inline UnitTable whiten(const UnitTable& table, const CovarianceModel& cov) {
  table.validate();
  if (table.p() != cov.p()) throw std::invalid_argument("whiten: dimension mismatch");
  UnitTable out;
  out.ids = table.ids;
  out.X = table.X * cov.precision_factor;  // row-wise W^T x
  return out;
}

/// Inverse of whiten: solves W^T x = z for each row.
inline UnitTable unwhiten(const UnitTable& table, const CovarianceModel& cov) {
  table.validate();
  if (table.p() != cov.p()) throw std::invalid_argument("unwhiten: dimension mismatch");
  UnitTable out;
  out.ids = table.ids;
  out.X = cov.precision_factor.transpose()
              .triangularView<Eigen::Upper>()
              .solve(table.X.transpose())
              .transpose();
  return out;
}

}  // namespace balancer
