#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <utility>

#include "balancer/model.hpp"

namespace balancer {

/// Mahalanobis balance criterion between arm covariate means, batch form:
///   M = n * p_n * (1 - p_n) * (xbar1 - xbar2)^T (sigma + lambda I)^-1 (xbar1 - xbar2)
/// with p_n the realized arm-1 proportion (1/2 for balanced allocations).
inline double mahalanobis(const UnitTable& table, const CovarianceModel& cov,
                          const Allocation& alloc) {
  table.validate();
  if (alloc.n() != table.n()) throw std::invalid_argument("mahalanobis: allocation length mismatch");
  if (table.p() != cov.p()) throw std::invalid_argument("mahalanobis: dimension mismatch");

  const Eigen::Index n = table.n();
  Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(table.p());
  Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(table.p());
  long n1 = 0, n2 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (alloc.arms[static_cast<std::size_t>(i)] == 1) {
      sum1 += table.X.row(i).transpose();
      ++n1;
    } else {
      sum2 += table.X.row(i).transpose();
      ++n2;
    }
  }
  if (n1 == 0 || n2 == 0) throw std::invalid_argument("mahalanobis: an arm is empty");

  const Eigen::VectorXd diff = sum1 / static_cast<double>(n1) - sum2 / static_cast<double>(n2);
  const Eigen::VectorXd w = cov.precision_factor.transpose() * diff;
  const double p_n = static_cast<double>(n1) / static_cast<double>(n);
  return static_cast<double>(n) * p_n * (1.0 - p_n) * w.squaredNorm();
}

/// Running balance state over whitened covariates for pairwise allocation.
/// diff_sum tracks S1 - S2; with equal arms M = diff_sum . diff_sum / n, so a
/// candidate pair only costs two dot products to evaluate.
class BalanceState {
 public:
  /// Assigns the first pair: a to arm 1, b to arm 2.
  static BalanceState first_pair(const Eigen::VectorXd& z_arm1, const Eigen::VectorXd& z_arm2) {
    BalanceState s;
    s.sum1_ = z_arm1;
    s.sum2_ = z_arm2;
    s.diff_ = z_arm1 - z_arm2;
    s.dot_ = s.diff_.squaredNorm();
    s.n_assigned_ = 2;
    s.count_arm1_ = 1;
    return s;
  }

  long n_assigned() const { return n_assigned_; }
  long count_arm1() const { return count_arm1_; }
  const Eigen::VectorXd& diff_sum() const { return diff_; }
  double m_current() const { return dot_ / static_cast<double>(n_assigned_); }

  /// Potential M after assigning (first -> arm1, second -> arm2) and after the
  /// swap. Does not mutate the state; O(p).
  std::pair<double, double> potential(Eigen::Ref<const Eigen::VectorXd> z_first,
                                      Eigen::Ref<const Eigen::VectorXd> z_second) const {
    double cross = 0.0, dd = 0.0;
    for (Eigen::Index j = 0; j < diff_.size(); ++j) {
      const double d = z_first[j] - z_second[j];
      cross += diff_[j] * d;
      dd += d * d;
    }
    const double denom = static_cast<double>(n_assigned_ + 2);
    return {(dot_ + 2.0 * cross + dd) / denom, (dot_ - 2.0 * cross + dd) / denom};
  }

  /// Applies the chosen branch: 1 means first -> arm1, 2 means the swap.
  void commit(Eigen::Ref<const Eigen::VectorXd> z_first, Eigen::Ref<const Eigen::VectorXd> z_second,
              int branch) {
    if (branch != 1 && branch != 2) throw std::invalid_argument("commit: branch must be 1 or 2");
    const Eigen::VectorXd delta = z_first - z_second;
    const double cross = diff_.dot(delta);
    const double dd = delta.squaredNorm();
    if (branch == 1) {
      sum1_ += z_first;
      sum2_ += z_second;
      diff_ += delta;
      dot_ += 2.0 * cross + dd;
    } else {
      sum1_ += z_second;
      sum2_ += z_first;
      diff_ -= delta;
      dot_ += -2.0 * cross + dd;
    }
    n_assigned_ += 2;
    ++count_arm1_;
    if (++commits_since_sync_ >= kSyncInterval) resync();
  }

  /// Recomputes diff_sum and its dot from the raw group sums, bounding
  /// incremental rounding drift over long sequences.
  void resync() {
    diff_ = sum1_ - sum2_;
    dot_ = diff_.squaredNorm();
    commits_since_sync_ = 0;
  }

 private:
  static constexpr int kSyncInterval = 1024;

  Eigen::VectorXd sum1_, sum2_, diff_;
  double dot_ = 0.0;
  long n_assigned_ = 0;
  long count_arm1_ = 0;
  int commits_since_sync_ = 0;
};

}  // namespace balancer
