#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "balancer/balance.hpp"
#include "balancer/errors.hpp"
#include "balancer/model.hpp"
#include "balancer/rng.hpp"
#include "balancer/theory.hpp"

namespace balancer {

/// Parameters of the covariate-adaptive allocator. q is the biased-coin
/// probability of taking the balance-improving branch.
struct CamParams {
  double q = 0.75;
  std::uint64_t seed = 0;
  bool shuffle = true;  // random arrangement before pairing; off only for sensitivity runs

  void validate() const {
    if (!(q > 0.5 && q < 1.0)) throw std::invalid_argument("CamParams: requires 0.5 < q < 1");
  }
};

/// Rerandomization acceptance rule: exactly one of threshold (a) or
/// acceptance_prob (p_a) is primary; the other is derived through the
/// chi-square quantile map once p is known.
struct RerandParams {
  std::optional<double> threshold;
  std::optional<double> acceptance_prob;
  long max_iters = 1'000'000;
  std::uint64_t seed = 0;

  static RerandParams with_threshold(double a, std::uint64_t seed = 0) {
    RerandParams r;
    r.threshold = a;
    r.seed = seed;
    return r;
  }
  static RerandParams with_acceptance(double p_a, std::uint64_t seed = 0) {
    RerandParams r;
    r.acceptance_prob = p_a;
    r.seed = seed;
    return r;
  }

  void validate() const {
    if (threshold.has_value() == acceptance_prob.has_value())
      throw std::invalid_argument("RerandParams: exactly one of threshold / acceptance_prob");
    if (threshold && !(*threshold > 0.0))
      throw std::invalid_argument("RerandParams: requires threshold > 0");
    if (acceptance_prob && !(*acceptance_prob > 0.0 && *acceptance_prob < 1.0))
      throw std::invalid_argument("RerandParams: requires acceptance_prob in (0,1)");
    if (max_iters < 1) throw std::invalid_argument("RerandParams: requires max_iters >= 1");
  }

  double resolve_threshold(int p) const {
    validate();
    return threshold ? *threshold : chi2_quantile(p, *acceptance_prob);
  }
};

enum class CrMode {
  balanced,     // uniform random balanced split (default)
  independent,  // independent fair coin per unit; sensitivity runs only
};

/// Complete randomization. The balanced mode draws uniformly from all splits
/// with |#arm1 - #arm2| <= 1 (equality for even n).
inline Allocation allocate_cr(const UnitTable& table, std::uint64_t seed,
                              CrMode mode = CrMode::balanced) {
  table.validate();
  const Eigen::Index n = table.n();
  auto rng = make_engine(seed);

  Allocation alloc;
  alloc.method = Method::CR;
  alloc.seed = seed;
  alloc.arms.assign(static_cast<std::size_t>(n), 2);
  alloc.order.resize(static_cast<std::size_t>(n));
  std::iota(alloc.order.begin(), alloc.order.end(), Eigen::Index{0});

  if (mode == CrMode::independent) {
    std::bernoulli_distribution coin(0.5);
    for (auto& a : alloc.arms) a = coin(rng) ? 1 : 2;
    return alloc;
  }

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  Eigen::Index n1 = n / 2;
  if (n % 2 == 1 && std::bernoulli_distribution(0.5)(rng)) ++n1;
  for (Eigen::Index k = 0; k < n1; ++k) alloc.arms[static_cast<std::size_t>(idx[k])] = 1;
  return alloc;
}

struct RerandResult {
  Allocation allocation;
  long iterations = 0;
  double final_m = std::numeric_limits<double>::quiet_NaN();
};

/// Rerandomization: redraw complete randomizations until M < a.
/// Throws AcceptanceExhausted (carrying the best M seen) at max_iters.
inline RerandResult allocate_rr(const UnitTable& table, const CovarianceModel& cov,
                                const RerandParams& params) {
  table.validate();
  params.validate();
  const double a = params.resolve_threshold(static_cast<int>(table.p()));

  double best_m = std::numeric_limits<double>::infinity();
  for (long iter = 1; iter <= params.max_iters; ++iter) {
    Allocation draw = allocate_cr(table, derive_seed(params.seed, {0x5252u, static_cast<std::uint64_t>(iter)}));
    const double m = mahalanobis(table, cov, draw);
    if (m < a) {
      draw.method = Method::RR;
      draw.seed = params.seed;
      draw.params.threshold = a;
      if (params.acceptance_prob) draw.params.acceptance_prob = *params.acceptance_prob;
      return {std::move(draw), iter, m};
    }
    best_m = std::min(best_m, m);
  }
  throw AcceptanceExhausted(params.max_iters, best_m, a);
}

/// One biased-coin decision of the adaptive allocator: the potential M of both
/// branches and the branch taken.
struct CamDecision {
  long step = 0;  // pair index, 1-based
  double m1 = 0.0;
  double m2 = 0.0;
  int branch = 0;
};

struct CamResult {
  Allocation allocation;
  std::vector<CamDecision> trace;
  double final_m = std::numeric_limits<double>::quiet_NaN();  // M over the paired units
};

/// Covariate-adaptive randomization via Mahalanobis distance:
/// shuffle the units, assign the first pair to arms 1 and 2, then allocate each
/// subsequent pair with a biased coin favoring the branch with the lower
/// potential M. Odd n: the leftover unit is assigned by a fair coin.
inline CamResult allocate_cam(const UnitTable& table, const CovarianceModel& cov,
                              const CamParams& params) {
  table.validate();
  params.validate();
  if (table.p() != cov.p()) throw std::invalid_argument("allocate_cam: dimension mismatch");

  const Eigen::Index n = table.n();
  auto rng = make_engine(params.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  CamResult result;
  Allocation& alloc = result.allocation;
  alloc.method = Method::CAM;
  alloc.seed = params.seed;
  alloc.params.q = params.q;
  alloc.arms.assign(static_cast<std::size_t>(n), 0);
  alloc.order.resize(static_cast<std::size_t>(n));
  std::iota(alloc.order.begin(), alloc.order.end(), Eigen::Index{0});
  if (params.shuffle) std::shuffle(alloc.order.begin(), alloc.order.end(), rng);

  // whitened rows in allocation order, contiguous for the sequential walk
  const UnitTable z = whiten(table, cov);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> zo(n, table.p());
  for (Eigen::Index k = 0; k < n; ++k) zo.row(k) = z.X.row(alloc.order[static_cast<std::size_t>(k)]);
  auto arm_of = [&](std::size_t k) -> int& {
    return alloc.arms[static_cast<std::size_t>(alloc.order[k])];
  };

  arm_of(0) = 1;
  arm_of(1) = 2;
  BalanceState state = BalanceState::first_pair(zo.row(0).transpose(), zo.row(1).transpose());

  const std::size_t pairs = static_cast<std::size_t>(n / 2);
  result.trace.reserve(pairs > 0 ? pairs - 1 : 0);
  for (std::size_t i = 1; i < pairs; ++i) {
    const auto z_first = zo.row(static_cast<Eigen::Index>(2 * i)).transpose();
    const auto z_second = zo.row(static_cast<Eigen::Index>(2 * i + 1)).transpose();
    const auto [m1, m2] = state.potential(z_first, z_second);

    double prob_branch1 = 0.5;
    if (m1 < m2) prob_branch1 = params.q;
    else if (m1 > m2) prob_branch1 = 1.0 - params.q;
    const int branch = unif(rng) < prob_branch1 ? 1 : 2;

    arm_of(2 * i) = branch == 1 ? 1 : 2;
    arm_of(2 * i + 1) = branch == 1 ? 2 : 1;
    state.commit(z_first, z_second, branch);
    result.trace.push_back({static_cast<long>(i), m1, m2, branch});
  }
  if (n % 2 == 1) arm_of(static_cast<std::size_t>(n) - 1) = unif(rng) < 0.5 ? 1 : 2;

  result.final_m = state.m_current();
  return result;
}

}  // namespace balancer
