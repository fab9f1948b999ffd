#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "balancer/allocators.hpp"
#include "balancer/balance.hpp"
#include "balancer/rng.hpp"

using namespace balancer;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// From-scratch oracle: M over the units assigned so far, straight from the
// definition in whitened coordinates with equal arms.
double batch_m(const std::vector<Eigen::VectorXd>& arm1, const std::vector<Eigen::VectorXd>& arm2) {
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(arm1.front().size());
  Eigen::VectorXd s2 = s1;
  for (const auto& z : arm1) s1 += z;
  for (const auto& z : arm2) s2 += z;
  const double n = static_cast<double>(arm1.size() + arm2.size());
  const Eigen::VectorXd diff = s1 / static_cast<double>(arm1.size()) -
                               s2 / static_cast<double>(arm2.size());
  return n * 0.25 * diff.squaredNorm();
}

}  // namespace

TEST_CASE("batch Mahalanobis hand values", "[balance]") {
  UnitTable t;
  t.X.resize(4, 1);
  t.X << 1.0, -1.0, 2.0, -2.0;
  const CovarianceModel cov = known_covariance(Eigen::MatrixXd::Identity(1, 1));

  Allocation alloc;
  alloc.arms = {1, 2, 1, 2};
  alloc.order = {0, 1, 2, 3};
  CHECK(mahalanobis(t, cov, alloc) == Approx(9.0));  // xbar1=1.5, xbar2=-1.5

  Allocation other;
  other.arms = {1, 2, 2, 1};  // arm1 = {1,-2} mean -0.5; arm2 = {-1,2} mean 0.5
  CHECK(mahalanobis(t, cov, other) == Approx(1.0));

  UnitTable same;
  same.X.resize(4, 2);
  same.X << 1.0, 2.0, 1.0, 2.0, 3.0, -1.0, 3.0, -1.0;
  Allocation split;
  split.arms = {1, 2, 1, 2};  // identical group members -> identical means
  CHECK(mahalanobis(same, known_covariance(Eigen::MatrixXd::Identity(2, 2)), split) ==
        Approx(0.0).margin(1e-14));
}

TEST_CASE("batch Mahalanobis rejects an empty arm", "[balance]") {
  UnitTable t;
  t.X.resize(3, 1);
  t.X << 1.0, 2.0, 3.0;
  Allocation alloc;
  alloc.arms = {1, 1, 1};
  CHECK_THROWS_AS(mahalanobis(t, known_covariance(Eigen::MatrixXd::Identity(1, 1)), alloc),
                  std::invalid_argument);
}

TEST_CASE("M under complete randomization has the chi-square mean", "[balance][slow]") {
  const Eigen::Index n = 500, p = 5;
  const int reps = 5000;
  const CovarianceModel cov = known_covariance(Eigen::MatrixXd::Identity(p, p));
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    UnitTable t;
    t.X.resize(n, p);
    auto rng = make_stream(2024, {static_cast<std::uint64_t>(r)});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) t.X(i, j) = normal(rng);
    const double m = mahalanobis(t, cov, allocate_cr(t, derive_seed(7, {static_cast<std::uint64_t>(r)})));
    sum += m;
    sumsq += m * m;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
  CHECK(std::fabs(mean - 5.0) < 3.0 * se);  // chi-square_5 mean
}

TEST_CASE("first-pair state", "[balance]") {
  const BalanceState s = BalanceState::first_pair(vec({1.0, 0.0}), vec({0.0, 1.0}));
  CHECK(s.n_assigned() == 2);
  CHECK(s.count_arm1() == 1);
  CHECK(s.diff_sum()[0] == Approx(1.0));
  CHECK(s.diff_sum()[1] == Approx(-1.0));
  CHECK(s.m_current() == Approx(1.0));

  const BalanceState zero = BalanceState::first_pair(vec({2.0, -1.0}), vec({2.0, -1.0}));
  CHECK(zero.m_current() == Approx(0.0).margin(1e-15));

  const BalanceState wide = BalanceState::first_pair(vec({3.0}), vec({-3.0}));
  CHECK(wide.m_current() == Approx(18.0));
}

TEST_CASE("potential distances", "[balance]") {
  BalanceState s = BalanceState::first_pair(vec({1.0, 0.0}), vec({0.0, 1.0}));
  // diff_sum = (1,-1), n = 2; pair z1=(1,0), z2=(0,1): delta = (1,-1)
  const auto [m1, m2] = s.potential(vec({1.0, 0.0}), vec({0.0, 1.0}));
  CHECK(m1 == Approx(2.0));  // ||(2,-2)||^2 / 4
  CHECK(m2 == Approx(0.0).margin(1e-15));

  const auto [e1, e2] = s.potential(vec({0.7, 0.7}), vec({0.7, 0.7}));
  CHECK(e1 == Approx(e2));  // symmetric pair
}

TEST_CASE("potential matches the from-scratch oracle on random states", "[balance]") {
  auto rng = make_engine(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index p) {
    Eigen::VectorXd z(p);
    for (Eigen::Index j = 0; j < p; ++j) z[j] = normal(rng);
    return z;
  };
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index p = 1 + trial % 4;
    std::vector<Eigen::VectorXd> arm1{draw(p)}, arm2{draw(p)};
    BalanceState s = BalanceState::first_pair(arm1[0], arm2[0]);
    for (int step = 0; step < 20; ++step) {
      const Eigen::VectorXd z1 = draw(p), z2 = draw(p);
      const auto [m1, m2] = s.potential(z1, z2);

      auto a1 = arm1, a2 = arm2;
      a1.push_back(z1);
      a2.push_back(z2);
      CHECK(m1 == Approx(batch_m(a1, a2)).epsilon(1e-10).margin(1e-12));
      auto b1 = arm1, b2 = arm2;
      b1.push_back(z2);
      b2.push_back(z1);
      CHECK(m2 == Approx(batch_m(b1, b2)).epsilon(1e-10).margin(1e-12));

      const int branch = step % 2 == 0 ? 1 : 2;
      s.commit(z1, z2, branch);
      if (branch == 1) {
        arm1.push_back(z1);
        arm2.push_back(z2);
      } else {
        arm1.push_back(z2);
        arm2.push_back(z1);
      }
    }
  }
}

TEST_CASE("commit tracks the chosen potential exactly and matches batch recomputation",
          "[balance]") {
  auto rng = make_engine(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index p = 3;
  auto draw = [&]() {
    Eigen::VectorXd z(p);
    for (Eigen::Index j = 0; j < p; ++j) z[j] = normal(rng);
    return z;
  };
  std::vector<Eigen::VectorXd> arm1{draw()}, arm2{draw()};
  BalanceState s = BalanceState::first_pair(arm1[0], arm2[0]);
  std::bernoulli_distribution coin(0.5);
  for (int step = 0; step < 100; ++step) {
    const Eigen::VectorXd z1 = draw(), z2 = draw();
    const auto [m1, m2] = s.potential(z1, z2);
    const int branch = coin(rng) ? 1 : 2;
    s.commit(z1, z2, branch);
    CHECK(s.m_current() == Approx(branch == 1 ? m1 : m2).epsilon(1e-12));
    if (branch == 1) {
      arm1.push_back(z1);
      arm2.push_back(z2);
    } else {
      arm1.push_back(z2);
      arm2.push_back(z1);
    }
    CHECK(s.m_current() == Approx(batch_m(arm1, arm2)).epsilon(1e-8).margin(1e-12));
    CHECK(s.m_current() >= 0.0);
  }
}

TEST_CASE("a zero pair rescales M by n/(n+2)", "[balance]") {
  BalanceState s = BalanceState::first_pair(vec({2.0, 1.0}), vec({-1.0, 0.5}));
  const double before = s.m_current();
  const long n = s.n_assigned();
  const Eigen::VectorXd z = vec({0.3, -0.4});
  s.commit(z, z, 1);  // delta = 0
  CHECK(s.m_current() == Approx(before * static_cast<double>(n) / static_cast<double>(n + 2)));
}

TEST_CASE("long traces stay in sync with raw sums", "[balance]") {
  // 3000 commits crosses the resync interval twice
  auto rng = make_engine(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(2), s2 = Eigen::VectorXd::Zero(2);
  auto draw = [&]() { return vec({normal(rng), normal(rng)}); };
  const Eigen::VectorXd a = draw(), b = draw();
  s1 += a;
  s2 += b;
  BalanceState s = BalanceState::first_pair(a, b);
  std::bernoulli_distribution coin(0.5);
  for (int step = 0; step < 3000; ++step) {
    const Eigen::VectorXd z1 = draw(), z2 = draw();
    const int branch = coin(rng) ? 1 : 2;
    s.commit(z1, z2, branch);
    s1 += branch == 1 ? z1 : z2;
    s2 += branch == 1 ? z2 : z1;
  }
  const double expect = (s1 - s2).squaredNorm() / static_cast<double>(s.n_assigned());
  CHECK(s.m_current() == Approx(expect).epsilon(1e-8));
}
