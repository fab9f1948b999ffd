#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "balancer/rng.hpp"
#include "balancer/theory.hpp"

using namespace balancer;
using Catch::Approx;

namespace {

// Closed-form chi-square CDF for even df: 1 - e^{-x/2} sum_{j<df/2} (x/2)^j / j!
double chi2_cdf_even_df_closed_form(int df, double x) {
  const double u = 0.5 * x;
  double term = 1.0, sum = 0.0;
  for (int j = 0; j < df / 2; ++j) {
    if (j > 0) term *= u / j;
    sum += term;
  }
  return 1.0 - std::exp(-u) * sum;
}

}  // namespace

TEST_CASE("lower incomplete gamma matches closed forms", "[theory]") {
  // gamma(1,t) = 1 - e^{-t}
  CHECK(lower_incomplete_gamma(1.0, 0.5) == Approx(0.3934693402873666).epsilon(1e-12));
  // gamma(2,t) = 1 - e^{-t}(1+t), by parts
  CHECK(lower_incomplete_gamma(2.0, 1.0) == Approx(0.2642411176571153).epsilon(1e-12));
  CHECK(lower_incomplete_gamma(3.7, 0.0) == 0.0);
  CHECK(lower_incomplete_gamma(1.0, 30.0) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lower incomplete gamma domain errors", "[theory]") {
  CHECK_THROWS_AS(lower_incomplete_gamma(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(lower_incomplete_gamma(-2.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(lower_incomplete_gamma(1.0, -0.1), std::domain_error);
}

TEST_CASE("lower incomplete gamma is monotone and satisfies the recurrence", "[theory]") {
  auto rng = make_engine(17);
  std::uniform_real_distribution<double> ws(0.2, 12.0), ts(0.01, 25.0);
  for (int i = 0; i < 200; ++i) {
    const double w = ws(rng);
    const double t = ts(rng);
    CHECK(lower_incomplete_gamma(w, t) <= lower_incomplete_gamma(w, t * 1.25) + 1e-15);
    // gamma(w+1,t) = w gamma(w,t) - t^w e^{-t}
    const double lhs = lower_incomplete_gamma(w + 1.0, t);
    const double rhs = w * lower_incomplete_gamma(w, t) - std::pow(t, w) * std::exp(-t);
    CHECK(lhs == Approx(rhs).epsilon(1e-10).margin(1e-280));
  }
}

TEST_CASE("chi-square CDF closed forms", "[theory]") {
  CHECK(chi2_cdf(2, 0.1) == Approx(0.04877057549928599).epsilon(1e-12));
  CHECK(chi2_cdf(4, 1.0) == Approx(1.0 - std::exp(-0.5) * 1.5).epsilon(1e-12));
  CHECK(chi2_cdf(5, 0.0) == 0.0);
  for (int df : {2, 4, 6})
    for (double x : {0.1, 1.0, 5.0, 20.0})
      CHECK(chi2_cdf(df, x) ==
            Approx(chi2_cdf_even_df_closed_form(df, x)).epsilon(0.0).margin(1e-12));
  CHECK_THROWS_AS(chi2_cdf(3, -0.5), std::domain_error);
}

TEST_CASE("chi-square quantile", "[theory]") {
  CHECK(chi2_quantile(2, 0.3) == Approx(-2.0 * std::log(0.7)).epsilon(1e-10));
  CHECK(chi2_cdf(4, chi2_quantile(4, 0.3)) == Approx(0.3).margin(1e-10));
  CHECK(chi2_quantile(4, 0.3) == Approx(2.1947).epsilon(1e-3));
  CHECK(chi2_quantile(6, 1e-9) < 1e-2);  // prob -> 0+ pushes the quantile to 0
  for (int df : {1, 2, 5, 10})
    for (double prob : {0.01, 0.3, 0.5, 0.95})
      CHECK(chi2_cdf(df, chi2_quantile(df, prob)) == Approx(prob).margin(1e-9));
  CHECK_THROWS_AS(chi2_quantile(3, 0.0), std::domain_error);
  CHECK_THROWS_AS(chi2_quantile(3, 1.0), std::domain_error);
}

TEST_CASE("a* root of the break-even equation", "[theory]") {
  TimeRatioParams params{200, 2, 10.0, 1.0, 5.0};
  const double a = solve_a_star(params);
  CHECK(a == Approx(0.1009).epsilon(5e-3));
  const double res = lower_incomplete_gamma(1.0, 0.5 * a) * params.D * params.p -
                     2.0 * lower_incomplete_gamma(2.0, 0.5 * a) * static_cast<double>(params.n);
  CHECK(std::fabs(res) < 1e-12 * params.D * params.p);
}

TEST_CASE("a* halves when n doubles in the small-a regime", "[theory]") {
  TimeRatioParams base{10000, 6, 10.0, 1.0, 5.0};
  TimeRatioParams doubled = base;
  doubled.n = 20000;
  const double ratio = solve_a_star(doubled) / solve_a_star(base);
  CHECK(ratio == Approx(0.5).epsilon(0.05));
}

TEST_CASE("a* grows with D", "[theory]") {
  // a root exists only while D < n; the left side's limit D*p*Gamma(p/2)
  // must stay below the right side's n*p*Gamma(p/2)
  double prev = 0.0;
  for (double d : {5.0, 50.0, 350.0}) {
    TimeRatioParams params{400, 4, 10.0, 1.0, d};
    const double a = solve_a_star(params);
    CHECK(a > prev);
    prev = a;
  }
}

TEST_CASE("time ratio reproduces independently verified reference cells", "[theory]") {
  CHECK(time_ratio({200, 2, 10.0, 1.0, 5.0}) == Approx(0.9830).epsilon(0.02));
  // 3.63039e-4 from a 40-digit quadrature oracle; tabulations that truncate at
  // four decimals display this cell as 0.0003
  CHECK(time_ratio({600, 6, 10.0, 1.0, 5.0}) == Approx(3.63039e-4).epsilon(0.01));
  CHECK(time_ratio({400, 12, 10.0, 1.0, 5.0}) == Approx(7.010e-08).epsilon(0.10));
}

TEST_CASE("time ratio parameter validation", "[theory]") {
  CHECK_THROWS_AS(time_ratio({200, 2, 0.0, 1.0, 5.0}), std::invalid_argument);
  CHECK_THROWS_AS(time_ratio({200, 2, 10.0, -1.0, 5.0}), std::invalid_argument);
  CHECK_THROWS_AS(time_ratio({1, 2, 10.0, 1.0, 5.0}), std::invalid_argument);
}

TEST_CASE("KS statistic fixtures", "[theory]") {
  auto uniform_cdf = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  // hand-computed sup-discrepancy of the 4-point fixture
  const std::vector<double> fix = {0.1, 0.4, 0.6, 0.9};
  CHECK(ks_statistic(fix, uniform_cdf) == Approx(0.15).margin(1e-12));

  // empirical CDF jumps to 1 at 0.8, so the gap there is 0.2
  std::vector<double> grid;
  for (int i = 1; i <= 16; ++i) grid.push_back(0.05 * i);
  CHECK(ks_statistic(grid, uniform_cdf) == Approx(0.2).margin(1e-12));

  // all samples at the reference median -> statistic 0.5
  std::vector<double> at_median(32, 1.0);
  auto step_cdf = [](double x) { return x < 1.0 ? 0.25 * x : 0.5 + 0.25 * (x - 1.0); };
  CHECK(ks_statistic(at_median, step_cdf) == Approx(0.5).margin(1e-12));

  CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, uniform_cdf), std::invalid_argument);
}

TEST_CASE("KS statistic of samples from the reference stays under 1.36/sqrt(R)", "[theory]") {
  const int R = 5000;
  int passes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = make_stream(99, {static_cast<std::uint64_t>(trial)});
    std::chi_squared_distribution<double> chi(3.0);
    std::vector<double> xs(R);
    for (auto& x : xs) x = chi(rng);
    std::sort(xs.begin(), xs.end());
    if (ks_statistic(xs, [](double x) { return chi2_cdf(3, x); }) < 1.36 / std::sqrt(R)) ++passes;
  }
  CHECK(passes >= 17);  // 95% asymptotic level
}

TEST_CASE("rerandomization variance factor", "[theory]") {
  // v_a = P(chi2_{p+2} <= a) / P(chi2_p <= a), in (0,1), increasing in a
  const double a1 = chi2_quantile(4, 0.1);
  const double v1 = rerand_variance_factor(4, a1);
  CHECK(v1 > 0.0);
  CHECK(v1 < 1.0);
  CHECK(rerand_variance_factor(4, a1 * 4.0) > v1);
  CHECK_THROWS_AS(rerand_variance_factor(4, 0.0), std::domain_error);
}
