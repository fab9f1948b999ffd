#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "balancer/errors.hpp"

namespace balancer {

namespace detail {

// Regularized lower incomplete gamma P(w,t) by power series. Converges fast
// for t < w+1.
inline double gamma_p_series(double w, double t) {
  double ap = w;
  double sum = 1.0 / w;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= t / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-t + w * std::log(t) - std::lgamma(w));
}

// Regularized upper incomplete gamma Q(w,t) by modified Lentz continued
// fraction. Converges fast for t >= w+1.
inline double gamma_q_continued_fraction(double w, double t) {
  constexpr double tiny = 1e-300;
  double b = t + 1.0 - w;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - w);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-t + w * std::log(t) - std::lgamma(w));
}

}  // namespace detail

/// Regularized lower incomplete gamma P(w,t) = gamma(w,t) / Gamma(w).
inline double regularized_gamma_p(double w, double t) {
  if (!(w > 0.0)) throw std::domain_error("regularized_gamma_p: requires w > 0");
  if (!(t >= 0.0)) throw std::domain_error("regularized_gamma_p: requires t >= 0");
  if (t == 0.0) return 0.0;
  return t < w + 1.0 ? detail::gamma_p_series(w, t) : 1.0 - detail::gamma_q_continued_fraction(w, t);
}

/// Lower incomplete gamma gamma(w,t) = integral_0^t x^(w-1) e^(-x) dx.
/// Series branch below t = w+1, continued fraction at and above it.
inline double lower_incomplete_gamma(double w, double t) {
  return regularized_gamma_p(w, t) * std::tgamma(w);
}

/// Chi-square CDF with df degrees of freedom: P(df/2, x/2).
inline double chi2_cdf(int df, double x) {
  if (df < 1) throw std::domain_error("chi2_cdf: requires df >= 1");
  if (!(x >= 0.0)) throw std::domain_error("chi2_cdf: requires x >= 0");
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

inline double chi2_pdf(int df, double x) {
  if (df < 1) throw std::domain_error("chi2_pdf: requires df >= 1");
  if (x < 0.0) return 0.0;
  if (x == 0.0) return df == 2 ? 0.5 : (df < 2 ? std::numeric_limits<double>::infinity() : 0.0);
  const double h = 0.5 * df;
  return std::exp((h - 1.0) * std::log(x) - 0.5 * x - h * std::log(2.0) - std::lgamma(h));
}

/// Chi-square quantile: the x with chi2_cdf(df, x) = prob, to 1e-10.
/// Bracketed bisection followed by a Newton polish.
inline double chi2_quantile(int df, double prob) {
  if (df < 1) throw std::domain_error("chi2_quantile: requires df >= 1");
  if (!(prob > 0.0 && prob < 1.0)) throw std::domain_error("chi2_quantile: requires prob in (0,1)");

  double lo = 0.0;
  double hi = std::max(2.0 * df, 1.0);
  while (chi2_cdf(df, hi) < prob) {
    hi *= 2.0;
    if (hi > 1e12) throw std::domain_error("chi2_quantile: bracket search failed");
  }
  for (int i = 0; i < 200 && (hi - lo) > 1e-14 * std::max(hi, 1.0); ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(df, mid) < prob ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double f = chi2_cdf(df, x) - prob;
    const double fp = chi2_pdf(df, x);
    if (fp <= 0.0) break;
    const double step = f / fp;
    if (!(x - step > 0.0)) break;
    x -= step;
  }
  return x;
}

/// Inputs to the computational time-ratio calculator. C is the per-unit
/// per-covariate cost constant of the adaptive allocator, R the per-unit cost
/// of one complete-randomization pass, D the constant in the a* root equation.
struct TimeRatioParams {
  long n = 0;
  int p = 0;
  double C = 10.0;
  double R = 1.0;
  double D = 5.0;

  void validate() const {
    if (n < 2) throw std::invalid_argument("TimeRatioParams: requires n >= 2");
    if (p < 1) throw std::invalid_argument("TimeRatioParams: requires p >= 1");
    if (!(C > 0.0) || !(R > 0.0) || !(D > 0.0))
      throw std::invalid_argument("TimeRatioParams: requires C, R, D > 0");
  }
};

/// Root a* of  gamma(p/2, a/2) * D * p  =  2 * gamma(p/2+1, a/2) * n.
/// The left side dominates near 0 and the right side grows faster, so the
/// residual changes sign exactly once; bisection on a doubling bracket.
inline double solve_a_star(const TimeRatioParams& params) {
  params.validate();
  const double w = 0.5 * params.p;
  const double dn = static_cast<double>(params.n);
  const auto residual = [&](double a) {
    return lower_incomplete_gamma(w, 0.5 * a) * params.D * params.p -
           2.0 * lower_incomplete_gamma(w + 1.0, 0.5 * a) * dn;
  };

  double lo = 1e-12;
  while (residual(lo) <= 0.0) {
    lo *= 0.1;
    if (lo < 1e-250)
      throw NoRoot("solve_a_star: residual not positive near 0", lo, 1e6, residual(lo),
                   residual(1e6));
  }
  double hi = std::max(2.0 * lo, 1e-6);
  while (residual(hi) > 0.0) {
    hi *= 2.0;
    if (hi > 1e6)
      throw NoRoot("solve_a_star: residual never changes sign up to 1e6", lo, hi, residual(lo),
                   residual(hi));
  }

  for (int i = 0; i < 300 && (hi - lo) > 1e-16 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  const double root = 0.5 * (lo + hi);
  const double res = residual(root);
  if (std::fabs(res) > 1e-12 * params.D * params.p)
    throw NoRoot("solve_a_star: residual above tolerance at root", lo, hi, residual(lo),
                 residual(hi));
  return root;
}

/// Ratio of average computational time, adaptive allocator over
/// rerandomization, at equal achieved balance: chi2_cdf(p, a*) * C * p / R.
inline double time_ratio(const TimeRatioParams& params) {
  const double a_star = solve_a_star(params);
  return chi2_cdf(params.p, a_star) * params.C * params.p / params.R;
}

/// One-sample two-sided Kolmogorov-Smirnov statistic of sorted samples
/// against a reference CDF.
template <class Cdf>
double ks_statistic(std::span<const double> sorted_samples, Cdf&& cdf) {
  const std::size_t n = sorted_samples.size();
  if (n == 0) throw std::invalid_argument("ks_statistic: empty sample");
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(sorted_samples[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
  }
  return d;
}

/// Variance-reduction factor of rerandomization at threshold a with p
/// covariates: P(chi2_{p+2} <= a) / P(chi2_p <= a). Standard result from the
/// rerandomization literature; reported alongside empirical estimates.
inline double rerand_variance_factor(int p, double a) {
  if (!(a > 0.0)) throw std::domain_error("rerand_variance_factor: requires a > 0");
  const double denom = chi2_cdf(p, a);
  if (denom <= 0.0) throw std::domain_error("rerand_variance_factor: P(chi2_p <= a) is zero");
  return chi2_cdf(p + 2, a) / denom;
}

}  // namespace balancer
