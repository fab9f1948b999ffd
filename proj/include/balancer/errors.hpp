#pragma once

#include <stdexcept>
#include <string>

namespace balancer {

/// Rerandomization hit its iteration cap without any draw satisfying M < a.
/// Carries the best (lowest) M seen so the caller can report how close it got.
class AcceptanceExhausted : public std::runtime_error {
 public:
  AcceptanceExhausted(long iterations, double best_m, double threshold)
      : std::runtime_error("rerandomization: no draw with M < " + std::to_string(threshold) +
                           " after " + std::to_string(iterations) +
                           " iterations (best M = " + std::to_string(best_m) + ")"),
        iterations_(iterations),
        best_m_(best_m),
        threshold_(threshold) {}

  long iterations() const { return iterations_; }
  double best_m() const { return best_m_; }
  double threshold() const { return threshold_; }

 private:
  long iterations_;
  double best_m_;
  double threshold_;
};

/// Regression design matrix is rank-deficient beyond what the ridge policy repairs.
class SingularDesign : public std::runtime_error {
 public:
  explicit SingularDesign(const std::string& what) : std::runtime_error(what) {}
};

/// Not enough rows for the requested computation (e.g. within-group regression).
class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

/// Root search failed to bracket a sign change.
class NoRoot : public std::runtime_error {
 public:
  NoRoot(const std::string& what, double lo, double hi, double f_lo, double f_hi)
      : std::runtime_error(what + " [f(" + std::to_string(lo) + ")=" + std::to_string(f_lo) +
                           ", f(" + std::to_string(hi) + ")=" + std::to_string(f_hi) + "]"),
        lo_(lo),
        hi_(hi),
        f_lo_(f_lo),
        f_hi_(f_hi) {}

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double f_lo() const { return f_lo_; }
  double f_hi() const { return f_hi_; }

 private:
  double lo_, hi_, f_lo_, f_hi_;
};

}  // namespace balancer
