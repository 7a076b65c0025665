#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>

#include "boxal/error.hpp"

namespace boxal {

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz evaluation.
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b) for a, b > 0 and x in [0, 1].
inline double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ContractError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) of Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ContractError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

struct SampleMoments {
  std::size_t n;
  double mean;
  double sum_sq_dev;
};

inline SampleMoments moments(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  return {xs.size(), mean, ss};
}

/// Two-sided unpaired Student's t-test with pooled variance.
///
/// Zero pooled variance: equal means give (t=0, p=1); unequal means give p=0 and t as a
/// signed infinity.
inline TTestResult ttest_two_sided(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) {
    throw ContractError("t-test needs at least 2 observations per sample (got " +
                        std::to_string(x.size()) + " and " + std::to_string(y.size()) + ")");
  }
  const SampleMoments mx = moments(x);
  const SampleMoments my = moments(y);
  TTestResult r;
  r.df = static_cast<double>(mx.n + my.n - 2);
  const double pooled = (mx.sum_sq_dev + my.sum_sq_dev) / r.df;
  const double diff = mx.mean - my.mean;
  if (pooled == 0.0) {
    if (diff == 0.0) return {0.0, r.df, 1.0};
    return {std::copysign(std::numeric_limits<double>::infinity(), diff), r.df, 0.0};
  }
  const double se = std::sqrt(pooled * (1.0 / static_cast<double>(mx.n) + 1.0 / static_cast<double>(my.n)));
  r.t = diff / se;
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace boxal
