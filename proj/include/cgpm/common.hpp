// Copyright 2026
// See LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgpm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLn2Pi = 1.8378770664093454835606594728112;

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline double logaddexp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(const std::vector<double>& xs) {
  double m = -kInf;
  for (double x : xs) m = std::max(m, x);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logmeanexp(const std::vector<double>& xs) {
  require(!xs.empty(), "logmeanexp: empty input");
  return logsumexp(xs) - std::log(static_cast<double>(xs.size()));
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  require(n >= 2, "linspace: need at least two points");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return out;
}

// n points spaced evenly on a log scale; endpoints must be positive.
inline std::vector<double> geomspace(double lo, double hi, int n) {
  require(lo > 0 && hi > lo, "geomspace: need 0 < lo < hi");
  std::vector<double> out = linspace(std::log(lo), std::log(hi), n);
  for (double& x : out) x = std::exp(x);
  return out;
}

inline double normal_logpdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLn2Pi;
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

// Acklam's rational approximation polished with one Halley step.
inline double normal_icdf(double p) {
  require(p > 0.0 && p < 1.0, "normal_icdf: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  double q, r, x;
  if (p < 0.02425) {
    q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 0.97575) {
    q = p - 0.5;
    r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

inline double student_t_logpdf(double x, double df, double loc, double scale) {
  double z = (x - loc) / scale;
  return std::lgamma((df + 1) / 2) - std::lgamma(df / 2) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         (df + 1) / 2 * std::log1p(z * z / df);
}

inline double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double log_bessel_i0(double kappa) {
  if (kappa < 50.0) return std::log(std::cyl_bessel_i(0.0, kappa));
  // Asymptotic expansion; cyl_bessel_i overflows well before kappa ~ 700.
  double inv = 1.0 / (8.0 * kappa);
  return kappa - 0.5 * std::log(2 * std::numbers::pi * kappa) +
         std::log1p(inv * (1.0 + 4.5 * inv));
}

// Linear-interpolated quantile of an unsorted sample.
inline double quantile(std::vector<double> xs, double q) {
  require(!xs.empty(), "quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  double pos = q * (xs.size() - 1);
  size_t i = static_cast<size_t>(pos);
  if (i + 1 >= xs.size()) return xs.back();
  double frac = pos - static_cast<double>(i);
  return xs[i] * (1 - frac) + xs[i + 1] * frac;
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable derivation of per-instance seeds from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt + 0x51ed2701ULL));
}

}  // namespace cgpm
