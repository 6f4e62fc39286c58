// Copyright 2026
// See LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cgpm/common.hpp"

namespace cgpm {

// All samplers are written against raw 64-bit draws so that seeded runs are
// reproducible across standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 42) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1p-53;
  }

  // Uniform on (0, 1); never returns an exact endpoint.
  double uniform_pos() {
    double u;
    do { u = uniform(); } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  size_t below(size_t n) {
    // Rejection to avoid modulo bias.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do { x = gen_(); } while (x >= limit);
    return static_cast<size_t>(x % n);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = uniform_pos();
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    return mean + sd * z;
  }

  // Shape-parameter gamma with unit scale (Marsaglia-Tsang).
  double gamma(double shape) {
    if (shape < 1.0)
      return gamma(shape + 1.0) * std::pow(uniform_pos(), 1.0 / shape);
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0) continue;
      v = v * v * v;
      double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
        return d * v;
    }
  }

  double gamma(double shape, double rate) { return gamma(shape) / rate; }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  int64_t poisson(double mu) {
    // Split large means into chunks; Poisson is additive and the plain
    // product method underflows past exp(-745).
    int64_t total = 0;
    while (mu > 30.0) {
      total += poisson_small(30.0);
      mu -= 30.0;
    }
    return total + poisson_small(mu);
  }

  // Number of failures before the first success.
  int64_t geometric(double p) {
    if (p >= 1.0) return 0;
    return static_cast<int64_t>(
        std::floor(std::log(uniform_pos()) / std::log1p(-p)));
  }

  double student_t(double df) {
    double chi2 = 2.0 * gamma(df / 2.0);
    return normal() / std::sqrt(chi2 / df);
  }

  // Best-Fisher rejection sampler; kappa = 0 degenerates to uniform.
  double vonmises(double mu, double kappa) {
    if (kappa < 1e-8)
      return uniform(0.0, 2.0 * std::numbers::pi);
    double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
    double r = (1.0 + b * b) / (2.0 * b);
    for (;;) {
      double u1 = uniform_pos();
      double z = std::cos(std::numbers::pi * u1);
      double f = (1.0 + r * z) / (r + z);
      double c = kappa * (r - f);
      double u2 = uniform_pos();
      if (c * (2.0 - c) - u2 > 0 || std::log(c / u2) + 1.0 - c >= 0) {
        double u3 = uniform();
        double theta = (u3 < 0.5) ? mu - std::acos(f) : mu + std::acos(f);
        theta = std::fmod(theta, 2.0 * std::numbers::pi);
        if (theta < 0) theta += 2.0 * std::numbers::pi;
        return theta;
      }
    }
  }

  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (size_t i = 0; i < alpha.size(); ++i) {
      out[i] = gamma(alpha[i]);
      total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
  }

  // Gumbel-max draw over unnormalized log weights.
  size_t categorical_log(const std::vector<double>& logw) {
    size_t best = 0;
    double best_score = -kInf;
    for (size_t i = 0; i < logw.size(); ++i) {
      if (logw[i] == -kInf) continue;
      double g = -std::log(-std::log(uniform_pos()));
      double score = logw[i] + g;
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    require(best_score > -kInf, "categorical_log: all weights are zero");
    return best;
  }

  Rng fork(uint64_t salt) { return Rng(mix_seed(gen_(), salt)); }

  std::string save_state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    require(!is.fail(), "Rng::load_state: malformed state string");
  }

 private:
  int64_t poisson_small(double mu) {
    double limit = std::exp(-mu);
    double prod = 1.0;
    int64_t k = -1;
    do {
      prod *= uniform_pos();
      ++k;
    } while (prod > limit);
    return k;
  }

  std::mt19937_64 gen_;
};

}  // namespace cgpm
