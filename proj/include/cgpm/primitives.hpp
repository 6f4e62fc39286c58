// Copyright 2026
// See LICENSE.txt

#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cgpm/interface.hpp"

namespace cgpm {

// Per-variable likelihood families. The first family listed for a statistical
// type is its default; the rest are selectable alternatives.
enum class Family {
  bernoulli,
  categorical,
  poisson,
  geometric,
  vonmises,
  lognormal,
  exponential,
  normal,
  beta,
  normal_trunc,
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::bernoulli: return "bernoulli";
    case Family::categorical: return "categorical";
    case Family::poisson: return "poisson";
    case Family::geometric: return "geometric";
    case Family::vonmises: return "vonmises";
    case Family::lognormal: return "lognormal";
    case Family::exponential: return "exponential";
    case Family::normal: return "normal";
    case Family::beta: return "beta";
    case Family::normal_trunc: return "normal_trunc";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  for (Family f : {Family::bernoulli, Family::categorical, Family::poisson,
                   Family::geometric, Family::vonmises, Family::lognormal,
                   Family::exponential, Family::normal, Family::beta,
                   Family::normal_trunc})
    if (s == family_name(f)) return f;
  throw std::invalid_argument("unknown category model '" + s + "'");
}

inline Family default_family(StatKind k) {
  switch (k) {
    case StatKind::binary: return Family::bernoulli;
    case StatKind::nominal: return Family::categorical;
    case StatKind::count: return Family::poisson;
    case StatKind::cyclic: return Family::vonmises;
    case StatKind::magnitude: return Family::lognormal;
    case StatKind::numerical: return Family::normal;
    case StatKind::numerical_ranged: return Family::beta;
  }
  return Family::normal;
}

inline bool family_matches(Family f, StatKind k) {
  switch (k) {
    case StatKind::binary: return f == Family::bernoulli;
    case StatKind::nominal: return f == Family::categorical;
    case StatKind::count:
      return f == Family::poisson || f == Family::geometric;
    case StatKind::cyclic: return f == Family::vonmises;
    case StatKind::magnitude:
      return f == Family::lognormal || f == Family::exponential;
    case StatKind::numerical: return f == Family::normal;
    case StatKind::numerical_ranged:
      return f == Family::beta || f == Family::normal_trunc;
  }
  return false;
}

// Conjugate families admit closed-form marginals and hyperparameter moves;
// the rest carry maximum-likelihood point estimates.
inline bool family_conjugate(Family f) {
  return f != Family::vonmises && f != Family::beta &&
         f != Family::normal_trunc;
}

// Hyperparameters, interpreted per family:
//   bernoulli/geometric: Beta(a, b).  categorical: symmetric Dirichlet(a).
//   poisson/exponential: Gamma(a, rate b).
//   normal/lognormal: NIG(m, V, a, b) on the (log-)values.
struct Hypers {
  double m = 0.0, V = 1.0, a = 1.0, b = 1.0;
};

struct HyperGrids {
  std::vector<double> m, V, a, b;
};

// Sufficient statistics for one family over one set of values. Statistics
// are always rebuilt by folding values in canonical (member id) order, so
// equal value sets produce bit-identical statistics regardless of the
// incorporation history.
struct PrimStats {
  int64_t n = 0;
  double sum = 0, sum_sq = 0;
  double sum_lgamma = 0;              // poisson: sum of lgamma(k+1)
  double sum_cos = 0, sum_sin = 0;    // vonmises
  double sum_log_u = 0, sum_log_1mu = 0;  // beta, on the unit-scaled values
  std::vector<int64_t> counts;        // categorical
  // Lazily fitted point parameters for the non-conjugate families.
  mutable bool fitted = false;
  mutable double fit1 = 0, fit2 = 0;
};

namespace prim {

inline double internal_value(Family f, const StatType& t, double v) {
  switch (f) {
    case Family::poisson:
    case Family::geometric:
      return std::round(v * t.base);
    case Family::lognormal:
      return std::log(v);
    case Family::vonmises:
      return v * 2 * std::numbers::pi / t.period;
    case Family::beta:
      return (v - t.lo) / (t.hi - t.lo);
    default:
      return v;
  }
}

inline void stats_clear(PrimStats& s, Family f, const StatType& t) {
  s = PrimStats{};
  if (f == Family::categorical)
    s.counts.assign(static_cast<size_t>(t.cardinality), 0);
}

inline void stats_add(PrimStats& s, Family f, const StatType& t, double v) {
  double x = internal_value(f, t, v);
  s.n += 1;
  s.fitted = false;
  switch (f) {
    case Family::bernoulli:
      s.sum += x;
      break;
    case Family::categorical:
      s.counts.at(static_cast<size_t>(x)) += 1;
      break;
    case Family::poisson:
      s.sum += x;
      s.sum_lgamma += std::lgamma(x + 1);
      break;
    case Family::geometric:
    case Family::exponential:
      s.sum += x;
      break;
    case Family::vonmises:
      s.sum_cos += std::cos(x);
      s.sum_sin += std::sin(x);
      break;
    case Family::lognormal:
    case Family::normal:
    case Family::normal_trunc:
      s.sum += x;
      s.sum_sq += x * x;
      break;
    case Family::beta: {
      double u = std::min(std::max(x, 1e-12), 1 - 1e-12);
      s.sum_log_u += std::log(u);
      s.sum_log_1mu += std::log1p(-u);
      s.sum += u;
      s.sum_sq += u * u;
      break;
    }
  }
}

// Normal-inverse-gamma posterior for (n, sum, sum_sq) under NIG(m, V, a, b).
struct NigPosterior {
  double m, V, a, b;
};

inline NigPosterior nig_posterior(const PrimStats& s, const Hypers& h) {
  double Vn = 1.0 / (1.0 / h.V + s.n);
  double mn = Vn * (h.m / h.V + s.sum);
  double an = h.a + 0.5 * s.n;
  double bn = h.b + 0.5 * (s.sum_sq + h.m * h.m / h.V - mn * mn / Vn);
  bn = std::max(bn, 1e-12);
  return {mn, Vn, an, bn};
}

inline double nig_predictive_logpdf(double x, const PrimStats& s,
                                    const Hypers& h) {
  NigPosterior p = nig_posterior(s, h);
  return student_t_logpdf(x, 2 * p.a, p.m, std::sqrt(p.b * (1 + p.V) / p.a));
}

inline double nig_marginal(const PrimStats& s, const Hypers& h) {
  NigPosterior p = nig_posterior(s, h);
  return -0.5 * s.n * kLn2Pi + 0.5 * (std::log(p.V) - std::log(h.V)) +
         h.a * std::log(h.b) - p.a * std::log(p.b) + std::lgamma(p.a) -
         std::lgamma(h.a);
}

inline double nig_simulate(const PrimStats& s, const Hypers& h, Rng& rng) {
  NigPosterior p = nig_posterior(s, h);
  double tau = rng.gamma(p.a) / p.b;
  double var = 1.0 / tau;
  double mu = rng.normal(p.m, std::sqrt(var * p.V));
  return rng.normal(mu, std::sqrt(var));
}

// Maximum-likelihood fits for the non-conjugate families, cached on the
// statistics object. Degenerate sample sizes fall back to wide defaults.
inline void fit_vonmises(const PrimStats& s) {
  if (s.fitted) return;
  s.fitted = true;
  double R = std::hypot(s.sum_cos, s.sum_sin);
  if (s.n <= 1 || R < 1e-12) {
    s.fit1 = std::numbers::pi;  // mean direction
    s.fit2 = 0.0;               // concentration
    return;
  }
  s.fit1 = std::atan2(s.sum_sin, s.sum_cos);
  double rbar = std::min(R / s.n, 1.0 - 1e-10);
  double kappa;
  if (rbar < 0.53)
    kappa = 2 * rbar + rbar * rbar * rbar + 5.0 * std::pow(rbar, 5) / 6.0;
  else if (rbar < 0.85)
    kappa = -0.4 + 1.39 * rbar + 0.43 / (1 - rbar);
  else
    kappa = 1.0 / (rbar * rbar * rbar - 4 * rbar * rbar + 3 * rbar);
  s.fit2 = std::min(kappa, 1e4);
}

inline void fit_normal_trunc(const PrimStats& s, const StatType& t) {
  if (s.fitted) return;
  s.fitted = true;
  if (s.n <= 1) {
    s.fit1 = 0.5 * (t.lo + t.hi);
    s.fit2 = t.hi - t.lo;
    return;
  }
  double mean = s.sum / s.n;
  double var = std::max(s.sum_sq / s.n - mean * mean, 0.0);
  s.fit1 = mean;
  s.fit2 = std::max(std::sqrt(var), 1e-3 * (t.hi - t.lo));
}

inline void fit_beta(const PrimStats& s) {
  if (s.fitted) return;
  s.fitted = true;
  if (s.n <= 1) {
    s.fit1 = 1.0;
    s.fit2 = 1.0;
    return;
  }
  // Grid maximum likelihood over (strength, balance).
  double best = -kInf, best_a = 1.0, best_b = 1.0;
  for (double strength : geomspace(0.5, 400.0, 30)) {
    for (double balance : linspace(0.02, 0.98, 25)) {
      double a = strength * balance, b = strength * (1 - balance);
      double ll = s.n * (std::lgamma(strength) - std::lgamma(a) -
                         std::lgamma(b)) +
                  (a - 1) * s.sum_log_u + (b - 1) * s.sum_log_1mu;
      if (ll > best) {
        best = ll;
        best_a = a;
        best_b = b;
      }
    }
  }
  s.fit1 = best_a;
  s.fit2 = best_b;
}

inline double trunc_log_z(double mu, double sd, const StatType& t) {
  double z = normal_cdf(t.hi, mu, sd) - normal_cdf(t.lo, mu, sd);
  return std::log(std::max(z, 1e-300));
}

// Predictive log density of one new value given statistics and hypers.
inline double logpdf(Family f, const StatType& t, const PrimStats& s,
                     const Hypers& h, double v) {
  double x = internal_value(f, t, v);
  switch (f) {
    case Family::bernoulli: {
      double p1 = (h.a + s.sum) / (h.a + h.b + s.n);
      return std::log(x > 0.5 ? p1 : 1 - p1);
    }
    case Family::categorical: {
      size_t i = static_cast<size_t>(x);
      double S = static_cast<double>(s.counts.size());
      return std::log((h.a + s.counts[i]) / (S * h.a + s.n));
    }
    case Family::poisson: {
      double an = h.a + s.sum, bn = h.b + s.n;
      return std::lgamma(an + x) - std::lgamma(an) - std::lgamma(x + 1) +
             an * std::log(bn) - (an + x) * std::log(bn + 1);
    }
    case Family::geometric: {
      double an = h.a + s.n, bn = h.b + s.sum;
      return lbeta(an + 1, bn + x) - lbeta(an, bn);
    }
    case Family::exponential: {
      double an = h.a + s.n, bn = h.b + s.sum;
      return std::log(an) + an * std::log(bn) - (an + 1) * std::log(bn + x);
    }
    case Family::normal:
      return nig_predictive_logpdf(x, s, h);
    case Family::lognormal:
      return nig_predictive_logpdf(x, s, h) - x;  // x is log(v)
    case Family::vonmises: {
      fit_vonmises(s);
      return s.fit2 * std::cos(x - s.fit1) - log_bessel_i0(s.fit2) -
             std::log(t.period);
    }
    case Family::normal_trunc: {
      fit_normal_trunc(s, t);
      return normal_logpdf(x, s.fit1, s.fit2) -
             trunc_log_z(s.fit1, s.fit2, t);
    }
    case Family::beta: {
      fit_beta(s);
      double u = std::min(std::max(x, 1e-12), 1 - 1e-12);
      return (s.fit1 - 1) * std::log(u) + (s.fit2 - 1) * std::log1p(-u) -
             lbeta(s.fit1, s.fit2) - std::log(t.hi - t.lo);
    }
  }
  return -kInf;
}

// Log marginal likelihood of all folded values. Closed form for conjugate
// families; the joint density under the fitted parameters otherwise.
inline double logpdf_marginal(Family f, const StatType& t, const PrimStats& s,
                              const Hypers& h) {
  switch (f) {
    case Family::bernoulli:
      return lbeta(h.a + s.sum, h.b + (s.n - s.sum)) - lbeta(h.a, h.b);
    case Family::categorical: {
      double S = static_cast<double>(s.counts.size());
      double out = std::lgamma(S * h.a) - std::lgamma(S * h.a + s.n);
      for (int64_t c : s.counts)
        out += std::lgamma(h.a + c) - std::lgamma(h.a);
      return out;
    }
    case Family::poisson: {
      double an = h.a + s.sum, bn = h.b + s.n;
      return std::lgamma(an) - std::lgamma(h.a) + h.a * std::log(h.b) -
             an * std::log(bn) - s.sum_lgamma;
    }
    case Family::geometric:
      return lbeta(h.a + s.n, h.b + s.sum) - lbeta(h.a, h.b);
    case Family::exponential:
      return std::lgamma(h.a + s.n) - std::lgamma(h.a) +
             h.a * std::log(h.b) - (h.a + s.n) * std::log(h.b + s.sum);
    case Family::normal:
      return nig_marginal(s, h);
    case Family::lognormal:
      return nig_marginal(s, h) - s.sum;  // sum of logs is the jacobian
    case Family::vonmises: {
      fit_vonmises(s);
      return s.fit2 * (std::cos(s.fit1) * s.sum_cos +
                       std::sin(s.fit1) * s.sum_sin) -
             s.n * (log_bessel_i0(s.fit2) + std::log(t.period));
    }
    case Family::normal_trunc: {
      fit_normal_trunc(s, t);
      double mu = s.fit1, sd = s.fit2;
      double quad = s.sum_sq - 2 * mu * s.sum + s.n * mu * mu;
      return -0.5 * s.n * kLn2Pi - s.n * std::log(sd) -
             quad / (2 * sd * sd) - s.n * trunc_log_z(mu, sd, t);
    }
    case Family::beta: {
      fit_beta(s);
      return (s.fit1 - 1) * s.sum_log_u + (s.fit2 - 1) * s.sum_log_1mu -
             s.n * (lbeta(s.fit1, s.fit2) + std::log(t.hi - t.lo));
    }
  }
  return -kInf;
}

inline double simulate(Family f, const StatType& t, const PrimStats& s,
                       const Hypers& h, Rng& rng) {
  switch (f) {
    case Family::bernoulli: {
      double p1 = (h.a + s.sum) / (h.a + h.b + s.n);
      return rng.uniform() < p1 ? 1.0 : 0.0;
    }
    case Family::categorical: {
      double S = static_cast<double>(s.counts.size());
      double u = rng.uniform() * (S * h.a + s.n);
      double acc = 0;
      for (size_t i = 0; i < s.counts.size(); ++i) {
        acc += h.a + s.counts[i];
        if (u < acc) return static_cast<double>(i);
      }
      return static_cast<double>(s.counts.size() - 1);
    }
    case Family::poisson: {
      double lambda = rng.gamma(h.a + s.sum) / (h.b + s.n);
      return static_cast<double>(rng.poisson(lambda)) / t.base;
    }
    case Family::geometric: {
      double theta = rng.beta(h.a + s.n, h.b + s.sum);
      return static_cast<double>(rng.geometric(theta)) / t.base;
    }
    case Family::exponential: {
      double lambda = rng.gamma(h.a + s.n) / (h.b + s.sum);
      return rng.exponential(lambda);
    }
    case Family::normal:
      return nig_simulate(s, h, rng);
    case Family::lognormal: {
      double y = std::min(std::max(nig_simulate(s, h, rng), -700.0), 700.0);
      return std::exp(y);
    }
    case Family::vonmises: {
      fit_vonmises(s);
      for (;;) {
        double theta = rng.vonmises(s.fit1, s.fit2);
        double v = theta * t.period / (2 * std::numbers::pi);
        if (v > 0 && v < t.period) return v;
      }
    }
    case Family::normal_trunc: {
      fit_normal_trunc(s, t);
      for (int tries = 0; tries < 100; ++tries) {
        double v = rng.normal(s.fit1, s.fit2);
        if (v > t.lo && v < t.hi) return v;
      }
      double plo = normal_cdf(t.lo, s.fit1, s.fit2);
      double phi = normal_cdf(t.hi, s.fit1, s.fit2);
      double u = plo + (phi - plo) * rng.uniform_pos();
      double v = s.fit1 + s.fit2 * normal_icdf(std::min(std::max(u, 1e-12),
                                                        1 - 1e-12));
      return std::min(std::max(v, t.lo + 1e-9 * (t.hi - t.lo)),
                      t.hi - 1e-9 * (t.hi - t.lo));
    }
    case Family::beta: {
      fit_beta(s);
      for (;;) {
        double u = rng.beta(s.fit1, s.fit2);
        double v = t.lo + u * (t.hi - t.lo);
        if (v > t.lo && v < t.hi) return v;
      }
    }
  }
  return 0.0;
}

// Data-driven hyperparameter grids: 30 points per dimension, spanning the
// observed range of the column on a geometric (or linear, for locations)
// scale.
inline HyperGrids hyper_grids(Family f, const StatType& t,
                              const std::vector<double>& column,
                              int n_grid = 30) {
  HyperGrids g;
  double n = std::max<double>(column.size(), 2.0);
  double mean = 0, var = 0, lo = 0, hi = 0;
  if (!column.empty()) {
    std::vector<double> xs;
    xs.reserve(column.size());
    for (double v : column) xs.push_back(internal_value(f, t, v));
    lo = *std::min_element(xs.begin(), xs.end());
    hi = *std::max_element(xs.begin(), xs.end());
    for (double x : xs) mean += x;
    mean /= xs.size();
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size();
  }
  switch (f) {
    case Family::bernoulli:
    case Family::geometric:
      g.a = geomspace(1 / n, n, n_grid);
      g.b = geomspace(1 / n, n, n_grid);
      break;
    case Family::categorical:
      g.a = geomspace(1 / n, n, n_grid);
      break;
    case Family::poisson: {
      double scale = std::max(mean, 1.0);
      g.a = geomspace(1 / n, n * scale, n_grid);
      g.b = geomspace(1 / n, n, n_grid);
      break;
    }
    case Family::exponential: {
      double scale = std::max(mean, 1e-3);
      g.a = geomspace(1 / n, n, n_grid);
      g.b = geomspace(scale / n, scale * n, n_grid);
      break;
    }
    case Family::normal:
    case Family::lognormal: {
      if (hi <= lo) {
        lo -= 1;
        hi += 1;
      }
      double spread = std::max(var, 1e-3);
      g.m = linspace(lo, hi, n_grid);
      g.V = geomspace(1 / n, n, n_grid);
      g.a = geomspace(1 / n, n, n_grid);
      g.b = geomspace(spread / n, spread * n, n_grid);
      break;
    }
    case Family::vonmises:
    case Family::normal_trunc:
    case Family::beta:
      break;  // maximum likelihood; nothing to grid
  }
  return g;
}

inline Hypers default_hypers(Family f, const StatType& t,
                             const std::vector<double>& column) {
  HyperGrids g = hyper_grids(f, t, column);
  Hypers h;
  auto mid = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? fallback : v[v.size() / 2];
  };
  h.m = mid(g.m, 0.0);
  h.V = mid(g.V, 1.0);
  h.a = mid(g.a, 1.0);
  h.b = mid(g.b, 1.0);
  return h;
}

// One systematic-scan gridded Gibbs pass over the hyperparameter dimensions.
// `score` evaluates the full-model log marginal at the current hypers.
template <typename ScoreFn>
void hyper_gibbs_sweep(Hypers& h, const HyperGrids& g, ScoreFn&& score,
                       Rng& rng) {
  auto pass = [&](const std::vector<double>& grid, double Hypers::*dim) {
    if (grid.empty()) return;
    std::vector<double> logw(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
      h.*dim = grid[i];
      logw[i] = score();
    }
    h.*dim = grid[rng.categorical_log(logw)];
  };
  pass(g.m, &Hypers::m);
  pass(g.V, &Hypers::V);
  pass(g.a, &Hypers::a);
  pass(g.b, &Hypers::b);
}

}  // namespace prim

// A single-variable population model with a conjugate prior (or maximum
// likelihood point estimate) over its family parameters.
class Primitive : public Cgpm {
 public:
  Primitive(std::shared_ptr<const Population> pop, int var)
      : Primitive(std::move(pop), var, Family{}, true) {}

  Primitive(std::shared_ptr<const Population> pop, int var, Family f)
      : Primitive(std::move(pop), var, f, false) {}

  Family family() const { return family_; }
  const Hypers& hypers() const { return hypers_; }
  void set_hypers(const Hypers& h) { hypers_ = h; }
  const PrimStats& stats() const { return stats_; }

  double logpdf_marginal() const {
    return prim::logpdf_marginal(family_, type_of(var_), stats_, hypers_);
  }

  void infer(const InferProgram& program, Rng& rng) override {
    if (!family_conjugate(family_)) return;
    std::vector<double> column = column_values(kNoExclude);
    HyperGrids grids = prim::hyper_grids(family_, type_of(var_), column);
    for (int i = 0; i < std::max(program.iterations, 1); ++i) {
      prim::hyper_gibbs_sweep(
          hypers_, grids,
          [&] {
            return prim::logpdf_marginal(family_, type_of(var_), stats_,
                                         hypers_);
          },
          rng);
    }
  }

 protected:
  void on_incorporate(MemberId, int, double) override { refold(kNoExclude); }
  void on_unincorporate(MemberId, int) override { refold(kNoExclude); }

  RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                          const RowValues&, Rng& rng) const override {
    const PrimStats& s = stats_for_member(r);
    return {{var_, prim::simulate(family_, type_of(var_), s, hypers_, rng)}};
  }

  double logpdf_impl(MemberId r, const RowValues& query,
                     const RowValues&) const override {
    const PrimStats& s = stats_for_member(r);
    return prim::logpdf(family_, type_of(var_), s, hypers_, query.at(var_));
  }

 private:
  static constexpr MemberId kNoExclude = std::numeric_limits<MemberId>::min();

  Primitive(std::shared_ptr<const Population> pop, int var, Family f,
            bool use_default)
      : Cgpm(std::move(pop), {var}, {}), var_(var) {
    family_ = use_default ? default_family(type_of(var).kind) : f;
    require(family_matches(family_, type_of(var).kind),
            "primitive: family does not match the variable's type");
    prim::stats_clear(stats_, family_, type_of(var_));
  }

  std::vector<double> column_values(MemberId exclude) const {
    std::vector<double> out;
    for (const auto& [r, row] : data().rows()) {
      if (r == exclude) continue;
      auto it = row.find(var_);
      if (it != row.end()) out.push_back(it->second);
    }
    return out;
  }

  void refold(MemberId exclude) {
    prim::stats_clear(stats_, family_, type_of(var_));
    for (double v : column_values(exclude))
      prim::stats_add(stats_, family_, type_of(var_), v);
  }

  // Queries about an incorporated member must not condition on that
  // member's own measurement.
  const PrimStats& stats_for_member(MemberId r) const {
    if (!data().has(r, var_)) return stats_;
    scratch_ = PrimStats{};
    prim::stats_clear(scratch_, family_, type_of(var_));
    for (double v : column_values(r))
      prim::stats_add(scratch_, family_, type_of(var_), v);
    return scratch_;
  }

  Family family_;
  int var_;
  Hypers hypers_;
  PrimStats stats_;
  mutable PrimStats scratch_;
};

}  // namespace cgpm
