// Copyright 2026
// See LICENSE.txt

// Generative nearest neighbors: each query builds an ad-hoc product of
// maximum-likelihood primitive models over the K rows closest to the
// evidence under a range-scaled mixed-type distance.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/primitives.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

class GenKnn : public Cgpm {
 public:
  GenKnn(std::shared_ptr<Population> pop, std::vector<int> outputs, int k = 5)
      : Cgpm(std::move(pop), std::move(outputs), {}), k_(k) {
    require(k_ >= 1, "knn: neighborhood size must be at least 1");
  }

  int k() const { return k_; }
  void set_k(int k) {
    require(k >= 1, "knn: neighborhood size must be at least 1");
    k_ = k;
  }

  // Range-scaled distance between evidence values and a stored row,
  // averaged over the evidence variables.
  double distance(const RowValues& evidence,
                  const std::map<int, double>& row) const {
    double total = 0;
    for (const auto& [v, x] : evidence) {
      double y = row.at(v);
      const StatType& t = type_of(v);
      switch (t.kind) {
        case StatKind::binary:
        case StatKind::nominal:
          total += x == y ? 0.0 : 1.0;
          break;
        case StatKind::cyclic: {
          double d = std::fmod(std::abs(x - y), t.period);
          total += std::min(d, t.period - d) / (t.period / 2);
          break;
        }
        default: {
          double range = observed_range(v);
          total += range > 0 ? std::abs(x - y) / range : 0.0;
        }
      }
    }
    return total / evidence.size();
  }

  // The K nearest members under the evidence, ties to the smaller id.
  // Empty evidence falls back to the whole dataset.
  std::vector<MemberId> neighborhood(MemberId exclude,
                                     const RowValues& evidence) const {
    std::vector<std::pair<double, MemberId>> order;
    for (const auto& [r, row] : data().rows()) {
      if (r == exclude) continue;
      if (evidence.empty()) {
        order.emplace_back(0.0, r);
        continue;
      }
      bool eligible = true;
      for (const auto& [v, x] : evidence)
        if (!row.count(v)) { eligible = false; break; }
      if (eligible) order.emplace_back(distance(evidence, row), r);
    }
    if (evidence.empty()) {
      require(!order.empty(), "knn: empty dataset");
      std::vector<MemberId> all;
      for (const auto& [d, r] : order) all.push_back(r);
      return all;
    }
    require(static_cast<int>(order.size()) >= k_,
            "knn: fewer than K rows carry the evidence variables");
    std::sort(order.begin(), order.end());
    std::vector<MemberId> out;
    for (int i = 0; i < k_; ++i) out.push_back(order[i].second);
    return out;
  }

  void infer(const InferProgram&, Rng&) override {}

 protected:
  RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    auto hood = neighborhood(r, evidence);
    RowValues out;
    for (int q : query) {
      PrimStats s = local_stats(q, hood);
      out[q] = ml_simulate(q, s, rng);
    }
    return out;
  }

  double logpdf_impl(MemberId r, const RowValues& query,
                     const RowValues& evidence) const override {
    auto hood = neighborhood(r, evidence);
    double lp = 0;
    for (const auto& [q, x] : query) {
      PrimStats s = local_stats(q, hood);
      lp += ml_logpdf(q, s, x);
    }
    return lp;
  }

 private:
  int k_;

  double observed_range(int v) const {
    double lo = kInf, hi = -kInf;
    for (const auto& [r, row] : data().rows()) {
      auto it = row.find(v);
      if (it == row.end()) continue;
      lo = std::min(lo, it->second);
      hi = std::max(hi, it->second);
    }
    return hi > lo ? hi - lo : 0.0;
  }

  PrimStats local_stats(int q, const std::vector<MemberId>& hood) const {
    Family f = default_family(type_of(q).kind);
    PrimStats s;
    prim::stats_clear(s, f, type_of(q));
    for (MemberId r : hood) {
      auto v = data().get(r, q);
      if (v) prim::stats_add(s, f, type_of(q), *v);
    }
    require(s.n >= 1, "knn: no neighborhood values for '" +
                          population().var(q).name + "'");
    return s;
  }

  // Normal moments with a relative floor so a constant neighborhood stays
  // simulable.
  static std::pair<double, double> ml_normal(const PrimStats& s) {
    double mean = s.sum / s.n;
    double var = s.sum_sq / s.n - mean * mean;
    double floor = 1e-9 * (1 + std::abs(mean));
    return {mean, std::sqrt(std::max(var, floor * floor))};
  }

  double ml_logpdf(int q, const PrimStats& s, double x) const {
    const StatType& t = type_of(q);
    Family f = default_family(t.kind);
    switch (f) {
      case Family::bernoulli: {
        double p = s.sum / s.n;
        double px = x == 1.0 ? p : 1 - p;
        return px > 0 ? std::log(px) : -kInf;
      }
      case Family::categorical: {
        double p = static_cast<double>(s.counts[static_cast<int>(x)]) / s.n;
        return p > 0 ? std::log(p) : -kInf;
      }
      case Family::normal: {
        auto [mean, sd] = ml_normal(s);
        return normal_logpdf(x, mean, sd);
      }
      case Family::lognormal: {
        auto [mean, sd] = ml_normal(s);  // moments of the logs
        return normal_logpdf(std::log(x), mean, sd) - std::log(x);
      }
      case Family::poisson: {
        double lam = s.sum / s.n;
        double k = prim::internal_value(f, t, x);
        if (lam <= 0) return k == 0 ? 0.0 : -kInf;
        return k * std::log(lam) - lam - std::lgamma(k + 1);
      }
      default:
        // Fitted-parameter families reuse the primitive density directly.
        return prim::logpdf(f, t, s, Hypers{}, x);
    }
  }

  double ml_simulate(int q, const PrimStats& s, Rng& rng) const {
    const StatType& t = type_of(q);
    Family f = default_family(t.kind);
    switch (f) {
      case Family::bernoulli:
        return rng.uniform() < s.sum / s.n ? 1.0 : 0.0;
      case Family::categorical: {
        std::vector<double> logp;
        for (int64_t c : s.counts)
          logp.push_back(c > 0 ? std::log(static_cast<double>(c) / s.n)
                               : -kInf);
        return static_cast<double>(rng.categorical_log(logp));
      }
      case Family::normal: {
        auto [mean, sd] = ml_normal(s);
        return rng.normal(mean, sd);
      }
      case Family::lognormal: {
        auto [mean, sd] = ml_normal(s);
        return std::exp(rng.normal(mean, sd));
      }
      case Family::poisson: {
        double lam = std::max(s.sum / s.n, 0.0);
        return rng.poisson(lam) / t.base;
      }
      default:
        return prim::simulate(f, t, s, Hypers{}, rng);
    }
  }
};

}  // namespace cgpm
