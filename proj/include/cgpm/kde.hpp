// Copyright 2026
// See LICENSE.txt

// Mixed-type product-kernel density estimation. Discrete variables use the
// Aitchison-Aitken match/mismatch kernel, continuous variables a Gaussian
// kernel, and cyclic variables a Gaussian kernel on the shortest circular
// distance. Marginalization drops kernels; conditioning reweights rows.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

class Kde : public Cgpm {
 public:
  Kde(std::shared_ptr<Population> pop, std::vector<int> outputs)
      : Cgpm(std::move(pop), std::move(outputs), {}) {
    for (int v : this->outputs()) bandwidths_[v] = 1.0;
  }

  double bandwidth(int var) const {
    ensure_fit();
    return bandwidths_.at(var);
  }

  void set_bandwidth(int var, double g) {
    require(has_output(var), "kde: unknown variable");
    if (discrete_kind(var)) {
      int S = symbol_count(var);
      require(g >= 0 && g <= (S - 1.0) / S,
              "kde: discrete bandwidth outside [0, (S-1)/S]");
    } else {
      require(g > 0, "kde: continuous bandwidth must be positive");
    }
    ensure_fit();
    bandwidths_[var] = g;
  }

  // Log kernel value for one variable, curried at a training value.
  double kernel_logpdf(int var, double query, double train) const {
    ensure_fit();
    return kernel_log(var, query, train, bandwidths_.at(var));
  }

  // Leave-one-out bandwidth selection over per-kind grids.
  void fit() {
    require(data().rows().size() >= 2, "kde: needs at least two rows");
    for (int v : outputs()) {
      std::vector<double> column;
      for (const auto& [r, row] : data().rows()) {
        auto it = row.find(v);
        if (it != row.end()) column.push_back(it->second);
      }
      bandwidths_[v] = loo_bandwidth(v, column);
    }
    dirty_ = false;
  }

  void infer(const InferProgram&, Rng&) override { fit(); }

 protected:
  void on_incorporate(MemberId, int, double) override { dirty_ = true; }
  void on_unincorporate(MemberId, int) override { dirty_ = true; }

  RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    ensure_fit();
    std::vector<int> need = query;
    for (const auto& [v, x] : evidence) need.push_back(v);
    std::vector<const std::map<int, double>*> rows;
    std::vector<double> logw;
    for (const auto& [rr, row] : data().rows()) {
      if (rr == r) continue;
      if (!covers(row, need)) continue;
      double w = 0;
      for (const auto& [v, x] : evidence)
        w += kernel_log(v, x, row.at(v), bandwidths_.at(v));
      rows.push_back(&row);
      logw.push_back(w);
    }
    require(!rows.empty(), "kde: no training rows cover the query pattern");
    const auto& row = *rows[rng.categorical_log(logw)];
    RowValues out;
    for (int q : query) out[q] = sample_kernel(q, row.at(q), rng);
    return out;
  }

  double logpdf_impl(MemberId r, const RowValues& query,
                     const RowValues& evidence) const override {
    ensure_fit();
    std::vector<int> need;
    for (const auto& [v, x] : query) need.push_back(v);
    for (const auto& [v, x] : evidence) need.push_back(v);
    std::vector<double> num;
    std::vector<double> den;
    for (const auto& [rr, row] : data().rows()) {
      if (rr == r) continue;
      bool has_ev = true;
      for (const auto& [v, x] : evidence)
        if (!row.count(v)) { has_ev = false; break; }
      if (has_ev && !evidence.empty()) {
        double w = 0;
        for (const auto& [v, x] : evidence)
          w += kernel_log(v, x, row.at(v), bandwidths_.at(v));
        den.push_back(w);
      }
      if (!covers(row, need)) continue;
      double w = 0;
      for (const auto& [v, x] : query)
        w += kernel_log(v, x, row.at(v), bandwidths_.at(v));
      for (const auto& [v, x] : evidence)
        w += kernel_log(v, x, row.at(v), bandwidths_.at(v));
      num.push_back(w);
    }
    require(!num.empty(), "kde: no training rows cover the query pattern");
    double lp = logsumexp(num) - std::log(static_cast<double>(num.size()));
    if (!evidence.empty())
      lp -= logsumexp(den) - std::log(static_cast<double>(den.size()));
    return lp;
  }

 private:
  std::map<int, double> bandwidths_;
  mutable bool dirty_ = true;

  void ensure_fit() const {
    if (dirty_ && data().rows().size() >= 2) const_cast<Kde*>(this)->fit();
  }

  bool discrete_kind(int var) const {
    StatKind k = type_of(var).kind;
    return k == StatKind::binary || k == StatKind::nominal;
  }

  int symbol_count(int var) const {
    return type_of(var).kind == StatKind::binary ? 2
                                                 : type_of(var).cardinality;
  }

  static bool covers(const std::map<int, double>& row,
                     const std::vector<int>& vars) {
    for (int v : vars)
      if (!row.count(v)) return false;
    return true;
  }

  double circular_gap(int var, double a, double b) const {
    double p = type_of(var).period;
    double d = std::fmod(std::abs(a - b), p);
    return std::min(d, p - d);
  }

  double kernel_log(int var, double q, double t, double g) const {
    if (discrete_kind(var)) {
      int S = symbol_count(var);
      double p = q == t ? 1 - g : g / (S - 1);
      return p > 0 ? std::log(p) : -kInf;
    }
    if (type_of(var).kind == StatKind::cyclic)
      return normal_logpdf(circular_gap(var, q, t), 0, g);
    return normal_logpdf(q, t, g);
  }

  double sample_kernel(int var, double t, Rng& rng) const {
    double g = bandwidths_.at(var);
    const StatType& type = type_of(var);
    if (discrete_kind(var)) {
      int S = symbol_count(var);
      if (rng.uniform() < 1 - g) return t;
      int other = static_cast<int>(rng.below(S - 1));
      return other >= static_cast<int>(t) ? other + 1 : other;
    }
    double v = t + g * rng.normal(0, 1);
    switch (type.kind) {
      case StatKind::cyclic: {
        v = std::fmod(v, type.period);
        if (v <= 0) v += type.period;
        if (v >= type.period) v = type.period / 2;
        return v;
      }
      case StatKind::count: {
        double scaled = std::max(0.0, std::round(v * type.base));
        return scaled / type.base;
      }
      case StatKind::magnitude:
        return std::max(v, std::numeric_limits<double>::min());
      case StatKind::numerical_ranged: {
        double eps = 1e-9 * (type.hi - type.lo);
        return std::min(std::max(v, type.lo + eps), type.hi - eps);
      }
      default:
        return v;
    }
  }

  double loo_bandwidth(int var, const std::vector<double>& column) const {
    size_t n = column.size();
    if (n < 2) return bandwidths_.at(var);
    std::vector<double> grid;
    if (discrete_kind(var)) {
      int S = symbol_count(var);
      grid = linspace(0, (S - 1.0) / S, 20);
    } else {
      double lo = *std::min_element(column.begin(), column.end());
      double hi = *std::max_element(column.begin(), column.end());
      double range = hi - lo;
      if (range <= 0) range = std::max(std::abs(hi), 1.0);
      grid = geomspace(range / 1000, range, 30);
    }
    double best = grid[0], best_obj = -kInf;
    for (double g : grid) {
      double obj = 0;
      for (size_t i = 0; i < n; ++i) {
        std::vector<double> terms;
        for (size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          terms.push_back(kernel_log(var, column[i], column[j], g));
        }
        obj += logsumexp(terms) - std::log(static_cast<double>(n - 1));
      }
      if (obj > best_obj + 1e-12) {
        best_obj = obj;
        best = g;
      }
    }
    return best;
  }
};

}  // namespace cgpm
