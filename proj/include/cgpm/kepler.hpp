// Copyright 2026
// See LICENSE.txt

// Orbital-mechanics plugin: a deterministic period law on (apogee, perigee)
// plus a Dirichlet-process mixture of normals on the period residual. The
// residual cluster id and the noise value are exposed as queryable outputs.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/primitives.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

class Kepler : public Cgpm {
 public:
  // Period in minutes for apogee/perigee altitudes in km.
  static double law(double apogee_km, double perigee_km) {
    const double GM = 398600.4418;
    const double earth_radius = 6378.0;
    double a = (std::abs(apogee_km) + std::abs(perigee_km)) / 2 + earth_radius;
    return 2 * std::numbers::pi * std::sqrt(a * a * a / GM) / 60;
  }

  Kepler(std::shared_ptr<const Population> pop, int period, int cluster,
         int noise, int apogee, int perigee, uint64_t seed = 1,
         double alpha = 0.5, Hypers hypers = Hypers{1, 1, 1, 1})
      : Cgpm(std::move(pop), {period, cluster, noise}, {apogee, perigee}),
        alpha_(alpha),
        hypers_(hypers),
        rng_(mix_seed(seed, 0x6b65)) {
    require(type_of(period).kind == StatKind::numerical,
            "kepler: period output must be numerical");
    require(!type_of(noise).discrete(),
            "kepler: noise output must be a continuous kind");
    require(type_of(cluster).kind == StatKind::count,
            "kepler: cluster output must be a count kind");
    require(alpha_ > 0, "kepler: concentration must be positive");
  }

  int period_var() const { return outputs()[0]; }
  int cluster_var() const { return outputs()[1]; }
  int noise_var() const { return outputs()[2]; }
  double concentration() const { return alpha_; }
  const Hypers& residual_hypers() const { return hypers_; }

  bool accepts_measurement(int var) const override {
    return var == period_var() || has_input(var);
  }

  int n_clusters() const { return static_cast<int>(clusters_.size()); }

  int cluster_of(MemberId r) const {
    auto it = assign_.find(r);
    require(it != assign_.end(), "kepler: member has no assigned cluster");
    return it->second;
  }

  std::map<MemberId, int> assignments() const { return assign_; }

  void set_assignments(const std::map<MemberId, int>& assign) {
    for (const auto& [r, k] : assign) {
      require(complete(r), "kepler: assigned member lacks period or inputs");
      require(k >= 0, "kepler: cluster ids are non-negative");
    }
    clusters_.clear();
    assign_.clear();
    for (const auto& [r, k] : assign) seat(r, k);
  }

  // Residual of a stored member: period minus the law on its inputs.
  double residual(MemberId r) const {
    auto cached = resid_.find(r);
    if (cached != resid_.end()) return cached->second;
    auto t = data().get(r, period_var());
    auto a = data().get(r, inputs()[0]);
    auto p = data().get(r, inputs()[1]);
    require(t && a && p, "kepler: member lacks period or inputs");
    return resid_[r] = *t - law(*a, *p);
  }

  void infer(const InferProgram& program, Rng& rng) override {
    if (program.targets(outputs()).empty() || !program.rows) return;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration<double>(
                        program.seconds > 0 ? program.seconds : 0.0);
    int sweeps = program.seconds > 0 ? std::numeric_limits<int>::max()
                                     : std::max(program.iterations, 1);
    std::vector<MemberId> members;
    for (const auto& [r, k] : assign_) members.push_back(r);
    for (int s = 0; s < sweeps; ++s) {
      for (MemberId r : members) {
        unseat(r);
        View view;
        view.eps_known = true;
        view.eps = residual(r);
        auto scores = posterior_clusters(view, r);
        seat(r, scores[rng.categorical_log(values_of(scores))].first);
      }
      if (program.seconds > 0 && std::chrono::steady_clock::now() >= deadline)
        break;
    }
  }

 protected:
  void on_incorporate(MemberId r, int, double) override {
    resid_.erase(r);
    if (assign_.count(r)) unseat(r);
    if (!complete(r)) return;
    View view;
    view.eps_known = true;
    view.eps = residual(r);
    auto scores = posterior_clusters(view, r);
    seat(r, scores[rng_.categorical_log(values_of(scores))].first);
  }

  void on_unincorporate(MemberId r, int) override {
    resid_.erase(r);
    if (assign_.count(r)) unseat(r);
  }

  RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    View view = parse_view(evidence);
    auto scores = posterior_clusters(view, r);
    int k = scores[rng.categorical_log(values_of(scores))].first;
    RowValues out;
    bool want_period = false, want_noise = false, want_cluster = false;
    for (int q : query) {
      want_period |= q == period_var();
      want_noise |= q == noise_var();
      want_cluster |= q == cluster_var();
    }
    if (want_cluster) out[cluster_var()] = label_of(k);
    if (want_period || want_noise) {
      double eps = view.eps_known
                       ? view.eps
                       : prim::nig_simulate(cluster_stats(k, r), hypers_, rng);
      if (want_noise) out[noise_var()] = eps;
      if (want_period) out[period_var()] = view.base + eps;
    }
    return out;
  }

  double logpdf_impl(MemberId r, const RowValues& query,
                     const RowValues& evidence) const override {
    // Chain rule through the latent seat: p(cluster | E) then the collapsed
    // residual predictive. Period and noise evidence pin the same residual.
    View view = parse_view(evidence);
    double qeps = 0;
    bool q_has_eps = false;
    int q_cluster = kFree;
    for (const auto& [v, x] : query) {
      if (v == cluster_var()) {
        q_cluster = index_of(x);
        if (q_cluster < 0) return -kInf;
      } else {
        double eps = v == noise_var() ? x : x - view.base;
        if (q_has_eps && std::abs(eps - qeps) > 1e-9) return -kInf;
        if (view.eps_known && std::abs(eps - view.eps) > 1e-9) return -kInf;
        qeps = eps;
        q_has_eps = true;
      }
    }

    auto scores = posterior_clusters(view, r);
    double z = logsumexp(values_of(scores));
    require(z > -kInf, "kepler: evidence has zero probability");
    if (q_cluster != kFree) {
      double lp = -kInf;
      for (const auto& [k, s] : scores)
        if (k == q_cluster) lp = s - z;
      if (lp == -kInf) return -kInf;
      if (q_has_eps && !view.eps_known)
        lp += prim::nig_predictive_logpdf(qeps, cluster_stats(q_cluster, r),
                                          hypers_);
      return lp;
    }
    if (q_has_eps && !view.eps_known) {
      std::vector<double> terms;
      for (const auto& [k, s] : scores)
        terms.push_back(s - z + prim::nig_predictive_logpdf(
                                    qeps, cluster_stats(k, r), hypers_));
      return logsumexp(terms);
    }
    // The evidence already pins every queried value (degenerate but legal).
    return q_has_eps ? 0.0 : -kInf;
  }

 private:
  struct Cluster {
    std::set<MemberId> members;
    PrimStats stats;
  };

  struct View {
    double base = 0;  // law(apogee, perigee)
    bool eps_known = false;
    double eps = 0;
    int cluster = kFree;  // kFree marks unconstrained
  };

  static constexpr int kFree = -1;

  double alpha_;
  Hypers hypers_;
  mutable Rng rng_;
  std::map<MemberId, int> assign_;
  std::map<int, Cluster> clusters_;
  mutable std::map<MemberId, double> resid_;
  mutable PrimStats scratch_;

  bool complete(MemberId r) const {
    return data().has(r, period_var()) && data().has(r, inputs()[0]) &&
           data().has(r, inputs()[1]);
  }

  double label_of(int k) const {
    return static_cast<double>(k) / type_of(cluster_var()).base;
  }

  // Maps an external cluster label back to a seat index; negative = invalid.
  int index_of(double label) const {
    double scaled = label * type_of(cluster_var()).base;
    double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-9 || rounded < 0) return -2;
    return static_cast<int>(rounded);
  }

  // Rebuilds one cluster's statistics by folding residuals in member-id
  // order, so equal member sets give bit-identical statistics.
  void refold(int k) {
    Cluster& cl = clusters_.at(k);
    prim::stats_clear(cl.stats, Family::normal, StatType::numerical());
    for (MemberId r : cl.members)
      prim::stats_add(cl.stats, Family::normal, StatType::numerical(),
                      residual(r));
  }

  void seat(MemberId r, int k) {
    assign_[r] = k;
    clusters_[k].members.insert(r);
    refold(k);
  }

  void unseat(MemberId r) {
    int k = assign_.at(r);
    assign_.erase(r);
    Cluster& cl = clusters_.at(k);
    cl.members.erase(r);
    if (cl.members.empty())
      clusters_.erase(k);
    else
      refold(k);
  }

  int free_id() const {
    int id = 0;
    while (clusters_.count(id)) ++id;
    return id;
  }

  // Statistics of seat k as viewed from a query about member r: r's own
  // residual, when it sits in k, is folded out. Unknown seats are empty.
  const PrimStats& cluster_stats(int k, MemberId r) const {
    auto it = clusters_.find(k);
    auto at = assign_.find(r);
    bool excluded = at != assign_.end() && at->second == k;
    if (it != clusters_.end() && !excluded) return it->second.stats;
    prim::stats_clear(scratch_, Family::normal, StatType::numerical());
    if (it != clusters_.end())
      for (MemberId m : it->second.members)
        if (m != r)
          prim::stats_add(scratch_, Family::normal, StatType::numerical(),
                          residual(m));
    return scratch_;
  }

  // Seating distribution over public seat ids, weighted by the residual
  // predictive when the evidence pins the residual. The member's own
  // contribution is excluded throughout; an emptied singleton seat takes
  // the role of the fresh seat.
  std::vector<std::pair<int, double>> posterior_clusters(
      const View& view, MemberId r) const {
    int fresh = free_id();
    std::map<int, double> weights;
    for (const auto& [k, cl] : clusters_) {
      const PrimStats& s = cluster_stats(k, r);
      if (s.n == 0) {
        fresh = k;
        continue;
      }
      double w = std::log(static_cast<double>(s.n));
      if (view.eps_known)
        w += prim::nig_predictive_logpdf(view.eps, s, hypers_);
      weights[k] = w;
    }
    {
      prim::stats_clear(scratch_, Family::normal, StatType::numerical());
      double w = std::log(alpha_);
      if (view.eps_known)
        w += prim::nig_predictive_logpdf(view.eps, scratch_, hypers_);
      weights[fresh] = w;
    }
    std::vector<std::pair<int, double>> scores;
    if (view.cluster != kFree) {
      auto it = weights.find(view.cluster);
      scores.emplace_back(view.cluster,
                          it == weights.end() ? -kInf : it->second);
      return scores;
    }
    for (const auto& [k, w] : weights) scores.emplace_back(k, w);
    return scores;
  }

  View parse_view(const RowValues& evidence) const {
    auto a = evidence.find(inputs()[0]);
    auto p = evidence.find(inputs()[1]);
    require(a != evidence.end() && p != evidence.end(),
            "kepler: apogee and perigee inputs are required");
    View view;
    view.base = law(a->second, p->second);
    auto t = evidence.find(period_var());
    if (t != evidence.end()) {
      view.eps_known = true;
      view.eps = t->second - view.base;
    }
    auto e = evidence.find(noise_var());
    if (e != evidence.end()) {
      require(!view.eps_known || std::abs(e->second - view.eps) < 1e-9,
              "kepler: period and noise evidence disagree");
      view.eps_known = true;
      view.eps = e->second;
    }
    auto c = evidence.find(cluster_var());
    if (c != evidence.end()) {
      view.cluster = index_of(c->second);
      require(view.cluster >= 0, "kepler: cluster evidence is not a seat id");
    }
    return view;
  }

  static std::vector<double> values_of(
      const std::vector<std::pair<int, double>>& scores) {
    std::vector<double> v;
    v.reserve(scores.size());
    for (const auto& [k, s] : scores) v.push_back(s);
    return v;
  }
};

}  // namespace cgpm
