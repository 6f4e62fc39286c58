// Copyright 2026
// See LICENSE.txt

// Input-conditioned models: bagged tree ensembles for classification and
// regression, and conjugate Bayesian linear regression.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/primitives.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

namespace cart {

struct Example {
  std::vector<double> x;
  double y;
};

struct Node {
  int feat = -1;  // -1 marks a leaf
  double split = 0.0;
  bool equality = false;  // categorical test x == split, else x <= split
  int left = -1;
  int right = -1;
  double value = 0.0;
};

// Depth-limited CART tree. Classification leaves hold the majority label,
// regression leaves the mean response.
class Tree {
 public:
  void fit(const std::vector<Example>& data, const std::vector<bool>& nominal,
           bool classify, int max_depth) {
    nodes_.clear();
    std::vector<int> idx(data.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    build(data, nominal, classify, idx, max_depth);
  }

  double predict(const std::vector<double>& x) const {
    int at = 0;
    while (nodes_[at].feat >= 0) {
      const Node& n = nodes_[at];
      bool go_left =
          n.equality ? x[n.feat] == n.split : x[n.feat] <= n.split;
      at = go_left ? n.left : n.right;
    }
    return nodes_[at].value;
  }

 private:
  std::vector<Node> nodes_;

  static double leaf_value(const std::vector<Example>& data,
                           const std::vector<int>& idx, bool classify) {
    if (classify) {
      std::map<double, int> counts;
      for (int i : idx) counts[data[i].y] += 1;
      double best = counts.begin()->first;
      int n = 0;
      for (const auto& [label, c] : counts)
        if (c > n) { n = c; best = label; }
      return best;
    }
    double mean = 0;
    for (int i : idx) mean += data[i].y;
    return mean / idx.size();
  }

  static double impurity(const std::vector<Example>& data,
                         const std::vector<int>& idx, bool classify) {
    if (classify) {
      std::map<double, int> counts;
      for (int i : idx) counts[data[i].y] += 1;
      double g = 1.0;
      for (const auto& [label, c] : counts) {
        double p = static_cast<double>(c) / idx.size();
        g -= p * p;
      }
      return g;
    }
    double mean = 0, sq = 0;
    for (int i : idx) { mean += data[i].y; sq += data[i].y * data[i].y; }
    mean /= idx.size();
    return sq / idx.size() - mean * mean;
  }

  int build(const std::vector<Example>& data, const std::vector<bool>& nominal,
            bool classify, std::vector<int>& idx, int depth) {
    int me = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[me].value = leaf_value(data, idx, classify);
    double parent = impurity(data, idx, classify);
    if (depth <= 0 || idx.size() < 2 || parent <= 0) return me;

    int best_feat = -1;
    double best_split = 0, best_score = parent;
    bool best_eq = false;
    const size_t n_feat = data[idx[0]].x.size();
    for (size_t f = 0; f < n_feat; ++f) {
      std::vector<double> vals;
      for (int i : idx) vals.push_back(data[i].x[f]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      if (vals.size() < 2) continue;
      std::vector<std::pair<double, bool>> tests;
      if (nominal[f]) {
        for (double v : vals) tests.emplace_back(v, true);
      } else {
        size_t step = std::max<size_t>(1, (vals.size() - 1) / 32);
        for (size_t i = 0; i + 1 < vals.size(); i += step)
          tests.emplace_back((vals[i] + vals[i + 1]) / 2, false);
      }
      for (const auto& [split, eq] : tests) {
        std::vector<int> l, r;
        for (int i : idx) {
          bool go_left =
              eq ? data[i].x[f] == split : data[i].x[f] <= split;
          (go_left ? l : r).push_back(i);
        }
        if (l.empty() || r.empty()) continue;
        double score = (l.size() * impurity(data, l, classify) +
                        r.size() * impurity(data, r, classify)) /
                       idx.size();
        if (score < best_score - 1e-12) {
          best_score = score;
          best_feat = static_cast<int>(f);
          best_split = split;
          best_eq = eq;
        }
      }
    }
    if (best_feat < 0) return me;

    std::vector<int> l, r;
    for (int i : idx) {
      bool go_left = best_eq ? data[i].x[best_feat] == best_split
                             : data[i].x[best_feat] <= best_split;
      (go_left ? l : r).push_back(i);
    }
    nodes_[me].feat = best_feat;
    nodes_[me].split = best_split;
    nodes_[me].equality = best_eq;
    int lc = build(data, nominal, classify, l, depth - 1);
    int rc = build(data, nominal, classify, r, depth - 1);
    nodes_[me].left = lc;
    nodes_[me].right = rc;
    return me;
  }
};

}  // namespace cart

struct ForestConfig {
  int trees = 64;
  int max_depth = 8;
  double bag_fraction = 0.7;
};

// Vote smoothing: mix the ensemble's vote share with a uniform pmf.
inline double smoothed_vote(double share, int symbols, double alpha) {
  return (1 - alpha) * share + alpha / symbols;
}

namespace detail {

// Shared scaffolding for the tree ensembles: feature extraction over the
// input variables and lazy refits when the training data changes.
class ForestBase : public Cgpm {
 public:
  ForestBase(std::shared_ptr<Population> pop, int output,
             std::vector<int> inputs, uint64_t seed, ForestConfig config)
      : Cgpm(std::move(pop), {output}, std::move(inputs)),
        config_(config),
        rng_(mix_seed(seed, 0x7245)) {
    require(!this->inputs().empty(), "tree ensemble: needs input variables");
    require(config_.trees >= 1, "tree ensemble: needs at least one learner");
    for (int v : this->inputs())
      nominal_.push_back(type_of(v).discrete() &&
                         (type_of(v).kind == StatKind::binary ||
                          type_of(v).kind == StatKind::nominal));
  }

  int target() const { return outputs()[0]; }

  // Mean across learners of their point predictions.
  double point_prediction(const RowValues& in) const {
    ensure_fit();
    std::vector<double> x = features(in);
    double mean = 0;
    for (const auto& t : trees_) mean += t.predict(x);
    return mean / trees_.size();
  }

  void infer(const InferProgram& program, Rng& rng) override {
    (void)program;
    fit(rng);
  }

 protected:
  ForestConfig config_;
  std::vector<bool> nominal_;
  mutable std::vector<cart::Tree> trees_;
  mutable bool dirty_ = true;
  mutable Rng rng_;

  void on_incorporate(MemberId, int, double) override { dirty_ = true; }
  void on_unincorporate(MemberId, int) override { dirty_ = true; }

  std::vector<double> features(const RowValues& in) const {
    std::vector<double> x;
    for (int v : inputs()) {
      auto it = in.find(v);
      require(it != in.end(),
              "tree ensemble: missing input '" + population().var(v).name +
                  "'");
      x.push_back(it->second);
    }
    return x;
  }

  std::vector<cart::Example> training_pairs() const {
    std::vector<cart::Example> out;
    for (const auto& [r, row] : data().rows()) {
      auto yt = row.find(target());
      if (yt == row.end()) continue;
      cart::Example e;
      e.y = yt->second;
      bool complete = true;
      for (int v : inputs()) {
        auto it = row.find(v);
        if (it == row.end()) { complete = false; break; }
        e.x.push_back(it->second);
      }
      if (complete) out.push_back(std::move(e));
    }
    return out;
  }

  void ensure_fit() const {
    if (dirty_) const_cast<ForestBase*>(this)->fit(rng_);
  }

  void fit(Rng& rng) {
    auto pairs = training_pairs();
    require(!pairs.empty(), "tree ensemble: empty training set");
    bool classify = type_of(target()).discrete();
    size_t bag =
        std::max<size_t>(1, std::llround(config_.bag_fraction * pairs.size()));
    trees_.assign(config_.trees, cart::Tree());
    for (auto& tree : trees_) {
      std::vector<cart::Example> sample;
      for (size_t i = 0; i < bag; ++i)
        sample.push_back(pairs[rng.below(pairs.size())]);
      tree.fit(sample, nominal_, classify, config_.max_depth);
    }
    on_fit(pairs);
    dirty_ = false;
  }

  virtual void on_fit(const std::vector<cart::Example>&) {}
};

}  // namespace detail

// Classifier over a BINARY or NOMINAL output: learners vote, votes are
// smoothed toward uniform, and the smoothing weight is learned on a grid
// from the training-set likelihood.
class ForestClassifier : public detail::ForestBase {
 public:
  ForestClassifier(std::shared_ptr<Population> pop, int output,
                   std::vector<int> inputs, uint64_t seed = 1,
                   ForestConfig config = {})
      : ForestBase(std::move(pop), output, std::move(inputs), seed, config) {
    require(type_of(target()).kind == StatKind::binary ||
                type_of(target()).kind == StatKind::nominal,
            "classifier: output must be binary or nominal");
    symbols_ = type_of(target()).kind == StatKind::binary
                   ? 2
                   : type_of(target()).cardinality;
    alpha_grid_ = linspace(0.01, 0.5, 21);
    alpha_weights_.assign(alpha_grid_.size(),
                          1.0 / alpha_grid_.size());
  }

  std::vector<double> vote_share(const RowValues& in) const {
    ensure_fit();
    std::vector<double> x = features(in);
    std::vector<double> share(symbols_, 0.0);
    for (const auto& t : trees_) {
      int s = static_cast<int>(t.predict(x));
      if (s >= 0 && s < symbols_) share[s] += 1.0 / trees_.size();
    }
    return share;
  }

  // Posterior-averaged pmf over the output symbols.
  std::vector<double> class_pmf(const RowValues& in) const {
    ensure_fit();
    std::vector<double> share = vote_share(in);
    std::vector<double> pmf(symbols_, 0.0);
    for (size_t g = 0; g < alpha_grid_.size(); ++g)
      for (int s = 0; s < symbols_; ++s)
        pmf[s] +=
            alpha_weights_[g] * smoothed_vote(share[s], symbols_, alpha_grid_[g]);
    return pmf;
  }

  double alpha_mean() const {
    ensure_fit();
    double m = 0;
    for (size_t g = 0; g < alpha_grid_.size(); ++g)
      m += alpha_grid_[g] * alpha_weights_[g];
    return m;
  }

 protected:
  RowValues simulate_impl(MemberId, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    auto pmf = class_pmf(evidence);
    std::vector<double> logp;
    for (double p : pmf) logp.push_back(std::log(p));
    return {{query[0], static_cast<double>(rng.categorical_log(logp))}};
  }

  double logpdf_impl(MemberId, const RowValues& query,
                     const RowValues& evidence) const override {
    auto pmf = class_pmf(evidence);
    return std::log(pmf[static_cast<int>(query.begin()->second)]);
  }

  void on_fit(const std::vector<cart::Example>& pairs) override {
    std::vector<double> logw(alpha_grid_.size(), 0.0);
    for (const auto& e : pairs) {
      std::vector<double> share(symbols_, 0.0);
      for (const auto& t : trees_) {
        int s = static_cast<int>(t.predict(e.x));
        if (s >= 0 && s < symbols_) share[s] += 1.0 / trees_.size();
      }
      int s = static_cast<int>(e.y);
      for (size_t g = 0; g < alpha_grid_.size(); ++g)
        logw[g] += std::log(smoothed_vote(share[s], symbols_, alpha_grid_[g]));
    }
    double z = logsumexp(logw);
    for (size_t g = 0; g < alpha_grid_.size(); ++g)
      alpha_weights_[g] = std::exp(logw[g] - z);
  }

 private:
  int symbols_;
  std::vector<double> alpha_grid_;
  std::vector<double> alpha_weights_;
};

// Regressor over a continuous output: learners give point predictions,
// which are folded into a fresh primitive noise model whose predictive
// supplies both density and draws.
class ForestRegressor : public detail::ForestBase {
 public:
  ForestRegressor(std::shared_ptr<Population> pop, int output,
                  std::vector<int> inputs, uint64_t seed = 1,
                  ForestConfig config = {})
      : ForestBase(std::move(pop), output, std::move(inputs), seed, config) {
    require(!type_of(target()).discrete(),
            "regressor: output must be a continuous kind");
    family_ = default_family(type_of(target()).kind);
  }

  Family noise_family() const { return family_; }

 protected:
  RowValues simulate_impl(MemberId, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    PrimStats stats;
    Hypers h;
    noise_model(evidence, stats, h);
    return {{query[0],
             prim::simulate(family_, type_of(target()), stats, h, rng)}};
  }

  double logpdf_impl(MemberId, const RowValues& query,
                     const RowValues& evidence) const override {
    PrimStats stats;
    Hypers h;
    noise_model(evidence, stats, h);
    return prim::logpdf(family_, type_of(target()), stats, h,
                        query.begin()->second);
  }

 private:
  Family family_;

  double snap(double v) const {
    const StatType& t = type_of(target());
    if (t.kind == StatKind::cyclic) {
      v = std::fmod(v, t.period);
      if (v <= 0) v += t.period;
      if (v >= t.period) v = t.period / 2;
    } else if (t.kind == StatKind::numerical_ranged) {
      double eps = 1e-9 * (t.hi - t.lo);
      v = std::min(std::max(v, t.lo + eps), t.hi - eps);
    } else if (t.kind == StatKind::magnitude) {
      v = std::max(v, std::numeric_limits<double>::min());
    }
    return v;
  }

  void noise_model(const RowValues& in, PrimStats& stats, Hypers& h) const {
    ensure_fit();
    std::vector<double> x = features(in);
    std::vector<double> preds;
    for (const auto& t : trees_) preds.push_back(snap(t.predict(x)));
    h = prim::default_hypers(family_, type_of(target()), preds);
    prim::stats_clear(stats, family_, type_of(target()));
    for (double p : preds)
      prim::stats_add(stats, family_, type_of(target()), p);
  }
};

// Conjugate Bayesian linear regression with a normal-inverse-gamma prior.
// Nominal inputs are dummy coded with every level kept; the proper prior
// absorbs the resulting collinearity.
class BayesLinReg : public Cgpm {
 public:
  BayesLinReg(std::shared_ptr<Population> pop, int output,
              std::vector<int> inputs, double prior_scale = 100.0)
      : Cgpm(std::move(pop), {output}, std::move(inputs)),
        prior_scale_(prior_scale) {
    require(!type_of(target()).discrete(),
            "linear regression: output must be a continuous kind");
    dim_ = 1;
    for (int v : this->inputs()) {
      const StatType& t = type_of(v);
      if (t.kind == StatKind::binary)
        dim_ += 2;
      else if (t.kind == StatKind::nominal)
        dim_ += t.cardinality;
      else
        dim_ += 1;
    }
  }

  int target() const { return outputs()[0]; }

  double predictive_mean(const RowValues& in) const {
    ensure_fit();
    return encode(in).dot(mean_);
  }

  void infer(const InferProgram&, Rng&) override { ensure_fit(); }

 protected:
  void on_incorporate(MemberId, int, double) override { dirty_ = true; }
  void on_unincorporate(MemberId, int) override { dirty_ = true; }

  RowValues simulate_impl(MemberId, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    auto [mu, scale, df] = predictive(evidence);
    return {{query[0], mu + scale * rng.student_t(df)}};
  }

  double logpdf_impl(MemberId, const RowValues& query,
                     const RowValues& evidence) const override {
    auto [mu, scale, df] = predictive(evidence);
    return student_t_logpdf(query.begin()->second, df, mu, scale);
  }

 private:
  double prior_scale_;
  int dim_;
  mutable bool dirty_ = true;
  mutable Eigen::MatrixXd cov_;   // posterior coefficient covariance basis
  mutable Eigen::VectorXd mean_;  // posterior coefficient mean
  mutable double a_ = 1, b_ = 1;

  Eigen::VectorXd encode(const RowValues& in) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
    x(0) = 1.0;
    int at = 1;
    for (int v : inputs()) {
      auto it = in.find(v);
      require(it != in.end(), "linear regression: missing input '" +
                                  population().var(v).name + "'");
      const StatType& t = type_of(v);
      if (t.kind == StatKind::binary || t.kind == StatKind::nominal) {
        int levels = t.kind == StatKind::binary ? 2 : t.cardinality;
        int s = static_cast<int>(it->second);
        if (s >= 0 && s < levels) x(at + s) = 1.0;
        at += levels;
      } else {
        x(at++) = it->second;
      }
    }
    return x;
  }

  void ensure_fit() const {
    if (!dirty_) return;
    Eigen::MatrixXd prec =
        Eigen::MatrixXd::Identity(dim_, dim_) / prior_scale_;
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(dim_);
    double yty = 0;
    int n = 0;
    for (const auto& [r, row] : data().rows()) {
      auto yt = row.find(target());
      if (yt == row.end()) continue;
      bool complete = true;
      for (int v : inputs())
        if (!row.count(v)) { complete = false; break; }
      if (!complete) continue;
      RowValues in(row.begin(), row.end());
      Eigen::VectorXd x = encode(in);
      prec += x * x.transpose();
      xty += x * yt->second;
      yty += yt->second * yt->second;
      ++n;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    cov_ = llt.solve(Eigen::MatrixXd::Identity(dim_, dim_));
    mean_ = cov_ * xty;
    a_ = 1.0 + n / 2.0;
    b_ = 1.0 + 0.5 * (yty - mean_.dot(prec * mean_));
    b_ = std::max(b_, 1e-12);
    dirty_ = false;
  }

  std::tuple<double, double, double> predictive(const RowValues& in) const {
    ensure_fit();
    Eigen::VectorXd x = encode(in);
    double mu = x.dot(mean_);
    double scale = std::sqrt(b_ / a_ * (1.0 + x.dot(cov_ * x)));
    return {mu, scale, 2 * a_};
  }
};

}  // namespace cgpm
