// Copyright 2026
// See LICENSE.txt

// Composition of CGPM nodes into a directed acyclic network with
// importance-sampling simulate and logpdf, plus homogeneous ensembles of
// independently seeded network replicas.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

class CgpmNetwork {
 public:
  // Validates the composition: no two nodes share an output, the
  // input/output edges are acyclic, and when an exogenous whitelist is
  // given every unproduced input must appear on it.
  explicit CgpmNetwork(
      std::vector<std::shared_ptr<Cgpm>> nodes,
      std::optional<std::vector<int>> exogenous = std::nullopt)
      : nodes_(std::move(nodes)) {
    require(!nodes_.empty(), "network: needs at least one node");
    std::map<int, size_t> owner;
    for (size_t k = 0; k < nodes_.size(); ++k) {
      require(nodes_[k] != nullptr, "network: null node");
      for (int v : nodes_[k]->outputs())
        require(owner.emplace(v, k).second,
                "network: two nodes share an output variable");
    }
    if (exogenous) {
      std::set<int> allowed(exogenous->begin(), exogenous->end());
      for (const auto& node : nodes_)
        for (int v : node->inputs())
          require(owner.count(v) || allowed.count(v),
                  "network: dangling input variable");
    }

    // Kahn's algorithm over parent edges.
    std::vector<std::set<size_t>> parents(nodes_.size());
    std::vector<int> missing(nodes_.size(), 0);
    for (size_t k = 0; k < nodes_.size(); ++k)
      for (int v : nodes_[k]->inputs()) {
        auto it = owner.find(v);
        if (it != owner.end() && parents[k].insert(it->second).second)
          ++missing[k];
      }
    std::set<size_t> ready;
    for (size_t k = 0; k < nodes_.size(); ++k)
      if (missing[k] == 0) ready.insert(k);
    while (!ready.empty()) {
      size_t k = *ready.begin();
      ready.erase(ready.begin());
      order_.push_back(k);
      for (size_t c = 0; c < nodes_.size(); ++c)
        if (parents[c].count(k) && --missing[c] == 0) ready.insert(c);
    }
    require(order_.size() == nodes_.size(),
            "network: input/output edges form a cycle");
  }

  const std::vector<std::shared_ptr<Cgpm>>& nodes() const { return nodes_; }
  const std::vector<size_t>& order() const { return order_; }

  bool produces(int var) const {
    for (const auto& node : nodes_)
      if (node->has_output(var)) return true;
    return false;
  }

  // One pass of weighted forward sampling: walks the nodes in topological
  // order, scores evidence on produced variables, simulates everything
  // else, and threads parent draws into child inputs. Evidence on
  // unproduced variables acts as exogenous input. Returns the full sample
  // over every output together with the log importance weight.
  std::pair<RowValues, double> weighted_sample(MemberId r,
                                               const RowValues& evidence,
                                               Rng& rng) const {
    RowValues sample;
    for (const auto& [v, x] : evidence)
      if (!produces(v)) sample[v] = x;
    double logw = 0.0;
    for (size_t k : order_) {
      const Cgpm& node = *nodes_[k];
      RowValues node_ev;
      for (int v : node.inputs()) {
        auto it = sample.find(v);
        if (it != sample.end()) node_ev[v] = it->second;
      }
      RowValues constrained;
      std::vector<int> free_vars;
      for (int v : node.outputs()) {
        auto it = evidence.find(v);
        if (it != evidence.end())
          constrained[v] = it->second;
        else
          free_vars.push_back(v);
      }
      if (!constrained.empty()) {
        logw += node.logpdf(r, constrained, node_ev);
        for (const auto& [v, x] : constrained) {
          node_ev[v] = x;
          sample[v] = x;
        }
      }
      if (!free_vars.empty() && logw > -kInf)
        for (const auto& [v, x] : node.simulate(r, free_vars, node_ev, rng))
          sample[v] = x;
    }
    return {sample, logw};
  }

  // Importance resampling: J weighted forward passes, then one sample
  // drawn proportionally to the weights and projected onto the query.
  RowValues simulate(MemberId r, const std::vector<int>& query,
                     const RowValues& evidence, Rng& rng, int J = 100) const {
    require(J >= 1, "network simulate: J must be at least 1");
    // One node means every pass carries the same weight, so one suffices.
    if (nodes_.size() == 1) J = 1;
    std::vector<RowValues> samples;
    std::vector<double> weights;
    samples.reserve(J);
    weights.reserve(J);
    for (int j = 0; j < J; ++j) {
      auto [sample, logw] = weighted_sample(r, evidence, rng);
      samples.push_back(std::move(sample));
      weights.push_back(logw);
    }
    size_t pick = rng.categorical_log(weights);
    RowValues out;
    for (int q : query) out[q] = samples[pick].at(q);
    return out;
  }

  // Ratio likelihood weighting: the joint and the evidence each get their
  // own forward passes, and the density estimate is the ratio of weight
  // averages.
  double logpdf(MemberId r, const RowValues& query, const RowValues& evidence,
                Rng& rng, int J = 100, int J_evidence = 100) const {
    require(J >= 1 && J_evidence >= 1,
            "network logpdf: sample counts must be at least 1");
    // One node: the weight is exact, so the ratio needs a single pass each.
    if (nodes_.size() == 1) J = J_evidence = 1;
    RowValues joint = evidence;
    for (const auto& [v, x] : query) {
      require(!evidence.count(v),
              "network logpdf: query variable repeated in the evidence");
      joint[v] = x;
    }
    std::vector<double> w_joint;
    for (int j = 0; j < J; ++j)
      w_joint.push_back(weighted_sample(r, joint, rng).second);
    double numerator = logsumexp(w_joint) - std::log(static_cast<double>(J));
    if (evidence.empty()) return numerator;
    std::vector<double> w_ev;
    for (int j = 0; j < J_evidence; ++j)
      w_ev.push_back(weighted_sample(r, evidence, rng).second);
    double denominator =
        logsumexp(w_ev) - std::log(static_cast<double>(J_evidence));
    require(denominator > -kInf,
            "network logpdf: evidence weight sum is zero");
    return numerator - denominator;
  }

  // Per-node inference; a node participates when the plan names at least
  // one of its outputs.
  void infer(const InferProgram& plan, Rng& rng) {
    for (size_t k : order_)
      if (!plan.targets(nodes_[k]->outputs()).empty())
        nodes_[k]->infer(plan, rng);
  }

 private:
  std::vector<std::shared_ptr<Cgpm>> nodes_;
  std::vector<size_t> order_;
};

// A bag of independently seeded replicas of one network definition, with
// uniform weights and reproducible per-instance randomness: instance i of a
// given master seed always sees the same stream, no matter how analysis
// work is scheduled.
class MetamodelEnsemble {
 public:
  using Factory = std::function<std::shared_ptr<CgpmNetwork>(uint64_t seed)>;

  MetamodelEnsemble(const Factory& make, int n_instances, uint64_t master_seed)
      : master_seed_(master_seed) {
    require(n_instances >= 1, "ensemble: needs at least one instance");
    for (int i = 0; i < n_instances; ++i) {
      uint64_t seed = mix_seed(master_seed, static_cast<uint64_t>(i));
      instances_.push_back(make(seed));
      require(instances_.back() != nullptr, "ensemble: factory returned null");
      rngs_.emplace_back(mix_seed(seed, 0x616e));
      weights_.push_back(1.0);
    }
  }

  size_t size() const { return instances_.size(); }
  uint64_t master_seed() const { return master_seed_; }
  CgpmNetwork& instance(size_t i) { return *instances_.at(i); }
  const CgpmNetwork& instance(size_t i) const { return *instances_.at(i); }
  const std::vector<double>& weights() const { return weights_; }

  // Runs the plan on every instance with its own random stream. Instances
  // are split across workers; results are identical for any worker count.
  void analyze(const InferProgram& plan, int workers = 1) {
    workers = std::max(1, std::min<int>(workers, instances_.size()));
    if (workers == 1) {
      for (size_t i = 0; i < instances_.size(); ++i)
        instances_[i]->infer(plan, rngs_[i]);
      return;
    }
    std::vector<std::thread> crew;
    for (int w = 0; w < workers; ++w)
      crew.emplace_back([this, &plan, w, workers] {
        for (size_t i = w; i < instances_.size(); i += workers)
          instances_[i]->infer(plan, rngs_[i]);
      });
    for (auto& t : crew) t.join();
  }

  // Mixture draw: pick an instance by weight, then query it. A
  // non-negative using_model restricts to that instance.
  RowValues simulate(MemberId r, const std::vector<int>& query,
                     const RowValues& evidence, Rng& rng, int J = 100,
                     int using_model = -1) const {
    size_t i = pick_instance(rng, using_model);
    return instances_[i]->simulate(r, query, evidence, rng, J);
  }

  // Log of the weight-averaged per-instance density.
  double logpdf(MemberId r, const RowValues& query, const RowValues& evidence,
                Rng& rng, int J = 100, int J_evidence = 100,
                int using_model = -1) const {
    if (using_model >= 0) {
      check_instance(using_model);
      return instances_[using_model]->logpdf(r, query, evidence, rng, J,
                                             J_evidence);
    }
    std::vector<double> terms;
    double z = logsumexp(log_weights());
    for (size_t i = 0; i < instances_.size(); ++i)
      terms.push_back(std::log(weights_[i]) - z +
                      instances_[i]->logpdf(r, query, evidence, rng, J,
                                            J_evidence));
    return logsumexp(terms);
  }

 private:
  std::vector<double> log_weights() const {
    std::vector<double> lw;
    for (double w : weights_) lw.push_back(std::log(w));
    return lw;
  }

  void check_instance(int t) const {
    require(t >= 0 && t < static_cast<int>(instances_.size()),
            "ensemble: unknown instance index");
  }

  size_t pick_instance(Rng& rng, int using_model) const {
    if (using_model >= 0) {
      check_instance(using_model);
      return static_cast<size_t>(using_model);
    }
    if (instances_.size() == 1) return 0;
    return rng.categorical_log(log_weights());
  }

  uint64_t master_seed_;
  std::vector<std::shared_ptr<CgpmNetwork>> instances_;
  std::vector<Rng> rngs_;
  std::vector<double> weights_;
};

}  // namespace cgpm
