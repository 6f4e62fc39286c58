// Copyright 2026
// See LICENSE.txt

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "cgpm/dataset.hpp"
#include "cgpm/population.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

// Variable id -> value.
using RowValues = std::map<int, double>;

struct InferProgram {
  int iterations = 1;
  double seconds = -1.0;  // when positive, a wall-clock budget instead
  std::vector<int> variables;  // empty means every output
  bool skip = false;           // interpret `variables` as an exclusion list
  // Kernel toggles, used by tests that hold part of the state fixed.
  bool rows = true;
  bool columns = true;
  bool hypers = true;
  bool alphas = true;

  std::vector<int> targets(const std::vector<int>& outputs) const {
    if (variables.empty() && !skip) return outputs;
    std::set<int> named(variables.begin(), variables.end());
    std::vector<int> out;
    for (int v : outputs) {
      bool listed = named.count(v) > 0;
      if (listed != skip) out.push_back(v);
    }
    return out;
  }
};

// A generative population model: a joint distribution over output variables
// for every population member, conditionable on evidence and on per-member
// input variables. Measurements accumulate through incorporate/unincorporate;
// simulate and logpdf answer hypothetical queries; infer updates latent state.
class Cgpm {
 public:
  Cgpm(std::shared_ptr<const Population> pop, std::vector<int> outputs,
       std::vector<int> inputs)
      : pop_(std::move(pop)),
        outputs_(std::move(outputs)),
        inputs_(std::move(inputs)) {
    require(pop_ != nullptr, "cgpm: null population");
    require(!outputs_.empty(), "cgpm: needs at least one output");
    std::set<int> seen;
    for (int v : outputs_) {
      require(v >= 0 && v < pop_->size(), "cgpm: output not in population");
      require(seen.insert(v).second, "cgpm: duplicate output variable");
    }
    for (int v : inputs_) {
      require(v >= 0 && v < pop_->size(), "cgpm: input not in population");
      require(seen.insert(v).second,
              "cgpm: variable is both an output and an input");
    }
  }
  virtual ~Cgpm() = default;

  const std::vector<int>& outputs() const { return outputs_; }
  const std::vector<int>& inputs() const { return inputs_; }
  bool has_output(int v) const {
    return std::find(outputs_.begin(), outputs_.end(), v) != outputs_.end();
  }
  bool has_input(int v) const {
    return std::find(inputs_.begin(), inputs_.end(), v) != inputs_.end();
  }
  const Population& population() const { return *pop_; }
  std::shared_ptr<const Population> population_ptr() const { return pop_; }
  const StatType& type_of(int var) const { return pop_->var(var).type; }
  const Dataset& data() const { return data_; }

  // Some outputs are derived quantities (exposed latents) that can be
  // queried but never observed directly.
  virtual bool accepts_measurement(int var) const {
    return has_output(var) || has_input(var);
  }

  void incorporate(MemberId r, int var, double value) {
    require(accepts_measurement(var),
            "incorporate: '" + pop_->var(var).name +
                "' is not a measurable variable of this model");
    require(type_of(var).admissible(value),
            "incorporate: value outside the support of '" +
                pop_->var(var).name + "'");
    data_.observe(r, var, value);
    on_incorporate(r, var, value);
  }

  void unincorporate(MemberId r, int var) {
    data_.forget(r, var);
    on_unincorporate(r, var);
  }

  RowValues simulate(MemberId r, const std::vector<int>& query,
                     const RowValues& evidence, Rng& rng) const {
    validate_query_vars(query);
    RowValues ev = effective_evidence(r, query, evidence);
    RowValues out = simulate_impl(r, query, ev, rng);
    for (int q : query) {
      auto it = out.find(q);
      if (it == out.end() || !type_of(q).admissible(it->second))
        throw std::logic_error("simulate: model produced a value outside "
                               "the support of '" + pop_->var(q).name + "'");
    }
    return out;
  }

  double logpdf(MemberId r, const RowValues& query,
                const RowValues& evidence) const {
    std::vector<int> qvars;
    for (const auto& [v, x] : query) qvars.push_back(v);
    validate_query_vars(qvars);
    for (const auto& [v, x] : query)
      if (!type_of(v).admissible(x)) return -kInf;
    RowValues ev = effective_evidence(r, qvars, evidence);
    return logpdf_impl(r, query, ev);
  }

  virtual void infer(const InferProgram& program, Rng& rng) = 0;

 protected:
  virtual void on_incorporate(MemberId, int, double) {}
  virtual void on_unincorporate(MemberId, int) {}
  virtual RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                                  const RowValues& evidence,
                                  Rng& rng) const = 0;
  virtual double logpdf_impl(MemberId r, const RowValues& query,
                             const RowValues& evidence) const = 0;

  std::vector<int> plan_targets(const InferProgram& p) const {
    for (int v : p.variables)
      require(has_output(v), "infer: plan names a variable this model "
                             "does not generate");
    return p.targets(outputs_);
  }

 private:
  void validate_query_vars(const std::vector<int>& query) const {
    require(!query.empty(), "query: no variables requested");
    std::set<int> seen;
    for (int v : query) {
      require(has_output(v),
              "query: variable is not an output of this model");
      require(seen.insert(v).second, "query: duplicate query variable");
    }
  }

  // Evidence the model actually conditions on: caller-supplied values win,
  // then any stored cells of r that are neither queried nor overridden.
  RowValues effective_evidence(MemberId r, const std::vector<int>& query,
                               const RowValues& user) const {
    std::set<int> qset(query.begin(), query.end());
    for (const auto& [v, x] : user) {
      require(has_output(v) || has_input(v),
              "evidence: variable is not known to this model");
      require(qset.count(v) == 0,
              "evidence: variable also appears in the query");
      require(type_of(v).admissible(x),
              "evidence: value outside the support of '" +
                  pop_->var(v).name + "'");
    }
    RowValues ev = user;
    if (const auto* row = data_.row(r)) {
      for (const auto& [v, x] : *row)
        if (qset.count(v) == 0) ev.emplace(v, x);
    }
    return ev;
  }

  std::shared_ptr<const Population> pop_;
  std::vector<int> outputs_;
  std::vector<int> inputs_;
  Dataset data_;
};

}  // namespace cgpm
