// Copyright 2026
// See LICENSE.txt

// BQL estimator layer over metamodel ensembles: SIMULATE, ESTIMATE
// PROBABILITY, INFER with confidence, DEPENDENCE PROBABILITY, MUTUAL
// INFORMATION, and PREDICTIVE PROBABILITY.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgpm/crosscat.hpp"
#include "cgpm/network.hpp"

namespace cgpm::bql {

// Member id reserved for hypothetical (row-free) queries.
inline constexpr MemberId kHypotheticalMember = MemberId{1} << 62;

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline const Population& population_of(const MetamodelEnsemble& ens) {
  return ens.instance(0).nodes().front()->population();
}

inline std::optional<double> stored_cell(const CgpmNetwork& net, MemberId r,
                                         int var) {
  for (const auto& node : net.nodes()) {
    auto v = node->data().get(r, var);
    if (v) return v;
  }
  return std::nullopt;
}

inline RowValues stored_row(const CgpmNetwork& net, MemberId r) {
  RowValues out;
  for (const auto& node : net.nodes())
    if (const auto* row = node->data().row(r))
      for (const auto& [v, x] : *row) out.emplace(v, x);
  return out;
}

// Evidence for a query: explicit givens win; a known row contributes its
// stored cells except on the queried variables.
inline RowValues row_conditioned(const CgpmNetwork& net,
                                 std::optional<MemberId> rowid,
                                 const std::set<int>& targets,
                                 const RowValues& givens) {
  RowValues ev = givens;
  if (rowid)
    for (const auto& [v, x] : stored_row(net, *rowid))
      if (!targets.count(v)) ev.emplace(v, x);
  return ev;
}

inline QueryResult simulate(const MetamodelEnsemble& ens,
                            const std::vector<int>& targets,
                            const RowValues& givens,
                            std::optional<MemberId> rowid, int limit, Rng& rng,
                            int J = 100, int using_model = -1) {
  require(limit >= 1, "simulate: LIMIT must be at least 1");
  require(!targets.empty(), "simulate: needs at least one target");
  const Population& pop = population_of(ens);
  std::set<int> target_set(targets.begin(), targets.end());
  RowValues evidence =
      row_conditioned(ens.instance(0), rowid, target_set, givens);
  MemberId r = rowid.value_or(kHypotheticalMember);
  QueryResult out;
  for (int v : targets) out.columns.push_back(pop.var(v).name);
  for (int i = 0; i < limit; ++i) {
    RowValues draw = ens.simulate(r, targets, evidence, rng, J, using_model);
    std::vector<double> row;
    for (int v : targets) row.push_back(draw.at(v));
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline double logpdf(const MetamodelEnsemble& ens, const RowValues& targets,
                     const RowValues& givens, std::optional<MemberId> rowid,
                     Rng& rng, int J = 100, int J_evidence = 100,
                     int using_model = -1) {
  require(!targets.empty(), "logpdf: needs at least one target value");
  std::set<int> target_set;
  for (const auto& [v, x] : targets) target_set.insert(v);
  RowValues evidence =
      row_conditioned(ens.instance(0), rowid, target_set, givens);
  MemberId r = rowid.value_or(kHypotheticalMember);
  return ens.logpdf(r, targets, evidence, rng, J, J_evidence, using_model);
}

inline QueryResult estimate_probability(const MetamodelEnsemble& ens,
                                        const RowValues& targets,
                                        const RowValues& givens,
                                        std::optional<MemberId> rowid,
                                        Rng& rng, int J = 100,
                                        int J_evidence = 100,
                                        int using_model = -1) {
  double lp =
      logpdf(ens, targets, givens, rowid, rng, J, J_evidence, using_model);
  return {{"probability"}, {{std::exp(lp)}}};
}

inline double quantile(std::vector<double> xs, double q) {
  require(!xs.empty(), "quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  double pos = q * (xs.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  double frac = pos - lo;
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] * (1 - frac) + xs[lo + 1] * frac;
}

inline double interquartile_range(const std::vector<double>& xs) {
  return quantile(xs, 0.75) - quantile(xs, 0.25);
}

// Spread of the variable across every stored row, for normalizing the
// dispersion of predictive draws.
inline std::optional<double> column_iqr(const CgpmNetwork& net, int var) {
  std::vector<double> values;
  for (const auto& node : net.nodes()) {
    if (!node->has_output(var) && !node->has_input(var)) continue;
    for (const auto& [r, row] : node->data().rows()) {
      auto it = row.find(var);
      if (it != row.end()) values.push_back(it->second);
    }
    if (!values.empty()) break;
  }
  if (values.size() < 2) return std::nullopt;
  return interquartile_range(values);
}

// Point prediction and confidence for one column of predictive draws.
// Nominal kinds report the modal value and its share; everything else
// reports a median with a dispersion-based confidence.
inline std::pair<double, double> summarize_draws(const StatType& type,
                                                 std::vector<double> draws,
                                                 std::optional<double> prior_iqr) {
  require(!draws.empty(), "infer: no predictive draws");
  if (type.kind == StatKind::nominal || type.kind == StatKind::binary) {
    std::map<double, int> counts;
    for (double d : draws) counts[d] += 1;
    double best = counts.begin()->first;
    int best_n = counts.begin()->second;
    for (const auto& [v, n] : counts)
      if (n > best_n) {
        best = v;
        best_n = n;
      }
    return {best, static_cast<double>(best_n) / draws.size()};
  }
  std::sort(draws.begin(), draws.end());
  double prediction = type.discrete()
                          ? draws[(draws.size() - 1) / 2]
                          : quantile(draws, 0.5);
  double spread = interquartile_range(draws);
  double confidence;
  if (!prior_iqr || *prior_iqr <= 0)
    confidence = spread == 0 ? 1.0 : 0.0;
  else
    confidence = std::clamp(1.0 - spread / *prior_iqr, 0.0, 1.0);
  return {prediction, confidence};
}

// Fills missing target cells with (prediction, confidence) columns; stored
// cells pass through verbatim with confidence 1.
inline QueryResult infer(const MetamodelEnsemble& ens,
                         const std::vector<int>& targets,
                         const std::vector<MemberId>& rows, int n_samples,
                         Rng& rng, int J = 100) {
  require(n_samples >= 1, "infer: needs at least one sample");
  require(!targets.empty(), "infer: needs at least one target");
  const Population& pop = population_of(ens);
  const CgpmNetwork& data_view = ens.instance(0);

  QueryResult out;
  out.columns.push_back("rowid");
  for (int v : targets) {
    out.columns.push_back(pop.var(v).name);
    out.columns.push_back(pop.var(v).name + "_confidence");
  }
  std::map<int, std::optional<double>> prior_iqr;
  for (int v : targets) prior_iqr[v] = column_iqr(data_view, v);

  for (MemberId r : rows) {
    std::vector<double> row = {static_cast<double>(r)};
    RowValues evidence = stored_row(data_view, r);
    for (int v : targets) {
      auto observed = stored_cell(data_view, r, v);
      if (observed) {
        row.push_back(*observed);
        row.push_back(1.0);
        continue;
      }
      std::vector<double> draws;
      draws.reserve(n_samples);
      for (int s = 0; s < n_samples; ++s)
        draws.push_back(ens.simulate(r, {v}, evidence, rng, J).at(v));
      auto [prediction, confidence] =
          summarize_draws(pop.var(v).type, std::move(draws), prior_iqr[v]);
      row.push_back(prediction);
      row.push_back(confidence);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// Monte Carlo mutual information in nats, conditioned on the givens,
// estimated per instance and then weight-averaged.
inline double mutual_information(const MetamodelEnsemble& ens, int x, int y,
                                 const RowValues& givens, int n_mc, Rng& rng,
                                 int J = 100) {
  require(n_mc >= 1, "mutual information: n_mc must be at least 1");
  require(x != y, "mutual information: variables must differ");
  double acc = 0, total_w = 0;
  for (size_t i = 0; i < ens.size(); ++i) {
    const CgpmNetwork& net = ens.instance(i);
    double sum = 0;
    for (int t = 0; t < n_mc; ++t) {
      RowValues draw =
          net.simulate(kHypotheticalMember, {x, y}, givens, rng, J);
      double lp_xy = net.logpdf(kHypotheticalMember,
                                {{x, draw.at(x)}, {y, draw.at(y)}}, givens,
                                rng, J, J);
      double lp_x = net.logpdf(kHypotheticalMember, {{x, draw.at(x)}}, givens,
                               rng, J, J);
      double lp_y = net.logpdf(kHypotheticalMember, {{y, draw.at(y)}}, givens,
                               rng, J, J);
      sum += lp_xy - lp_x - lp_y;
    }
    acc += ens.weights()[i] * (sum / n_mc);
    total_w += ens.weights()[i];
  }
  return acc / total_w;
}

inline const CrossCat* crosscat_owner(const CgpmNetwork& net, int x, int y) {
  for (const auto& node : net.nodes()) {
    const auto* cc = dynamic_cast<const CrossCat*>(node.get());
    if (cc && cc->has_output(x) && cc->has_output(y)) return cc;
  }
  return nullptr;
}

// CrossCat-backed ensembles report the weighted fraction of instances
// placing the variables in one block; other baselines fall back to an
// MI-threshold indicator.
inline double dependence_probability(const MetamodelEnsemble& ens, int x,
                                     int y, Rng& rng, int n_mc = 1000,
                                     double epsilon = 0.05) {
  if (x == y) return 1.0;
  if (crosscat_owner(ens.instance(0), x, y)) {
    double acc = 0, total_w = 0;
    for (size_t i = 0; i < ens.size(); ++i) {
      const CrossCat* cc = crosscat_owner(ens.instance(i), x, y);
      require(cc != nullptr, "dependence: ensemble instances disagree");
      acc += ens.weights()[i] * (cc->co_blocked(x, y) ? 1.0 : 0.0);
      total_w += ens.weights()[i];
    }
    return acc / total_w;
  }
  double mi = mutual_information(ens, x, y, {}, n_mc, rng);
  return mi > epsilon ? 1.0 : 0.0;
}

// Log-density of a stored cell given the rest of its row, with the cell's
// own contribution to the model hypothetically removed. Low values flag
// anomalies.
inline double predictive_probability(const MetamodelEnsemble& ens, int var,
                                     MemberId rowid, Rng& rng, int J = 100,
                                     int J_evidence = 100) {
  auto value = stored_cell(ens.instance(0), rowid, var);
  require(value.has_value(), "predictive probability: cell is not observed");
  return logpdf(ens, {{var, *value}}, {}, rowid, rng, J, J_evidence);
}

}  // namespace cgpm::bql
