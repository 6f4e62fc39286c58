// Copyright 2026
// See LICENSE.txt

#pragma once

#include <chrono>
#include <map>
#include <set>
#include <vector>

#include "cgpm/primitives.hpp"

namespace cgpm {

// Nonparametric factorial mixture over the output variables: a Chinese
// restaurant process partitions variables into blocks, each block carries its
// own CRP partition of the members, and every (variable, cluster) pair keeps
// collapsed sufficient statistics under the variable's likelihood family.
class CrossCat : public Cgpm {
 public:
  CrossCat(std::shared_ptr<const Population> pop, std::vector<int> outputs,
           uint64_t seed = 1, const std::map<int, Family>& families = {})
      : Cgpm(std::move(pop), std::move(outputs), {}), rng_(seed) {
    Block& b0 = blocks_[0];
    for (int v : this->outputs()) {
      Column col;
      auto it = families.find(v);
      col.family = it == families.end() ? default_family(type_of(v).kind)
                                        : it->second;
      require(family_matches(col.family, type_of(v).kind),
              "crosscat: category model does not match the type of '" +
                  population().var(v).name + "'");
      prim::stats_clear(col.empty, col.family, type_of(v));
      cols_[v] = col;
      var_block_[v] = 0;
      b0.vars.insert(v);
    }
  }

  double outer_alpha() const { return outer_alpha_; }
  void set_outer_alpha(double a) { outer_alpha_ = a; }
  int block_of(int var) const { return var_block_.at(var); }
  bool co_blocked(int a, int b) const { return block_of(a) == block_of(b); }
  size_t n_blocks() const { return blocks_.size(); }
  double block_alpha(int block) const { return blocks_.at(block).alpha; }
  void set_block_alpha(int block, double a) { blocks_.at(block).alpha = a; }
  const Hypers& hypers(int var) const { return cols_.at(var).hypers; }
  void set_hypers(int var, const Hypers& h) { cols_.at(var).hypers = h; }
  Family family_of(int var) const { return cols_.at(var).family; }
  size_t n_members() const { return members_.size(); }

  std::map<MemberId, int> row_assignment(int block) const {
    return blocks_.at(block).assign;
  }

  // Replaces the latent partition wholesale: variable -> block label, and
  // per block label a full member -> cluster map. Used by exact tests.
  void set_structure(const std::map<int, int>& var_blocks,
                     const std::map<int, std::map<MemberId, int>>& rows) {
    for (int v : outputs())
      require(var_blocks.count(v), "set_structure: missing variable");
    blocks_.clear();
    var_block_.clear();
    for (const auto& [v, blk] : var_blocks) {
      var_block_[v] = blk;
      blocks_[blk].vars.insert(v);
    }
    for (auto& [blk, b] : blocks_) {
      auto it = rows.find(blk);
      for (MemberId r : members_) {
        int k = 0;
        if (it != rows.end() && it->second.count(r))
          k = it->second.at(r);
        b.assign[r] = k;
        b.clusters[k].members.insert(r);
      }
      for (auto& [k, cl] : b.clusters)
        for (int v : b.vars) refold(b, k, v);
    }
  }

  // Samples a complete table of fresh members from the prior: CRP over
  // variables, CRP per block over rows, and values drawn through each
  // cluster's predictive chain.
  std::map<MemberId, RowValues> forward_sample(int n_rows, Rng& rng) const {
    std::vector<std::vector<int>> var_groups;
    for (int v : outputs()) {
      std::vector<double> logw;
      for (const auto& g : var_groups)
        logw.push_back(std::log(static_cast<double>(g.size())));
      logw.push_back(std::log(outer_alpha_));
      size_t pick = rng.categorical_log(logw);
      if (pick == var_groups.size()) var_groups.emplace_back();
      var_groups[pick].push_back(v);
    }
    std::map<MemberId, RowValues> out;
    for (const auto& group : var_groups) {
      std::vector<std::vector<MemberId>> clusters;
      for (MemberId r = 0; r < n_rows; ++r) {
        std::vector<double> logw;
        for (const auto& c : clusters)
          logw.push_back(std::log(static_cast<double>(c.size())));
        logw.push_back(0.0);  // alpha = 1 for fresh partitions
        size_t pick = rng.categorical_log(logw);
        if (pick == clusters.size()) clusters.emplace_back();
        clusters[pick].push_back(r);
      }
      for (const auto& members : clusters) {
        for (int v : group) {
          const Column& col = cols_.at(v);
          PrimStats s;
          prim::stats_clear(s, col.family, type_of(v));
          for (MemberId r : members) {
            double x =
                prim::simulate(col.family, type_of(v), s, col.hypers, rng);
            out[r][v] = x;
            prim::stats_add(s, col.family, type_of(v), x);
          }
        }
      }
    }
    return out;
  }

  void infer(const InferProgram& program, Rng& rng) override {
    std::vector<int> targets = plan_targets(program);
    if (targets.empty()) return;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration<double>(
                        program.seconds > 0 ? program.seconds : 0.0);
    int sweeps = program.seconds > 0 ? std::numeric_limits<int>::max()
                                     : std::max(program.iterations, 1);
    for (int it = 0; it < sweeps; ++it) {
      std::set<int> touched;
      for (int v : targets) touched.insert(var_block_.at(v));
      if (program.rows)
        for (int blk : touched) row_sweep(blk, rng);
      if (program.columns && outputs().size() > 1)
        for (int v : targets) column_move(v, rng);
      if (program.hypers)
        for (int v : targets) hyper_move(v, rng);
      if (program.alphas) {
        for (auto& [blk, b] : blocks_) alpha_move(b, rng);
        outer_alpha_move(rng);
      }
      if (program.seconds > 0 &&
          std::chrono::steady_clock::now() >= deadline)
        break;
    }
  }

 protected:
  void on_incorporate(MemberId r, int var, double) override {
    if (!members_.count(r)) {
      members_.insert(r);
      for (auto& [blk, b] : blocks_) {
        RowValues ev = member_cells_in(b, r);
        auto scores = cluster_scores(b, kNone, ev);
        int k = scores[rng_.categorical_log(score_values(scores))].first;
        insert_row(b, k, r);
      }
    } else {
      Block& b = blocks_.at(var_block_.at(var));
      refold(b, b.assign.at(r), var);
    }
  }

  void on_unincorporate(MemberId r, int var) override {
    Block& b = blocks_.at(var_block_.at(var));
    refold(b, b.assign.at(r), var);
    if (data().row(r) == nullptr) {
      for (auto& [blk, blkref] : blocks_) remove_row(blkref, r);
      members_.erase(r);
    }
  }

  RowValues simulate_impl(MemberId r, const std::vector<int>& query,
                          const RowValues& evidence,
                          Rng& rng) const override {
    RowValues out;
    for (const auto& [blk, b] : blocks_) {
      std::vector<int> q_here;
      for (int q : query)
        if (b.vars.count(q)) q_here.push_back(q);
      if (q_here.empty()) continue;
      auto scores = cluster_scores(b, r, restrict(evidence, b));
      int k = scores[rng.categorical_log(score_values(scores))].first;
      for (int q : q_here) {
        const Column& col = cols_.at(q);
        out[q] = prim::simulate(col.family, type_of(q),
                                stats_view(b, k, q, r), col.hypers, rng);
      }
    }
    return out;
  }

  double logpdf_impl(MemberId r, const RowValues& query,
                     const RowValues& evidence) const override {
    double total = 0.0;
    for (const auto& [blk, b] : blocks_) {
      RowValues q_here;
      for (const auto& [q, x] : query)
        if (b.vars.count(q)) q_here[q] = x;
      if (q_here.empty()) continue;
      auto scores = cluster_scores(b, r, restrict(evidence, b));
      std::vector<double> joint, cond;
      for (const auto& [k, w] : scores) {
        double lp = w;
        for (const auto& [q, x] : q_here) {
          const Column& col = cols_.at(q);
          lp += prim::logpdf(col.family, type_of(q), stats_view(b, k, q, r),
                             col.hypers, x);
        }
        joint.push_back(lp);
        cond.push_back(w);
      }
      total += logsumexp(joint) - logsumexp(cond);
    }
    return total;
  }

 private:
  static constexpr MemberId kNone = std::numeric_limits<MemberId>::min();

  struct Column {
    Family family = Family::normal;
    Hypers hypers;
    PrimStats empty;
  };

  struct Cluster {
    std::set<MemberId> members;
    std::map<int, PrimStats> stats;
  };

  struct Block {
    double alpha = 1.0;
    std::set<int> vars;
    std::map<MemberId, int> assign;
    std::map<int, Cluster> clusters;
  };

  // Rebuild the collapsed statistics of one (variable, cluster) pair by
  // folding the surviving members in canonical order.
  void refold(Block& b, int k, int var) {
    Cluster& cl = b.clusters.at(k);
    const Column& col = cols_.at(var);
    PrimStats s;
    prim::stats_clear(s, col.family, type_of(var));
    for (MemberId r : cl.members) {
      auto x = data().get(r, var);
      if (x) prim::stats_add(s, col.family, type_of(var), *x);
    }
    cl.stats[var] = s;
  }

  void insert_row(Block& b, int k, MemberId r) {
    if (k < 0) k = free_id(b.clusters);
    b.assign[r] = k;
    Cluster& cl = b.clusters[k];
    cl.members.insert(r);
    for (int v : b.vars)
      if (data().has(r, v)) refold(b, k, v);
    if (cl.stats.empty())
      for (int v : b.vars) refold(b, k, v);
  }

  void remove_row(Block& b, MemberId r) {
    int k = b.assign.at(r);
    b.assign.erase(r);
    Cluster& cl = b.clusters.at(k);
    cl.members.erase(r);
    if (cl.members.empty()) {
      b.clusters.erase(k);
      return;
    }
    for (int v : b.vars)
      if (data().has(r, v)) refold(b, k, v);
  }

  template <typename M>
  static int free_id(const M& m) {
    int id = 0;
    while (m.count(id)) ++id;
    return id;
  }

  RowValues restrict(const RowValues& vals, const Block& b) const {
    RowValues out;
    for (const auto& [v, x] : vals)
      if (b.vars.count(v)) out[v] = x;
    return out;
  }

  RowValues member_cells_in(const Block& b, MemberId r) const {
    RowValues out;
    if (const auto* row = data().row(r))
      for (const auto& [v, x] : *row)
        if (b.vars.count(v)) out[v] = x;
    return out;
  }

  // Statistics of (var, cluster) as seen by a query about member r: r's own
  // measurement, if it sits in that cluster, is folded out. Cluster id -1
  // denotes the singleton proposal.
  const PrimStats& stats_view(const Block& b, int k, int var,
                              MemberId r) const {
    const Column& col = cols_.at(var);
    if (k < 0) return col.empty;
    const Cluster& cl = b.clusters.at(k);
    auto assigned = b.assign.find(r);
    bool needs_exclusion = assigned != b.assign.end() &&
                           assigned->second == k && data().has(r, var);
    if (!needs_exclusion) {
      auto it = cl.stats.find(var);
      return it == cl.stats.end() ? col.empty : it->second;
    }
    prim::stats_clear(scratch_, col.family, type_of(var));
    for (MemberId m : cl.members) {
      if (m == r) continue;
      auto x = data().get(m, var);
      if (x) prim::stats_add(scratch_, col.family, type_of(var), *x);
    }
    return scratch_;
  }

  // CRP-and-likelihood scores over existing clusters plus one singleton
  // (id -1), conditioned on the block's share of the evidence and excluding
  // member r's own contributions.
  std::vector<std::pair<int, double>> cluster_scores(
      const Block& b, MemberId r, const RowValues& evidence) const {
    std::vector<std::pair<int, double>> out;
    auto assigned = b.assign.find(r);
    int rk = assigned == b.assign.end() ? -1 : assigned->second;
    for (const auto& [k, cl] : b.clusters) {
      size_t c = cl.members.size() - (k == rk ? 1 : 0);
      if (c == 0) continue;
      double w = std::log(static_cast<double>(c));
      for (const auto& [v, x] : evidence) {
        const Column& col = cols_.at(v);
        w += prim::logpdf(col.family, type_of(v), stats_view(b, k, v, r),
                          col.hypers, x);
      }
      out.emplace_back(k, w);
    }
    double w0 = std::log(b.alpha);
    for (const auto& [v, x] : evidence) {
      const Column& col = cols_.at(v);
      w0 += prim::logpdf(col.family, type_of(v), col.empty, col.hypers, x);
    }
    out.emplace_back(-1, w0);
    return out;
  }

  static std::vector<double> score_values(
      const std::vector<std::pair<int, double>>& scores) {
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& [k, w] : scores) out.push_back(w);
    return out;
  }

  void row_sweep(int blk, Rng& rng) {
    Block& b = blocks_.at(blk);
    std::vector<MemberId> order(members_.begin(), members_.end());
    for (MemberId r : order) {
      remove_row(b, r);
      RowValues cells = member_cells_in(b, r);
      auto scores = cluster_scores(b, kNone, cells);
      int k = scores[rng.categorical_log(score_values(scores))].first;
      insert_row(b, k, r);
    }
  }

  double column_marginal(const Block& b, int var) const {
    const Column& col = cols_.at(var);
    double total = 0.0;
    for (const auto& [k, cl] : b.clusters) {
      PrimStats s;
      prim::stats_clear(s, col.family, type_of(var));
      for (MemberId r : cl.members) {
        auto x = data().get(r, var);
        if (x) prim::stats_add(s, col.family, type_of(var), *x);
      }
      total += prim::logpdf_marginal(col.family, type_of(var), s, col.hypers);
    }
    return total;
  }

  void column_move(int var, Rng& rng) {
    int old_blk = var_block_.at(var);
    {
      Block& old_b = blocks_.at(old_blk);
      old_b.vars.erase(var);
      for (auto& [k, cl] : old_b.clusters) cl.stats.erase(var);
    }

    // The singleton proposal: when the variable already lives alone its
    // current block is reused as the auxiliary; otherwise a fresh block is
    // drawn from the prior.
    Block aux;
    if (blocks_.at(old_blk).vars.empty()) {
      aux = std::move(blocks_.at(old_blk));
      blocks_.erase(old_blk);
    } else {
      double n = std::max<double>(members_.size(), 2.0);
      std::vector<double> agrid = geomspace(1 / n, n, 30);
      aux.alpha = agrid[rng.below(agrid.size())];
      for (MemberId r : members_) {
        std::vector<double> logw;
        std::vector<int> ids;
        for (const auto& [k, cl] : aux.clusters) {
          logw.push_back(std::log(static_cast<double>(cl.members.size())));
          ids.push_back(k);
        }
        logw.push_back(std::log(aux.alpha));
        ids.push_back(free_id(aux.clusters));
        int k = ids[rng.categorical_log(logw)];
        aux.assign[r] = k;
        aux.clusters[k].members.insert(r);
      }
    }

    std::vector<int> candidates;
    std::vector<double> logw;
    for (const auto& [blk, b] : blocks_) {
      candidates.push_back(blk);
      logw.push_back(std::log(static_cast<double>(b.vars.size())) +
                     column_marginal(b, var));
    }
    candidates.push_back(-1);
    logw.push_back(std::log(outer_alpha_) + column_marginal(aux, var));

    int choice = candidates[rng.categorical_log(logw)];
    int dest;
    if (choice < 0) {
      dest = free_id(blocks_);
      blocks_[dest] = std::move(aux);
    } else {
      dest = choice;
    }
    Block& b = blocks_.at(dest);
    b.vars.insert(var);
    var_block_[var] = dest;
    for (auto& [k, cl] : b.clusters) refold(b, k, var);
  }

  void hyper_move(int var, Rng& rng) {
    Column& col = cols_.at(var);
    if (!family_conjugate(col.family)) return;
    std::vector<double> column;
    for (const auto& [r, row] : data().rows()) {
      auto it = row.find(var);
      if (it != row.end()) column.push_back(it->second);
    }
    HyperGrids grids = prim::hyper_grids(col.family, type_of(var), column);
    const Block& b = blocks_.at(var_block_.at(var));
    prim::hyper_gibbs_sweep(
        col.hypers, grids,
        [&] {
          double total = 0.0;
          for (const auto& [k, cl] : b.clusters) {
            auto it = cl.stats.find(var);
            const PrimStats& s = it == cl.stats.end() ? col.empty : it->second;
            total +=
                prim::logpdf_marginal(col.family, type_of(var), s, col.hypers);
          }
          return total;
        },
        rng);
  }

  static double crp_partition_logpdf(const std::vector<size_t>& counts,
                                     double alpha) {
    size_t n = 0;
    double lp = counts.size() * std::log(alpha);
    for (size_t c : counts) {
      lp += std::lgamma(static_cast<double>(c));
      n += c;
    }
    return lp + std::lgamma(alpha) - std::lgamma(alpha + n);
  }

  void alpha_move(Block& b, Rng& rng) {
    if (members_.empty()) return;
    std::vector<size_t> counts;
    for (const auto& [k, cl] : b.clusters) counts.push_back(cl.members.size());
    double n = std::max<double>(members_.size(), 2.0);
    std::vector<double> grid = geomspace(1 / n, n, 30);
    std::vector<double> logw;
    for (double a : grid) logw.push_back(crp_partition_logpdf(counts, a));
    b.alpha = grid[rng.categorical_log(logw)];
  }

  void outer_alpha_move(Rng& rng) {
    std::vector<size_t> counts;
    for (const auto& [blk, b] : blocks_)
      if (!b.vars.empty()) counts.push_back(b.vars.size());
    double n = std::max<double>(outputs().size(), 2.0);
    std::vector<double> grid = geomspace(1 / n, n, 30);
    std::vector<double> logw;
    for (double a : grid) logw.push_back(crp_partition_logpdf(counts, a));
    outer_alpha_ = grid[rng.categorical_log(logw)];
  }

  std::map<int, Column> cols_;
  std::map<int, int> var_block_;
  std::map<int, Block> blocks_;
  std::set<MemberId> members_;
  double outer_alpha_ = 1.0;
  Rng rng_;  // drives incorporate-time cluster assignment only
  mutable PrimStats scratch_;
};

}  // namespace cgpm
