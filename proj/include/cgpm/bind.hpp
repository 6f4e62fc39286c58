// Copyright 2026
// See LICENSE.txt

// Semantic analysis for parsed statements: resolves table, population,
// metamodel, and variable names against a catalog, checks statistical
// types and literals, and produces execution-ready bound statements.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/lang.hpp"
#include "cgpm/population.hpp"
#include "cgpm/primitives.hpp"

namespace cgpm::lang {

struct MetamodelEntry {
  std::string population;
  // Variables visible to queries: the population plus any exposed outputs.
  std::shared_ptr<const Population> vars;
};

struct Catalog {
  std::map<std::string, std::vector<std::string>> tables;
  std::map<std::string, std::shared_ptr<const Population>> populations;
  std::map<std::string, MetamodelEntry> metamodels;
};

inline const std::set<std::string>& baseline_names() {
  static const std::set<std::string> names = {"crosscat", "multivariate_kde",
                                              "generative_knn"};
  return names;
}

inline const std::set<std::string>& override_names() {
  static const std::set<std::string> names = {
      "linear_regression", "random_forest", "factor_analysis", "kepler"};
  return names;
}

inline bool is_foreign_backend(const std::string& name) {
  return name == "venturescript" || name == "inline_venturescript";
}

// Structural-type keywords; CATEGORICAL and RATE are accepted aliases.
inline std::optional<std::string> check_stattype(
    const std::string& keyword, const std::vector<double>& args,
    bool instantiable) {
  auto arity = [&](size_t lo, size_t hi) -> std::optional<std::string> {
    if (args.size() < lo || args.size() > hi)
      return "wrong number of parameters for " + keyword;
    return std::nullopt;
  };
  if (keyword == "BINARY" || keyword == "MAGNITUDE" || keyword == "NUMERICAL")
    return arity(0, 0);
  if (keyword == "NOMINAL" || keyword == "CATEGORICAL") {
    if (auto e = arity(0, 1)) return e;
    if (!args.empty() && (args[0] < 1 || args[0] != static_cast<int>(args[0])))
      return keyword + " needs a positive integer category count";
    if (instantiable && args.empty())
      return keyword + " needs an explicit category count here, e.g. " +
             keyword + "(4)";
    return std::nullopt;
  }
  if (keyword == "COUNT" || keyword == "RATE") {
    if (auto e = arity(0, 1)) return e;
    if (!args.empty() && args[0] <= 0)
      return keyword + " needs a positive base";
    return std::nullopt;
  }
  if (keyword == "CYCLIC") {
    if (auto e = arity(0, 1)) return e;
    if (!args.empty() && args[0] <= 0)
      return "CYCLIC needs a positive period";
    return std::nullopt;
  }
  if (keyword == "NUMERICAL_RANGED") {
    if (auto e = arity(2, 2)) return e;
    if (args[0] >= args[1])
      return "NUMERICAL_RANGED needs bounds with low < high";
    return std::nullopt;
  }
  return "unknown statistical type '" + keyword + "'";
}

// Only valid after check_stattype passes with instantiable = true.
inline StatType make_stattype(const std::string& keyword,
                              const std::vector<double>& args) {
  if (keyword == "BINARY") return StatType::binary();
  if (keyword == "NOMINAL" || keyword == "CATEGORICAL")
    return StatType::nominal(static_cast<int>(args[0]));
  if (keyword == "COUNT" || keyword == "RATE")
    return args.empty() ? StatType::count() : StatType::count(args[0]);
  if (keyword == "CYCLIC")
    return args.empty() ? StatType::cyclic() : StatType::cyclic(args[0]);
  if (keyword == "MAGNITUDE") return StatType::magnitude();
  if (keyword == "NUMERICAL_RANGED") return StatType::ranged(args[0], args[1]);
  return StatType::numerical();
}

struct ColumnPolicy {
  enum class Kind { model, ignore, guess };
  Kind kind = Kind::guess;
  std::string stattype;
  std::vector<double> stattype_args;
};

struct BoundCreateTable {
  std::string name;
  std::string file;
  std::shared_ptr<struct BoundStatement> query;
};

struct BoundNullify {
  std::string table;
  std::string token;
};

struct BoundCreatePopulation {
  std::string name;
  std::string table;
  // One policy per base-table column, in table column order.
  std::vector<std::pair<std::string, ColumnPolicy>> columns;
};

struct BoundExposed {
  std::string name;
  StatType type;
};

struct BoundOverride {
  std::string cgpm;
  std::vector<int> outputs;
  std::vector<std::string> givens;
  std::vector<BoundExposed> exposed;
  std::vector<Param> params;
};

struct BoundCreateMetamodel {
  std::string name;
  std::string population;
  std::string baseline;
  std::vector<Param> baseline_params;
  std::map<int, Family> category_models;
  std::vector<BoundOverride> overrides;
};

struct BoundInitialize {
  std::string metamodel;
  int count = 1;
};

struct BoundAnalyze {
  std::string metamodel;
  int count = 1;
  bool seconds = false;
  bool skip = false;
  std::vector<int> plan_vars;
  bool has_plan = false;
};

struct BoundSimulate {
  std::string metamodel;
  std::vector<int> targets;
  RowValues givens;
  std::optional<MemberId> rowid;
  int limit = 1;
};

struct BoundProbability {
  std::string metamodel;
  RowValues targets;
  RowValues givens;
  std::optional<MemberId> rowid;
};

struct BoundDependence {
  std::string metamodel;
  int x = 0;
  int y = 0;
};

struct BoundMutualInformation {
  std::string metamodel;
  int x = 0;
  int y = 0;
  RowValues givens;
  int samples = 100;
};

struct BoundPredictiveProbability {
  std::string metamodel;
  int var = 0;
  std::optional<MemberId> rowid;
};

struct BoundInferItem {
  int var = 0;
  std::string name;
  std::optional<std::string> confidence;
  int samples = 100;
};

struct BoundInfer {
  std::string metamodel;
  std::vector<BoundInferItem> items;
  std::optional<MemberId> rowid;
};

using BoundNode =
    std::variant<BoundCreateTable, BoundNullify, BoundCreatePopulation,
                 BoundCreateMetamodel, BoundInitialize, BoundAnalyze,
                 BoundSimulate, BoundProbability, BoundDependence,
                 BoundMutualInformation, BoundPredictiveProbability,
                 BoundInfer>;

struct BoundStatement {
  BoundNode node;
};

struct BindResult {
  std::optional<BoundStatement> bound;
  std::vector<Diagnostic> errors;
};

namespace detail {

class Binder {
 public:
  Binder(const Catalog& catalog, Span at) : catalog_(catalog), at_(at) {}

  BindResult run(const StatementNode& node) {
    BindResult out;
    try {
      out.bound = BoundStatement{std::visit(*this, node)};
    } catch (const Failed&) {
      out.errors = std::move(errors_);
    }
    return out;
  }

  BoundNode operator()(const CreateTable& s) {
    BoundCreateTable out;
    out.name = s.name;
    if (!s.query) {
      out.file = s.file;
      return out;
    }
    Binder inner(catalog_, s.query->begin);
    BindResult r = inner.run(s.query->node);
    if (!r.bound) {
      errors_ = std::move(r.errors);
      throw Failed{};
    }
    out.query = std::make_shared<BoundStatement>(std::move(*r.bound));
    return out;
  }

  BoundNode operator()(const Nullify& s) {
    if (!catalog_.tables.count(s.table))
      fail("unknown table '" + s.table + "'");
    return BoundNullify{s.table, s.token};
  }

  BoundNode operator()(const CreatePopulation& s) {
    auto table = catalog_.tables.find(s.table);
    if (table == catalog_.tables.end())
      fail("unknown table '" + s.table + "'");
    if (catalog_.populations.count(s.name))
      fail("population '" + s.name + "' already exists");
    std::map<std::string, ColumnPolicy> policies;
    bool guess_rest = false;
    for (const SchemaItem& item : s.schema) {
      ColumnPolicy policy;
      switch (item.kind) {
        case SchemaItem::Kind::model: {
          policy.kind = ColumnPolicy::Kind::model;
          policy.stattype = item.stattype;
          policy.stattype_args = item.stattype_args;
          if (auto e = check_stattype(item.stattype, item.stattype_args,
                                      /*instantiable=*/false))
            fail(*e);
          break;
        }
        case SchemaItem::Kind::ignore:
          policy.kind = ColumnPolicy::Kind::ignore;
          break;
        case SchemaItem::Kind::guess:
          policy.kind = ColumnPolicy::Kind::guess;
          break;
      }
      if (item.kind == SchemaItem::Kind::guess && item.guess_all) {
        guess_rest = true;
        continue;
      }
      for (const std::string& var : item.vars) {
        bool known = false;
        for (const std::string& col : table->second) known |= col == var;
        if (!known)
          fail("'" + var + "' is not a column of table '" + s.table + "'");
        if (policies.count(var))
          fail("column '" + var + "' is assigned two schema policies");
        policies[var] = policy;
      }
    }
    BoundCreatePopulation out;
    out.name = s.name;
    out.table = s.table;
    for (const std::string& col : table->second) {
      auto it = policies.find(col);
      if (it != policies.end()) {
        out.columns.emplace_back(col, it->second);
      } else if (guess_rest) {
        out.columns.emplace_back(col, ColumnPolicy{});
      } else {
        fail("column '" + col +
             "' has no schema policy; add MODEL, IGNORE, or GUESS "
             "STATTYPES FOR (*)");
      }
    }
    return out;
  }

  BoundNode operator()(const CreateMetamodel& s) {
    auto pop = catalog_.populations.find(s.population);
    if (pop == catalog_.populations.end())
      fail("unknown population '" + s.population + "'");
    if (catalog_.metamodels.count(s.name))
      fail("metamodel '" + s.name + "' already exists");
    if (is_foreign_backend(s.baseline))
      fail("'" + s.baseline + "' is not supported");
    if (!baseline_names().count(s.baseline))
      fail("unknown baseline '" + s.baseline + "'");

    BoundCreateMetamodel out;
    out.name = s.name;
    out.population = s.population;
    out.baseline = s.baseline;
    out.baseline_params = s.baseline_params;

    const Population& population = *pop->second;
    for (const CategoryModel& cat : s.category_models) {
      if (s.baseline != "crosscat")
        fail("SET CATEGORY MODEL applies only to the crosscat baseline");
      auto id = population.try_id(cat.var);
      if (!id)
        fail("unknown variable '" + cat.var + "' in population '" +
             s.population + "'");
      std::optional<Family> family;
      try {
        family = family_from_name(cat.model);
      } catch (const std::invalid_argument&) {
        fail("unknown category model '" + cat.model + "'");
      }
      if (!family_matches(*family, population.var(*id).type.kind))
        fail("category model '" + cat.model + "' does not fit variable '" +
             cat.var + "'");
      out.category_models[*id] = *family;
    }

    std::set<int> claimed;
    std::set<std::string> exposed_names;
    for (const Override& ov : s.overrides) {
      if (is_foreign_backend(ov.cgpm))
        fail("'" + ov.cgpm + "' is not supported");
      if (!override_names().count(ov.cgpm))
        fail("unknown generative model '" + ov.cgpm + "'");
      BoundOverride bound;
      bound.cgpm = ov.cgpm;
      bound.params = ov.params;
      for (const std::string& name : ov.outputs) {
        auto id = population.try_id(name);
        if (!id)
          fail("unknown variable '" + name + "' in population '" +
               s.population + "'");
        if (claimed.count(*id))
          fail("variable '" + name + "' is modeled by two overrides");
        claimed.insert(*id);
        bound.outputs.push_back(*id);
      }
      for (const Exposed& ex : ov.exposed) {
        if (population.try_id(ex.name))
          fail("exposed name '" + ex.name +
               "' is already a population variable");
        if (!exposed_names.insert(ex.name).second)
          fail("exposed name '" + ex.name + "' is used twice");
        if (auto e = check_stattype(ex.stattype, ex.stattype_args,
                                    /*instantiable=*/true))
          fail(*e);
        bound.exposed.push_back(
            {ex.name, make_stattype(ex.stattype, ex.stattype_args)});
      }
      bound.givens = ov.givens;
      out.overrides.push_back(std::move(bound));
    }

    for (const BoundOverride& ov : out.overrides) {
      for (const std::string& name : ov.givens) {
        if (!population.try_id(name) && !exposed_names.count(name))
          fail("unknown GIVEN variable '" + name + "' in population '" +
               s.population + "'");
      }
    }
    for (const auto& [var, family] : out.category_models) {
      if (claimed.count(var))
        fail("variable '" + population.var(var).name +
             "' has a category model but is modeled by an override");
    }
    check_override_cycles(population, out.overrides);
    return out;
  }

  BoundNode operator()(const Initialize& s) {
    require_metamodel(s.metamodel);
    if (s.count < 1) fail("INITIALIZE needs a positive model count");
    return BoundInitialize{s.metamodel, s.count};
  }

  BoundNode operator()(const Analyze& s) {
    const MetamodelEntry& entry = require_metamodel(s.metamodel);
    if (s.count < 1) fail("ANALYZE needs a positive amount of work");
    BoundAnalyze out;
    out.metamodel = s.metamodel;
    out.count = s.count;
    out.seconds = s.seconds;
    if (s.plan) {
      out.has_plan = true;
      out.skip = s.plan->skip;
      for (const std::string& name : s.plan->vars)
        out.plan_vars.push_back(resolve_var(*entry.vars, name));
    }
    return out;
  }

  BoundNode operator()(const Simulate& s) {
    const auto& [name, entry] = resolve_source(s.source);
    BoundSimulate out;
    out.metamodel = name;
    std::set<int> seen;
    for (const std::string& target : s.targets) {
      int id = resolve_var(*entry.vars, target);
      if (!seen.insert(id).second)
        fail("variable '" + target + "' is simulated twice");
      out.targets.push_back(id);
    }
    out.givens = bind_givens(*entry.vars, s.givens, seen);
    out.rowid = bind_rowid(s.rowid);
    if (s.limit && *s.limit < 1) fail("LIMIT needs a positive row count");
    out.limit = s.limit.value_or(1);
    return out;
  }

  BoundNode operator()(const EstimateProbability& s) {
    const auto& [name, entry] = resolve_source(s.source);
    BoundProbability out;
    out.metamodel = name;
    std::set<int> seen;
    for (const Given& target : s.targets) {
      int id = resolve_var(*entry.vars, target.var);
      if (!out.targets.emplace(id, bind_literal(*entry.vars, id, target.value))
               .second)
        fail("variable '" + target.var + "' is queried twice");
      seen.insert(id);
    }
    out.givens = bind_givens(*entry.vars, s.givens, seen);
    out.rowid = bind_rowid(s.rowid);
    return out;
  }

  BoundNode operator()(const EstimateDependence& s) {
    const auto& [name, entry] = resolve_source(s.source);
    return BoundDependence{name, resolve_var(*entry.vars, s.x),
                           resolve_var(*entry.vars, s.y)};
  }

  BoundNode operator()(const EstimateMI& s) {
    const auto& [name, entry] = resolve_source(s.source);
    BoundMutualInformation out;
    out.metamodel = name;
    out.x = resolve_var(*entry.vars, s.x);
    out.y = resolve_var(*entry.vars, s.y);
    if (out.x == out.y)
      fail("mutual information needs two distinct variables");
    std::set<int> seen = {out.x, out.y};
    out.givens = bind_givens(*entry.vars, s.givens, seen);
    if (s.samples && *s.samples < 1)
      fail("USING needs a positive sample count");
    out.samples = s.samples.value_or(100);
    return out;
  }

  BoundNode operator()(const EstimatePredictiveProbability& s) {
    const auto& [name, entry] = resolve_source(s.source);
    BoundPredictiveProbability out;
    out.metamodel = name;
    out.var = resolve_var(*entry.vars, s.var);
    out.rowid = bind_rowid(s.rowid);
    return out;
  }

  BoundNode operator()(const Infer& s) {
    const auto& [name, entry] = resolve_source(s.source);
    BoundInfer out;
    out.metamodel = name;
    std::set<int> seen;
    for (const InferItem& item : s.items) {
      BoundInferItem bound;
      bound.var = resolve_var(*entry.vars, item.var);
      if (!seen.insert(bound.var).second)
        fail("variable '" + item.var + "' is inferred twice");
      bound.name = item.var;
      bound.confidence = item.confidence;
      if (item.samples && *item.samples < 1)
        fail("USING needs a positive sample count");
      bound.samples = item.samples.value_or(100);
      if (!s.explicit_form && item.confidence)
        fail("CONFIDENCE columns need INFER EXPLICIT");
      out.items.push_back(std::move(bound));
    }
    out.rowid = bind_rowid(s.rowid);
    return out;
  }

 private:
  struct Failed {};

  [[noreturn]] void fail(const std::string& message) {
    errors_.push_back({at_.line, at_.column, message});
    throw Failed{};
  }

  const MetamodelEntry& require_metamodel(const std::string& name) {
    auto it = catalog_.metamodels.find(name);
    if (it == catalog_.metamodels.end())
      fail("unknown metamodel '" + name + "'");
    return it->second;
  }

  // Queries may name a metamodel directly, or a population that has
  // exactly one metamodel defined over it.
  std::pair<std::string, const MetamodelEntry&> resolve_source(
      const std::string& name) {
    auto it = catalog_.metamodels.find(name);
    if (it != catalog_.metamodels.end()) return {it->first, it->second};
    if (catalog_.populations.count(name)) {
      const MetamodelEntry* only = nullptr;
      std::string found;
      for (const auto& [mm, entry] : catalog_.metamodels) {
        if (entry.population != name) continue;
        if (only)
          fail("population '" + name +
               "' has several metamodels; query one by name");
        only = &entry;
        found = mm;
      }
      if (only) return {found, *only};
      fail("population '" + name + "' has no metamodel yet");
    }
    fail("unknown metamodel or population '" + name + "'");
  }

  int resolve_var(const Population& pop, const std::string& name) {
    auto id = pop.try_id(name);
    if (!id) fail("unknown variable '" + name + "'");
    return *id;
  }

  double bind_literal(const Population& pop, int var, const Literal& lit) {
    const auto& variable = pop.var(var);
    if (lit.kind == LiteralKind::string) {
      if (variable.type.kind != StatKind::nominal)
        fail("variable '" + variable.name + "' takes numeric values, not '" +
             lit.text + "'");
      auto it = variable.symbol_index.find(lit.text);
      if (it == variable.symbol_index.end())
        fail("unknown category '" + lit.text + "' for variable '" +
             variable.name + "'");
      return it->second;
    }
    if (lit.kind == LiteralKind::name)
      fail("expected a number or quoted string for variable '" +
           variable.name + "'");
    if (!variable.type.admissible(lit.number))
      fail("value " + number_repr(lit.number) +
           " is outside the support of variable '" + variable.name + "' (" +
           variable.type.name() + ")");
    return lit.number;
  }

  RowValues bind_givens(const Population& pop, const std::vector<Given>& gs,
                        const std::set<int>& queried) {
    RowValues out;
    for (const Given& g : gs) {
      int id = resolve_var(pop, g.var);
      if (queried.count(id))
        fail("variable '" + g.var + "' appears in both the query and GIVEN");
      if (!out.emplace(id, bind_literal(pop, id, g.value)).second)
        fail("variable '" + g.var + "' is given twice");
    }
    return out;
  }

  std::optional<MemberId> bind_rowid(const std::optional<long long>& rowid) {
    if (!rowid) return std::nullopt;
    if (*rowid < 0) fail("rowid must be nonnegative");
    return MemberId{*rowid};
  }

  // Overrides may consume one another's exposed variables; the chain of
  // name-level dependencies must stay acyclic.
  void check_override_cycles(const Population& pop,
                             const std::vector<BoundOverride>& overrides) {
    std::map<std::string, size_t> producer;
    for (size_t i = 0; i < overrides.size(); ++i) {
      for (int v : overrides[i].outputs) producer[pop.var(v).name] = i;
      for (const BoundExposed& ex : overrides[i].exposed)
        producer[ex.name] = i;
    }
    std::vector<int> color(overrides.size(), 0);
    for (size_t i = 0; i < overrides.size(); ++i) visit_override(i, overrides, producer, color);
  }

  void visit_override(size_t i, const std::vector<BoundOverride>& overrides,
                      const std::map<std::string, size_t>& producer,
                      std::vector<int>& color) {
    if (color[i] == 2) return;
    if (color[i] == 1)
      fail("overrides form a cycle through their GIVEN variables");
    color[i] = 1;
    for (const std::string& name : overrides[i].givens) {
      auto it = producer.find(name);
      if (it != producer.end() && it->second != i)
        visit_override(it->second, overrides, producer, color);
    }
    color[i] = 2;
  }

  const Catalog& catalog_;
  Span at_;
  std::vector<Diagnostic> errors_;
};

}  // namespace detail

inline BindResult bind(const Statement& stmt, const Catalog& catalog) {
  return detail::Binder(catalog, stmt.begin).run(stmt.node);
}

}  // namespace cgpm::lang
