// Copyright 2026
// See LICENSE.txt

// Interpreter state behind the command-line tool: raw tables, populations
// built from schema policies, metamodel ensembles assembled from bound
// definitions, query execution, and versioned persistence.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgpm/bind.hpp"
#include "cgpm/crosscat.hpp"
#include "cgpm/discriminative.hpp"
#include "cgpm/factor_analysis.hpp"
#include "cgpm/gen_knn.hpp"
#include "cgpm/kde.hpp"
#include "cgpm/kepler.hpp"
#include "cgpm/lang.hpp"
#include "cgpm/network.hpp"
#include "cgpm/query.hpp"

namespace cgpm::session {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<std::string>>> rows;
};

// Rendered query output: every cell already formatted for display.
struct TextTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// RFC-4180 subset: quoted fields may hold commas, newlines, and doubled
// quotes; the first record names the columns; empty fields are missing.
inline Table parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_open = false;
  size_t i = 0;
  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    field_open = false;
  };
  auto end_record = [&]() {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"' && field.empty() && !field_open) {
      quoted = true;
      field_open = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r') {
      ++i;
      continue;
    }
    if (c == '\n') {
      end_record();
      ++i;
      continue;
    }
    field += c;
    field_open = true;
    ++i;
  }
  require(!quoted, origin + ": unterminated quoted field");
  if (field_open || !field.empty() || !record.empty()) end_record();
  require(!records.empty(), origin + ": empty file, a header row is required");

  Table out;
  out.columns = records[0];
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != out.columns.size()) {
      std::ostringstream os;
      os << origin << ": row " << r - 1 << " has " << records[r].size()
         << " fields, expected " << out.columns.size();
      throw std::runtime_error(os.str());
    }
    std::vector<std::optional<std::string>> row;
    for (const std::string& cell : records[r])
      row.push_back(cell.empty() ? std::nullopt
                                 : std::optional<std::string>(cell));
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline Table ingest_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path);
}

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) return std::nullopt;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return std::nullopt;
  return v;
}

inline std::string escape(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c == '%' || c == ' ' || c == '\t' || c == '\n' || c == '\r' ||
        c == '~') {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out.empty() ? "%" : out;
}

inline std::string unescape(const std::string& s) {
  if (s == "%") return "";
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    require(i + 2 < s.size(), "corrupt state file");
    int hi = nibble(s[i + 1]), lo = nibble(s[i + 2]);
    require(hi >= 0 && lo >= 0, "corrupt state file");
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return out;
}

}  // namespace detail

class Session {
 public:
  explicit Session(uint64_t seed = 1, int workers = 1)
      : seed_(seed), workers_(std::max(1, workers)) {}

  uint64_t seed() const { return seed_; }
  int workers() const { return workers_; }
  void set_workers(int w) { workers_ = std::max(1, w); }
  const lang::Catalog& catalog() const { return catalog_; }

  std::vector<std::string> table_names() const {
    std::vector<std::string> names;
    for (const auto& [name, t] : tables_) names.push_back(name);
    return names;
  }

  const Table* table(const std::string& name) const {
    auto it = tables_.find(name);
    return it == tables_.end() ? nullptr : &it->second;
  }

  // Parses diagnostics into the error message; throws std::runtime_error.
  TextTable execute(const lang::Statement& stmt) {
    lang::BindResult r = lang::bind(stmt, catalog_);
    if (!r.bound) {
      std::string message;
      for (const lang::Diagnostic& d : r.errors) {
        if (!message.empty()) message += "\n";
        message += d.format();
      }
      throw std::runtime_error(message);
    }
    return execute_bound(*r.bound, lang::print(stmt));
  }

  // Grids are written as first created; .nullify entries in the journal
  // rebuild the current cell state on load.
  void save(std::ostream& out) const {
    out << "cgpm-state 1\n";
    out << "seed " << seed_ << "\n";
    out << "cursor " << query_cursor_ << "\n";
    out << "tables " << originals_.size() << "\n";
    for (const auto& [name, t] : originals_) {
      out << "table " << detail::escape(name) << " " << t.columns.size()
          << " " << t.rows.size() << "\n";
      out << "columns";
      for (const std::string& c : t.columns) out << " " << detail::escape(c);
      out << "\n";
      for (const auto& row : t.rows) {
        out << "row";
        for (const auto& cell : row)
          out << " " << (cell ? detail::escape(*cell) : std::string("~"));
        out << "\n";
      }
    }
    out << "journal " << journal_.size() << "\n";
    for (const JournalEntry& entry : journal_)
      out << (entry.is_table ? "table " : "stmt ")
          << detail::escape(entry.text) << "\n";
    out << "end\n";
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '" + path + "'");
    save(out);
    require(out.good(), "failed writing '" + path + "'");
  }

  // Rebuilds models by re-running the modeling journal; every step is
  // deterministic in the stored seed, so queries resume bit-identically.
  static Session load(std::istream& in, int workers = 1) {
    auto next = [&in](const std::string& want) -> std::vector<std::string> {
      std::string line;
      require(static_cast<bool>(std::getline(in, line)), "corrupt state file");
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::vector<std::string> parts;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) parts.push_back(tok);
      require(!parts.empty() && (want.empty() || parts[0] == want),
              "corrupt state file");
      return parts;
    };
    {
      std::string line;
      require(static_cast<bool>(std::getline(in, line)), "corrupt state file");
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line != "cgpm-state 1") {
        require(line.rfind("cgpm-state", 0) != 0,
                "state file version mismatch: this build reads version 1");
        throw std::runtime_error("corrupt state file");
      }
    }
    auto seed_line = next("seed");
    require(seed_line.size() == 2, "corrupt state file");
    Session s(std::stoull(seed_line[1]), workers);
    auto cursor_line = next("cursor");
    require(cursor_line.size() == 2, "corrupt state file");
    uint64_t cursor = std::stoull(cursor_line[1]);

    auto tables_line = next("tables");
    require(tables_line.size() == 2, "corrupt state file");
    size_t n_tables = std::stoull(tables_line[1]);
    std::map<std::string, Table> staged;
    for (size_t t = 0; t < n_tables; ++t) {
      auto head = next("table");
      require(head.size() == 4, "corrupt state file");
      std::string name = detail::unescape(head[1]);
      size_t ncols = std::stoull(head[2]), nrows = std::stoull(head[3]);
      auto cols = next("columns");
      require(cols.size() == ncols + 1, "corrupt state file");
      Table table;
      for (size_t c = 1; c < cols.size(); ++c)
        table.columns.push_back(detail::unescape(cols[c]));
      for (size_t r = 0; r < nrows; ++r) {
        auto cells = next("row");
        require(cells.size() == ncols + 1, "corrupt state file");
        std::vector<std::optional<std::string>> row;
        for (size_t c = 1; c < cells.size(); ++c)
          row.push_back(cells[c] == "~" ? std::nullopt
                                        : std::optional<std::string>(
                                              detail::unescape(cells[c])));
        table.rows.push_back(std::move(row));
      }
      staged[name] = std::move(table);
    }

    auto journal_line = next("journal");
    require(journal_line.size() == 2, "corrupt state file");
    size_t n_entries = std::stoull(journal_line[1]);
    for (size_t k = 0; k < n_entries; ++k) {
      auto entry = next("");
      require(entry.size() == 2, "corrupt state file");
      std::string text = detail::unescape(entry[1]);
      if (entry[0] == "table") {
        auto it = staged.find(text);
        require(it != staged.end(), "corrupt state file: missing table grid");
        s.install_table(text, it->second);
      } else {
        require(entry[0] == "stmt", "corrupt state file");
        lang::Program p = lang::parse(text);
        require(p.diagnostics.empty() && p.statements.size() == 1,
                "corrupt state file: bad journal statement");
        s.execute(p.statements[0]);
      }
    }
    next("end");
    s.query_cursor_ = cursor;
    return s;
  }

  static Session load(const std::string& path, int workers = 1) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot read '" + path + "'");
    return load(in, workers);
  }

 private:
  struct PopulationInfo {
    std::shared_ptr<Population> population;
    std::string table;
    // Numeric view of the table, indexed [variable id][row].
    std::shared_ptr<std::vector<std::vector<std::optional<double>>>> values;
    size_t n_rows = 0;
  };

  struct MetamodelInfo {
    std::string population;
    std::shared_ptr<Population> model_pop;
    MetamodelEnsemble::Factory factory;
    std::shared_ptr<MetamodelEnsemble> ensemble;
  };

  TextTable execute_bound(const lang::BoundStatement& stmt,
                          const std::string& text) {
    struct Runner {
      Session& s;
      const std::string& text;
      TextTable operator()(const lang::BoundCreateTable& b) { return s.run_create_table(b); }
      TextTable operator()(const lang::BoundNullify& b) { return s.run_nullify(b, text); }
      TextTable operator()(const lang::BoundCreatePopulation& b) { return s.run_create_population(b, text); }
      TextTable operator()(const lang::BoundCreateMetamodel& b) { return s.run_create_metamodel(b, text); }
      TextTable operator()(const lang::BoundInitialize& b) { return s.run_initialize(b, text); }
      TextTable operator()(const lang::BoundAnalyze& b) { return s.run_analyze(b, text); }
      TextTable operator()(const lang::BoundSimulate& b) { return s.run_simulate(b); }
      TextTable operator()(const lang::BoundProbability& b) { return s.run_probability(b); }
      TextTable operator()(const lang::BoundDependence& b) { return s.run_dependence(b); }
      TextTable operator()(const lang::BoundMutualInformation& b) { return s.run_mi(b); }
      TextTable operator()(const lang::BoundPredictiveProbability& b) { return s.run_predictive(b); }
      TextTable operator()(const lang::BoundInfer& b) { return s.run_infer(b); }
    };
    return std::visit(Runner{*this, text}, stmt.node);
  }

  void install_table(const std::string& name, const Table& t) {
    require(!tables_.count(name), "table '" + name + "' already exists");
    originals_[name] = t;
    tables_[name] = t;
    catalog_.tables[name] = t.columns;
    journal_.push_back({true, name});
  }

  TextTable run_create_table(const lang::BoundCreateTable& b) {
    require(!tables_.count(b.name), "table '" + b.name + "' already exists");
    if (!b.query) {
      install_table(b.name, ingest_csv(b.file));
      return {};
    }
    TextTable result = execute_bound(*b.query, "");
    Table t;
    t.columns = result.columns;
    for (const auto& row : result.rows) {
      std::vector<std::optional<std::string>> cells;
      for (const std::string& cell : row)
        cells.push_back(cell.empty() ? std::nullopt
                                     : std::optional<std::string>(cell));
      t.rows.push_back(std::move(cells));
    }
    install_table(b.name, t);
    return {};
  }

  TextTable run_nullify(const lang::BoundNullify& b, const std::string& text) {
    Table& t = tables_.at(b.table);
    for (auto& row : t.rows)
      for (auto& cell : row)
        if (cell && *cell == b.token) cell.reset();
    journal_.push_back({false, text});
    return {};
  }

  TextTable run_create_population(const lang::BoundCreatePopulation& b,
                                  const std::string& text) {
    const Table& t = tables_.at(b.table);
    auto pop = std::make_shared<Population>();
    auto values =
        std::make_shared<std::vector<std::vector<std::optional<double>>>>();

    for (size_t c = 0; c < b.columns.size(); ++c) {
      const auto& [column, policy] = b.columns[c];
      if (policy.kind == lang::ColumnPolicy::Kind::ignore) continue;

      std::vector<std::string> present;
      for (const auto& row : t.rows)
        if (row[c]) present.push_back(*row[c]);

      StatType type = column_type(b.table, column, policy, present);
      int id = pop->add_variable(column, type);
      std::vector<std::optional<double>> numeric(t.rows.size());
      for (size_t r = 0; r < t.rows.size(); ++r) {
        if (!t.rows[r][c]) continue;
        numeric[r] = encode_cell(*pop, id, b.table, column, r, *t.rows[r][c]);
      }
      values->push_back(std::move(numeric));
    }
    require(pop->size() > 0,
            "population '" + b.name + "' has no modeled variables");

    PopulationInfo info;
    info.population = pop;
    info.table = b.table;
    info.values = values;
    info.n_rows = t.rows.size();
    populations_[b.name] = std::move(info);
    catalog_.populations[b.name] = pop;
    journal_.push_back({false, text});
    return {};
  }

  StatType column_type(const std::string& table, const std::string& column,
                       const lang::ColumnPolicy& policy,
                       const std::vector<std::string>& present) {
    if (policy.kind == lang::ColumnPolicy::Kind::guess) {
      StatKind kind = guess_stat_kind(present);
      if (kind == StatKind::nominal)
        return StatType::nominal(
            static_cast<int>(distinct_count(present)));
      return StatType::numerical();
    }
    const std::string& kw = policy.stattype;
    if (kw == "NOMINAL" || kw == "CATEGORICAL") {
      size_t distinct = distinct_count(present);
      int cardinality = policy.stattype_args.empty()
                            ? static_cast<int>(distinct)
                            : static_cast<int>(policy.stattype_args[0]);
      require(distinct <= static_cast<size_t>(cardinality),
              "table '" + table + "' column '" + column + "' holds " +
                  std::to_string(distinct) + " distinct values, more than " +
                  "the declared " + std::to_string(cardinality));
      require(cardinality >= 1, "column '" + column + "' is entirely missing");
      return StatType::nominal(cardinality);
    }
    return lang::make_stattype(kw, policy.stattype_args);
  }

  static size_t distinct_count(const std::vector<std::string>& xs) {
    std::set<std::string> seen(xs.begin(), xs.end());
    return seen.size();
  }

  double encode_cell(Population& pop, int var, const std::string& table,
                     const std::string& column, size_t row,
                     const std::string& cell) {
    const StatType& type = pop.var(var).type;
    if (type.kind == StatKind::nominal)
      return pop.intern_symbol(var, cell);
    auto v = detail::parse_number(cell);
    std::ostringstream at;
    at << "table '" << table << "' row " << row << " column '" << column
       << "'";
    require(v.has_value(), at.str() + ": '" + cell + "' is not numeric");
    require(type.admissible(*v), at.str() + ": value " + cell +
                                     " is outside the support of " +
                                     type.name());
    return *v;
  }

  TextTable run_create_metamodel(const lang::BoundCreateMetamodel& b,
                                 const std::string& text) {
    const PopulationInfo& base = populations_.at(b.population);
    auto model_pop = std::make_shared<Population>(*base.population);
    int base_vars = model_pop->size();

    struct NodeSpec {
      std::string cgpm;
      std::vector<int> outputs;
      std::vector<int> inputs;
      std::vector<int> exposed;
      std::map<std::string, double> params;
    };
    std::vector<NodeSpec> overrides;
    std::set<int> claimed;
    for (const lang::BoundOverride& ov : b.overrides) {
      NodeSpec spec;
      spec.cgpm = ov.cgpm;
      spec.outputs = ov.outputs;
      for (int v : ov.outputs) claimed.insert(v);
      for (const lang::BoundExposed& ex : ov.exposed)
        spec.exposed.push_back(model_pop->add_variable(ex.name, ex.type));
      spec.params = numeric_params(ov.cgpm, ov.params);
      overrides.push_back(std::move(spec));
    }
    for (size_t i = 0; i < overrides.size(); ++i) {
      for (const std::string& name : b.overrides[i].givens)
        overrides[i].inputs.push_back(model_pop->id(name));
      validate_override(*model_pop, overrides[i]);
    }

    std::vector<int> leftover;
    for (int v = 0; v < base_vars; ++v)
      if (!claimed.count(v)) leftover.push_back(v);
    require(!leftover.empty() || !overrides.empty(),
            "metamodel '" + b.name + "' models nothing");

    std::map<std::string, double> baseline_params =
        numeric_params(b.baseline, b.baseline_params);
    std::string baseline = b.baseline;
    std::map<int, Family> families = b.category_models;
    auto values = base.values;
    size_t n_rows = base.n_rows;
    std::shared_ptr<const Population> pop_view = model_pop;

    MetamodelEnsemble::Factory factory =
        [pop_view, overrides, leftover, baseline, baseline_params, families,
         values, n_rows, base_vars](uint64_t seed) {
          std::vector<std::shared_ptr<Cgpm>> nodes;
          uint64_t salt = 0;
          for (const NodeSpec& spec : overrides)
            nodes.push_back(
                build_override(pop_view, spec, mix_seed(seed, 0x6f00 + salt++)));
          if (!leftover.empty()) {
            if (baseline == "crosscat") {
              std::map<int, Family> kept;
              for (const auto& [v, f] : families)
                if (std::count(leftover.begin(), leftover.end(), v))
                  kept[v] = f;
              nodes.push_back(std::make_shared<CrossCat>(
                  pop_view, leftover, mix_seed(seed, 0x6263), kept));
            } else if (baseline == "multivariate_kde") {
              nodes.push_back(std::make_shared<Kde>(
                  std::const_pointer_cast<Population>(pop_view), leftover));
            } else {
              int k = 5;
              auto it = baseline_params.find("k");
              if (it != baseline_params.end()) k = static_cast<int>(it->second);
              nodes.push_back(std::make_shared<GenKnn>(
                  std::const_pointer_cast<Population>(pop_view), leftover, k));
            }
          }
          for (const auto& node : nodes) {
            for (MemberId r = 0; r < static_cast<MemberId>(n_rows); ++r) {
              for (int v = 0; v < base_vars; ++v) {
                if (!node->has_output(v) && !node->has_input(v)) continue;
                if (!node->accepts_measurement(v)) continue;
                const auto& cell = (*values)[v][r];
                if (cell) node->incorporate(r, v, *cell);
              }
            }
          }
          return std::make_shared<CgpmNetwork>(nodes);
        };

    MetamodelInfo info;
    info.population = b.population;
    info.model_pop = model_pop;
    info.factory = std::move(factory);
    metamodels_[b.name] = std::move(info);
    catalog_.metamodels[b.name] = {b.population, model_pop};
    journal_.push_back({false, text});
    return {};
  }

  // Parameter lists are validated by name per model; values must be numbers.
  std::map<std::string, double> numeric_params(
      const std::string& cgpm, const std::vector<lang::Param>& params) {
    static const std::map<std::string, std::set<std::string>> known = {
        {"crosscat", {}},
        {"multivariate_kde", {}},
        {"generative_knn", {"k"}},
        {"kepler", {"alpha"}},
        {"linear_regression", {"prior_scale"}},
        {"random_forest", {"k", "trees", "depth"}},
        {"factor_analysis", {"L", "ppca"}},
    };
    const std::set<std::string>& allowed = known.at(cgpm);
    std::map<std::string, double> out;
    for (const lang::Param& p : params) {
      require(allowed.count(p.name),
              "unknown parameter '" + p.name + "' for " + cgpm);
      require(p.value.kind == lang::LiteralKind::number,
              "parameter '" + p.name + "' for " + cgpm + " must be a number");
      out[p.name] = p.value.number;
    }
    return out;
  }

  template <typename Spec>
  void validate_override(const Population& pop, const Spec& spec) {
    auto name_of = [&](int v) { return pop.var(v).name; };
    if (spec.cgpm == "kepler") {
      require(spec.outputs.size() == 1 && spec.inputs.size() == 2 &&
                  spec.exposed.size() == 2,
              "kepler models one output given two inputs and exposes a "
              "cluster and a noise variable");
      bool have_cluster = false, have_noise = false;
      for (int v : spec.exposed) {
        if (pop.var(v).type.kind == StatKind::count)
          have_cluster = true;
        else if (!pop.var(v).type.discrete())
          have_noise = true;
      }
      require(have_cluster && have_noise,
              "kepler exposes one COUNT cluster variable and one continuous "
              "noise variable");
    } else if (spec.cgpm == "linear_regression") {
      require(spec.outputs.size() == 1,
              "linear_regression models exactly one output");
      require(!spec.inputs.empty(), "linear_regression needs GIVEN variables");
      require(spec.exposed.empty(), "linear_regression exposes nothing");
      require(!pop.var(spec.outputs[0]).type.discrete(),
              "linear_regression output '" + name_of(spec.outputs[0]) +
                  "' must be a continuous kind");
    } else if (spec.cgpm == "random_forest") {
      require(spec.outputs.size() == 1,
              "random_forest models exactly one output");
      require(!spec.inputs.empty(), "random_forest needs GIVEN variables");
      require(spec.exposed.empty(), "random_forest exposes nothing");
      auto k = spec.params.find("k");
      if (k != spec.params.end()) {
        const StatType& t = pop.var(spec.outputs[0]).type;
        int symbols = t.kind == StatKind::binary ? 2
                      : t.kind == StatKind::nominal ? t.cardinality
                                                    : -1;
        require(symbols == static_cast<int>(k->second),
                "random_forest k must equal the output's category count");
      }
    } else if (spec.cgpm == "factor_analysis") {
      require(spec.inputs.empty(),
              "factor_analysis takes no GIVEN variables");
      require(!spec.exposed.empty(),
              "factor_analysis exposes at least one factor score");
      require(spec.exposed.size() <= spec.outputs.size(),
              "factor_analysis needs no more factors than observables");
      auto L = spec.params.find("L");
      if (L != spec.params.end())
        require(static_cast<size_t>(L->second) == spec.exposed.size(),
                "factor_analysis L must equal the number of exposed scores");
    }
  }

  template <typename Spec>
  static std::shared_ptr<Cgpm> build_override(
      std::shared_ptr<const Population> pop, const Spec& spec,
      uint64_t seed) {
    auto mutable_pop = std::const_pointer_cast<Population>(pop);
    auto param = [&spec](const char* name, double fallback) {
      auto it = spec.params.find(name);
      return it == spec.params.end() ? fallback : it->second;
    };
    if (spec.cgpm == "kepler") {
      int cluster = -1, noise = -1;
      for (int v : spec.exposed) {
        if (pop->var(v).type.kind == StatKind::count)
          cluster = v;
        else
          noise = v;
      }
      return std::make_shared<Kepler>(pop, spec.outputs[0], cluster, noise,
                                      spec.inputs[0], spec.inputs[1], seed,
                                      param("alpha", 0.5));
    }
    if (spec.cgpm == "linear_regression")
      return std::make_shared<BayesLinReg>(mutable_pop, spec.outputs[0],
                                           spec.inputs,
                                           param("prior_scale", 100.0));
    if (spec.cgpm == "random_forest") {
      ForestConfig config;
      config.trees = static_cast<int>(param("trees", config.trees));
      config.max_depth = static_cast<int>(param("depth", config.max_depth));
      const StatType& t = pop->var(spec.outputs[0]).type;
      if (t.kind == StatKind::binary || t.kind == StatKind::nominal)
        return std::make_shared<ForestClassifier>(
            mutable_pop, spec.outputs[0], spec.inputs, seed, config);
      return std::make_shared<ForestRegressor>(mutable_pop, spec.outputs[0],
                                               spec.inputs, seed, config);
    }
    bool ppca = spec.params.count("ppca") && spec.params.at("ppca") != 0;
    return std::make_shared<FactorAnalysis>(mutable_pop, spec.outputs,
                                            spec.exposed, ppca);
  }

  MetamodelInfo& modeled(const std::string& name) {
    MetamodelInfo& info = metamodels_.at(name);
    require(info.ensemble != nullptr,
            "metamodel '" + name + "' has no models yet; INITIALIZE first");
    return info;
  }

  TextTable run_initialize(const lang::BoundInitialize& b,
                           const std::string& text) {
    MetamodelInfo& info = metamodels_.at(b.metamodel);
    info.ensemble = std::make_shared<MetamodelEnsemble>(
        info.factory, b.count, mix_seed(seed_, fnv1a(b.metamodel)));
    journal_.push_back({false, text});
    return {};
  }

  // Time budgets run whole single-sweep units and are journaled by the
  // realized sweep count, so replay reproduces the state exactly.
  TextTable run_analyze(const lang::BoundAnalyze& b, const std::string& text) {
    MetamodelInfo& info = modeled(b.metamodel);
    InferProgram program;
    program.iterations = b.seconds ? 1 : b.count;
    if (b.has_plan) {
      program.variables = b.plan_vars;
      program.skip = b.skip;
    }
    if (!b.seconds) {
      info.ensemble->analyze(program, workers_);
      journal_.push_back({false, text});
      return {};
    }
    auto start = std::chrono::steady_clock::now();
    int done = 0;
    do {
      info.ensemble->analyze(program, workers_);
      ++done;
    } while (std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           start)
                 .count() < b.count);
    std::ostringstream realized;
    realized << "ANALYZE " << b.metamodel << " FOR " << done << " ITERATIONS";
    if (b.has_plan) {
      realized << " (" << (b.skip ? "SKIP " : "VARIABLES ");
      for (size_t i = 0; i < b.plan_vars.size(); ++i)
        realized << (i ? ", " : "")
                 << info.model_pop->var(b.plan_vars[i]).name;
      realized << ")";
    }
    realized << ";";
    journal_.push_back({false, realized.str()});
    return {};
  }

  Rng query_rng() {
    return Rng(mix_seed(seed_, 0x5100000000ull + query_cursor_++));
  }

  std::string render(const Population& pop, int var, double v) const {
    if (var >= 0 && pop.var(var).type.kind == StatKind::nominal) {
      const auto& symbols = pop.var(var).symbols;
      size_t index = static_cast<size_t>(v);
      if (v >= 0 && v == std::floor(v) && index < symbols.size())
        return symbols[index];
    }
    return lang::number_repr(v);
  }

  TextTable run_simulate(const lang::BoundSimulate& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    bql::QueryResult result =
        bql::simulate(*info.ensemble, b.targets, b.givens, b.rowid, b.limit,
                      rng);
    TextTable out;
    out.columns = result.columns;
    for (const auto& row : result.rows) {
      std::vector<std::string> cells;
      for (size_t c = 0; c < row.size(); ++c)
        cells.push_back(render(*info.model_pop, b.targets[c], row[c]));
      out.rows.push_back(std::move(cells));
    }
    return out;
  }

  TextTable run_probability(const lang::BoundProbability& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    bql::QueryResult result = bql::estimate_probability(
        *info.ensemble, b.targets, b.givens, b.rowid, rng);
    return {{"probability"}, {{lang::number_repr(result.rows[0][0])}}};
  }

  TextTable run_dependence(const lang::BoundDependence& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    double p = bql::dependence_probability(*info.ensemble, b.x, b.y, rng);
    return {{"dependence_probability"}, {{lang::number_repr(p)}}};
  }

  TextTable run_mi(const lang::BoundMutualInformation& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    double mi = bql::mutual_information(*info.ensemble, b.x, b.y, b.givens,
                                        b.samples, rng);
    return {{"mutual_information"}, {{lang::number_repr(mi)}}};
  }

  TextTable run_predictive(const lang::BoundPredictiveProbability& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    TextTable out;
    out.columns = {"rowid", "predictive_probability"};
    std::vector<MemberId> rows;
    if (b.rowid) {
      rows.push_back(*b.rowid);
    } else {
      size_t n = populations_.at(info.population).n_rows;
      const CgpmNetwork& view = info.ensemble->instance(0);
      for (MemberId r = 0; r < static_cast<MemberId>(n); ++r)
        if (bql::stored_cell(view, r, b.var)) rows.push_back(r);
    }
    for (MemberId r : rows) {
      double lp = bql::predictive_probability(*info.ensemble, b.var, r, rng);
      out.rows.push_back({std::to_string(r), lang::number_repr(lp)});
    }
    return out;
  }

  TextTable run_infer(const lang::BoundInfer& b) {
    MetamodelInfo& info = modeled(b.metamodel);
    Rng rng = query_rng();
    std::vector<MemberId> rows;
    if (b.rowid) {
      rows.push_back(*b.rowid);
    } else {
      size_t n = populations_.at(info.population).n_rows;
      for (MemberId r = 0; r < static_cast<MemberId>(n); ++r)
        rows.push_back(r);
    }
    TextTable out;
    out.columns.push_back("rowid");
    for (const auto& row : rows) out.rows.push_back({std::to_string(row)});

    for (const lang::BoundInferItem& item : b.items) {
      bql::QueryResult result = bql::infer(*info.ensemble, {item.var}, rows,
                                           item.samples, rng);
      out.columns.push_back(item.name);
      if (item.confidence) out.columns.push_back(*item.confidence);
      for (size_t r = 0; r < rows.size(); ++r) {
        out.rows[r].push_back(
            render(*info.model_pop, item.var, result.rows[r][1]));
        if (item.confidence)
          out.rows[r].push_back(lang::number_repr(result.rows[r][2]));
      }
    }
    return out;
  }

  struct JournalEntry {
    bool is_table = false;
    std::string text;
  };

  uint64_t seed_;
  int workers_;
  uint64_t query_cursor_ = 0;
  std::map<std::string, Table> tables_;
  std::map<std::string, Table> originals_;
  std::map<std::string, PopulationInfo> populations_;
  std::map<std::string, MetamodelInfo> metamodels_;
  std::vector<JournalEntry> journal_;
  lang::Catalog catalog_;
};

inline std::string format_table(const TextTable& t) {
  std::vector<size_t> width(t.columns.size());
  for (size_t c = 0; c < t.columns.size(); ++c) width[c] = t.columns[c].size();
  for (const auto& row : t.rows)
    for (size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t c = 0; c < cells.size(); ++c) {
      if (c) os << " | ";
      os << cells[c];
      for (size_t pad = cells[c].size(); pad < width[c]; ++pad) os << ' ';
    }
    os << "\n";
  };
  line(t.columns);
  for (size_t c = 0; c < t.columns.size(); ++c) {
    if (c) os << "-+-";
    os << std::string(width[c], '-');
  }
  os << "\n";
  for (const auto& row : t.rows) line(row);
  return os.str();
}

inline std::string csv_quote(const std::string& s) {
  bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += c;
  }
  out += "\"";
  return out;
}

inline std::string format_csv(const TextTable& t) {
  std::ostringstream os;
  for (size_t c = 0; c < t.columns.size(); ++c) {
    if (c) os << ",";
    os << csv_quote(t.columns[c]);
  }
  os << "\n";
  for (const auto& row : t.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) os << ",";
      os << csv_quote(row[c]);
    }
    os << "\n";
  }
  return os.str();
}

inline std::string json_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  out += "\"";
  return out;
}

inline std::string format_json(const TextTable& t) {
  std::ostringstream os;
  os << "[";
  for (size_t r = 0; r < t.rows.size(); ++r) {
    os << (r ? ",\n " : "\n ");
    os << "{";
    for (size_t c = 0; c < t.columns.size(); ++c) {
      if (c) os << ", ";
      os << json_quote(t.columns[c]) << ": ";
      const std::string& cell = t.rows[r][c];
      if (auto v = detail::parse_number(cell); v && cell.find_first_not_of(
              "0123456789+-.eE") == std::string::npos)
        os << cell;
      else
        os << json_quote(cell);
    }
    os << "}";
  }
  os << (t.rows.empty() ? "]" : "\n]") << "\n";
  return os.str();
}

}  // namespace cgpm::session
