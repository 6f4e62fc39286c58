// Copyright 2026
// See LICENSE.txt

#pragma once

#include <cctype>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgpm/stat_type.hpp"

namespace cgpm {

struct Variable {
  std::string name;
  StatType type;
  // Label <-> index table for nominal variables.
  std::vector<std::string> symbols;
  std::map<std::string, int> symbol_index;
};

// The set of variables a population exposes, with their statistical types.
// Variable ids are dense indices handed out in declaration order.
class Population {
 public:
  int add_variable(const std::string& name, const StatType& type) {
    require(index_.find(name) == index_.end(),
            "population: duplicate variable '" + name + "'");
    int id = static_cast<int>(vars_.size());
    index_[name] = id;
    vars_.push_back({name, type, {}, {}});
    return id;
  }

  int id(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "population: unknown variable '" + name + "'");
    return it->second;
  }

  std::optional<int> try_id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Variable& var(int id) const { return vars_.at(id); }
  Variable& var(int id) { return vars_.at(id); }
  int size() const { return static_cast<int>(vars_.size()); }

  // Interns a nominal label, growing the symbol table up to the declared
  // cardinality.
  int intern_symbol(int id, const std::string& label) {
    Variable& v = vars_.at(id);
    require(v.type.kind == StatKind::nominal,
            "population: '" + v.name + "' is not nominal");
    auto it = v.symbol_index.find(label);
    if (it != v.symbol_index.end()) return it->second;
    int s = static_cast<int>(v.symbols.size());
    require(s < v.type.cardinality,
            "population: symbol table for '" + v.name + "' is full");
    v.symbol_index[label] = s;
    v.symbols.push_back(label);
    return s;
  }

  int symbol(int id, const std::string& label) const {
    const Variable& v = vars_.at(id);
    auto it = v.symbol_index.find(label);
    require(it != v.symbol_index.end(),
            "population: unknown symbol '" + label + "' for '" + v.name + "'");
    return it->second;
  }

  const std::string& label(int id, int s) const {
    return vars_.at(id).symbols.at(static_cast<size_t>(s));
  }

 private:
  std::vector<Variable> vars_;
  std::map<std::string, int> index_;
};

inline bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
  return end && *end == '\0';
}

// Heuristic type guess for a raw column: non-numeric strings are nominal;
// numeric columns with few distinct values (at most 20, and at most 10% of
// the observed count) are treated as coded categories; everything else is
// numerical.
inline StatKind guess_stat_kind(const std::vector<std::string>& column) {
  std::set<std::string> distinct;
  size_t observed = 0;
  bool numeric = true;
  for (const std::string& cell : column) {
    if (cell.empty()) continue;
    ++observed;
    distinct.insert(cell);
    if (!parses_as_number(cell)) numeric = false;
  }
  if (!numeric) return StatKind::nominal;
  if (observed == 0) return StatKind::numerical;
  if (distinct.size() <= 20 &&
      10 * distinct.size() <= observed)
    return StatKind::nominal;
  return StatKind::numerical;
}

}  // namespace cgpm
