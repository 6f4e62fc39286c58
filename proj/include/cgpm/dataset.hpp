// Copyright 2026
// See LICENSE.txt

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>

#include "cgpm/common.hpp"

namespace cgpm {

using MemberId = int64_t;

// Sparse member-by-variable measurement store. Both axes iterate in sorted
// order, which the models rely on for reproducible statistics.
class Dataset {
 public:
  void observe(MemberId r, int var, double value) {
    auto& row = rows_[r];
    if (!row.emplace(var, value).second) {
      std::ostringstream os;
      os << "dataset: cell (" << r << ", " << var << ") already observed";
      throw std::invalid_argument(os.str());
    }
  }

  void forget(MemberId r, int var) {
    auto it = rows_.find(r);
    if (it == rows_.end() || it->second.erase(var) == 0) {
      std::ostringstream os;
      os << "dataset: cell (" << r << ", " << var << ") not observed";
      throw std::invalid_argument(os.str());
    }
    if (it->second.empty()) rows_.erase(it);
  }

  bool has(MemberId r, int var) const {
    auto it = rows_.find(r);
    return it != rows_.end() && it->second.count(var) > 0;
  }

  std::optional<double> get(MemberId r, int var) const {
    auto it = rows_.find(r);
    if (it == rows_.end()) return std::nullopt;
    auto jt = it->second.find(var);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
  }

  const std::map<int, double>* row(MemberId r) const {
    auto it = rows_.find(r);
    return it == rows_.end() ? nullptr : &it->second;
  }

  const std::map<MemberId, std::map<int, double>>& rows() const {
    return rows_;
  }

  size_t cell_count() const {
    size_t n = 0;
    for (const auto& [r, row] : rows_) n += row.size();
    return n;
  }

  bool empty() const { return rows_.empty(); }

  // Smallest id strictly greater than every incorporated member, for
  // hypothetical queries about fresh members.
  MemberId fresh_member() const {
    return rows_.empty() ? 0 : rows_.rbegin()->first + 1;
  }

 private:
  std::map<MemberId, std::map<int, double>> rows_;
};

}  // namespace cgpm
