// Copyright 2026
// See LICENSE.txt

#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "cgpm/common.hpp"

namespace cgpm {

enum class StatKind {
  binary,
  nominal,
  count,
  cyclic,
  magnitude,
  numerical,
  numerical_ranged,
};

// A statistical data type: the support of one population variable plus the
// parameters that pin it down (cardinality, rate base, period, bounds).
struct StatType {
  StatKind kind = StatKind::numerical;
  int cardinality = 0;   // nominal
  double base = 1.0;     // count: support {0, 1/base, 2/base, ...}
  double period = 2 * std::numbers::pi;  // cyclic: support (0, period)
  double lo = 0.0, hi = 1.0;             // numerical_ranged: support (lo, hi)

  static StatType binary() { return {StatKind::binary}; }
  static StatType nominal(int cardinality) {
    require(cardinality >= 1, "nominal: cardinality must be positive");
    StatType t{StatKind::nominal};
    t.cardinality = cardinality;
    return t;
  }
  static StatType count(double base = 1.0) {
    require(base > 0, "count: base must be positive");
    StatType t{StatKind::count};
    t.base = base;
    return t;
  }
  static StatType cyclic(double period = 2 * std::numbers::pi) {
    require(period > 0, "cyclic: period must be positive");
    StatType t{StatKind::cyclic};
    t.period = period;
    return t;
  }
  static StatType magnitude() { return {StatKind::magnitude}; }
  static StatType numerical() { return {StatKind::numerical}; }
  static StatType ranged(double lo, double hi) {
    require(lo < hi, "ranged: need lo < hi");
    StatType t{StatKind::numerical_ranged};
    t.lo = lo;
    t.hi = hi;
    return t;
  }

  bool discrete() const {
    return kind == StatKind::binary || kind == StatKind::nominal ||
           kind == StatKind::count;
  }

  bool admissible(double v) const {
    if (!std::isfinite(v)) return false;
    switch (kind) {
      case StatKind::binary:
        return v == 0.0 || v == 1.0;
      case StatKind::nominal:
        return v == std::floor(v) && v >= 0 && v < cardinality;
      case StatKind::count: {
        double k = v * base;
        return v >= 0 && std::abs(k - std::round(k)) < 1e-9;
      }
      case StatKind::cyclic:
        return v > 0 && v < period;
      case StatKind::magnitude:
        return v > 0;
      case StatKind::numerical:
        return true;
      case StatKind::numerical_ranged:
        return v > lo && v < hi;
    }
    return false;
  }

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case StatKind::binary: return "BINARY";
      case StatKind::nominal:
        os << "NOMINAL(" << cardinality << ")";
        return os.str();
      case StatKind::count:
        os << "COUNT(" << base << ")";
        return os.str();
      case StatKind::cyclic:
        os << "CYCLIC(" << period << ")";
        return os.str();
      case StatKind::magnitude: return "MAGNITUDE";
      case StatKind::numerical: return "NUMERICAL";
      case StatKind::numerical_ranged:
        os << "NUMERICAL_RANGED(" << lo << "," << hi << ")";
        return os.str();
    }
    return "?";
  }
};

}  // namespace cgpm
