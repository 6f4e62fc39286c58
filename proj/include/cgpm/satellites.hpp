// Copyright 2026
// See LICENSE.txt

// Synthetic satellite catalog: orbital classes with Kepler-consistent
// periods, a configurable number of planted period anomalies, and
// missing-at-random masks on the non-orbital columns.

#pragma once

#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgpm/kepler.hpp"
#include "cgpm/rng.hpp"
#include "cgpm/session.hpp"

namespace cgpm::satgen {

struct SyntheticSatellites {
  session::Table table;
  std::vector<int64_t> anomalies;  // rowids with planted period deviations
};

inline std::string fixed2(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

inline SyntheticSatellites generate(int rows, int n_anomalies,
                                    uint64_t seed) {
  require(rows > 0 && n_anomalies >= 0 && n_anomalies <= rows,
          "satellite generator needs 0 <= anomalies <= rows");
  Rng rng(mix_seed(seed, 0x5a7e));

  SyntheticSatellites out;
  out.table.columns = {"name",          "class_of_orbit", "apogee_km",
                       "perigee_km",    "period_minutes", "launch_mass_kg",
                       "anticipated_lifetime", "country_of_operator"};

  std::vector<bool> planted(rows, false);
  while (static_cast<int>(out.anomalies.size()) < n_anomalies) {
    int64_t r = static_cast<int64_t>(rng.below(rows));
    if (planted[r]) continue;
    planted[r] = true;
    out.anomalies.push_back(r);
  }

  static const char* kCountry[] = {"USA",   "Russia", "China",
                                   "India", "Japan",  "Multinational"};
  for (int r = 0; r < rows; ++r) {
    double apogee, perigee, mass, lifetime;
    std::string orbit;
    double pick = rng.uniform();
    if (pick < 0.45) {
      orbit = "LEO";
      perigee = rng.uniform(350, 1400);
      apogee = perigee + rng.uniform(0, 450);
      mass = std::exp(rng.normal(6.0, 0.7));
      lifetime = 4.0 + rng.normal(0, 1.0);
    } else if (pick < 0.60) {
      orbit = "MEO";
      perigee = rng.uniform(18500, 22500);
      apogee = perigee + rng.uniform(0, 1500);
      mass = std::exp(rng.normal(6.8, 0.4));
      lifetime = 11.0 + rng.normal(0, 1.5);
    } else if (pick < 0.88) {
      orbit = "GEO";
      perigee = 35786 + rng.normal(0, 40);
      apogee = perigee + std::fabs(rng.normal(0, 45));
      mass = std::exp(rng.normal(7.9, 0.4));
      lifetime = 14.0 + rng.normal(0, 1.5);
    } else {
      orbit = "Elliptical";
      perigee = rng.uniform(500, 3000);
      apogee = rng.uniform(30000, 40000);
      mass = std::exp(rng.normal(6.4, 0.6));
      lifetime = 7.0 + rng.normal(0, 2.0);
    }
    double period = Kepler::law(apogee, perigee) + rng.normal(0, 1.0);
    if (planted[r]) {
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      double shift = 500.0 + rng.uniform(0, 400);
      period += sign * shift;
      if (period < 1.0) period = Kepler::law(apogee, perigee) + shift;
    }
    lifetime = std::max(0.5, lifetime);

    std::vector<std::optional<std::string>> row;
    row.emplace_back("sat-" + std::to_string(r));
    row.emplace_back(orbit);
    row.emplace_back(fixed2(apogee));
    row.emplace_back(fixed2(perigee));
    row.emplace_back(fixed2(period));
    row.emplace_back(rng.uniform() < 0.08
                         ? std::optional<std::string>()
                         : std::optional<std::string>(fixed2(mass)));
    row.emplace_back(rng.uniform() < 0.08
                         ? std::optional<std::string>()
                         : std::optional<std::string>(fixed2(lifetime)));
    row.emplace_back(rng.uniform() < 0.05
                         ? std::optional<std::string>()
                         : std::optional<std::string>(
                               kCountry[rng.below(6)]));
    out.table.rows.push_back(std::move(row));
  }
  return out;
}

inline void write_csv(const session::Table& t, std::ostream& out) {
  for (size_t c = 0; c < t.columns.size(); ++c)
    out << (c ? "," : "") << session::csv_quote(t.columns[c]);
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      out << (c ? "," : "");
      if (row[c]) out << session::csv_quote(*row[c]);
    }
    out << "\n";
  }
}

}  // namespace cgpm::satgen
