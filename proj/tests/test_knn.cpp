#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "cgpm/gen_knn.hpp"
#include "support/datasets.hpp"
#include "support/oracles.hpp"

using namespace cgpm;

namespace {

std::shared_ptr<Population> make_pop(
    const std::vector<std::pair<std::string, StatType>>& vars) {
  auto pop = std::make_shared<Population>();
  for (const auto& [name, t] : vars) pop->add_variable(name, t);
  return pop;
}

GenKnn xcross_model(const datasets::Xyz& d, int k) {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"y", StatType::numerical()},
                       {"z", StatType::nominal(2)}});
  GenKnn knn(pop, {0, 1, 2}, k);
  for (size_t i = 0; i < d.x.size(); ++i) {
    knn.incorporate(static_cast<MemberId>(i), 0, d.x[i]);
    knn.incorporate(static_cast<MemberId>(i), 1, d.y[i]);
    knn.incorporate(static_cast<MemberId>(i), 2, d.z[i]);
  }
  return knn;
}

}  // namespace

TEST_CASE("neighborhood selection matches an exhaustive sort") {
  auto pop = make_pop({{"a", StatType::numerical()},
                       {"b", StatType::nominal(3)},
                       {"c", StatType::cyclic(24.0)}});
  GenKnn knn(pop, {0, 1, 2}, 4);
  Rng rng(7);
  std::vector<std::map<int, double>> rows;
  for (MemberId r = 0; r < 30; ++r) {
    std::map<int, double> row = {{0, rng.normal(0, 5)},
                                 {1, static_cast<double>(r % 3)},
                                 {2, rng.uniform() * 23.9 + 0.05}};
    rows.push_back(row);
    for (const auto& [v, x] : row) knn.incorporate(r, v, x);
  }
  RowValues ev = {{0, 1.0}, {1, 2.0}, {2, 23.5}};

  // Independent recheck: ranges, per-kind distances, stable sort by id.
  double lo = kInf, hi = -kInf;
  for (const auto& row : rows) {
    lo = std::min(lo, row.at(0));
    hi = std::max(hi, row.at(0));
  }
  std::vector<std::pair<double, MemberId>> order;
  for (MemberId r = 0; r < 30; ++r) {
    double da = std::abs(rows[r].at(0) - 1.0) / (hi - lo);
    double db = rows[r].at(1) == 2.0 ? 0.0 : 1.0;
    double gap = std::fmod(std::abs(rows[r].at(2) - 23.5), 24.0);
    double dc = std::min(gap, 24.0 - gap) / 12.0;
    order.emplace_back((da + db + dc) / 3, r);
  }
  std::sort(order.begin(), order.end());
  std::vector<MemberId> want;
  for (int i = 0; i < 4; ++i) want.push_back(order[i].second);
  CHECK(knn.neighborhood(-1, ev) == want);
}

TEST_CASE("ties resolve toward smaller member ids") {
  auto pop = make_pop({{"a", StatType::numerical()},
                       {"q", StatType::numerical()}});
  GenKnn knn(pop, {0, 1}, 2);
  for (MemberId r = 0; r < 4; ++r) {
    knn.incorporate(r, 0, r < 2 ? 1.0 : 3.0);  // two pairs, equidistant
    knn.incorporate(r, 1, static_cast<double>(r));
  }
  auto hood = knn.neighborhood(-1, {{0, 2.0}});
  CHECK(hood == std::vector<MemberId>({0, 1}));
}

TEST_CASE("neighborhood of everything matches the global model") {
  auto pop = make_pop({{"e", StatType::numerical()},
                       {"q", StatType::nominal(3)}});
  GenKnn knn(pop, {0, 1}, 12);
  Rng rng(11);
  for (MemberId r = 0; r < 12; ++r) {
    knn.incorporate(r, 0, rng.normal(0, 1));
    knn.incorporate(r, 1, static_cast<double>(r % 3));
  }
  // K equals the dataset size, so any evidence gives the full dataset; the
  // local pmf equals the global label frequencies.
  double lp = knn.logpdf(-1, {{1, 0.0}}, {{0, 0.0}});
  CHECK(std::abs(std::exp(lp) - 4.0 / 12) < 1e-12);
  // Empty evidence uses the whole dataset outright.
  double lp2 = knn.logpdf(-1, {{1, 0.0}}, {});
  CHECK(lp == lp2);
}

TEST_CASE("evidence at a training row pins the neighborhood at K=1") {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"y", StatType::numerical()}});
  GenKnn knn(pop, {0, 1}, 1);
  for (MemberId r = 0; r < 10; ++r) {
    knn.incorporate(r, 0, static_cast<double>(r));
    knn.incorporate(r, 1, 100.0 + r);
  }
  auto hood = knn.neighborhood(-1, {{0, 4.0}});
  REQUIRE(hood.size() == 1);
  CHECK(hood[0] == 4);
  // Constant (single-value) neighborhood concentrates tightly.
  Rng rng(13);
  for (int i = 0; i < 50; ++i)
    CHECK(std::abs(knn.simulate(-1, {1}, {{0, 4.0}}, rng).at(1) - 104.0) <
          1e-5);
}

TEST_CASE("queries factor into independent local primitives") {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"a", StatType::numerical()},
                       {"b", StatType::nominal(2)}});
  GenKnn knn(pop, {0, 1, 2}, 5);
  Rng rng(17);
  for (MemberId r = 0; r < 40; ++r) {
    knn.incorporate(r, 0, rng.normal(0, 1));
    knn.incorporate(r, 1, rng.normal(5, 2));
    knn.incorporate(r, 2, static_cast<double>(r % 2));
  }
  RowValues ev = {{0, 0.3}};
  double joint = knn.logpdf(-1, {{1, 4.0}, {2, 1.0}}, ev);
  double parts =
      knn.logpdf(-1, {{1, 4.0}}, ev) + knn.logpdf(-1, {{2, 1.0}}, ev);
  CHECK(joint == parts);

  // Identical inputs give identical outputs (no hidden state).
  CHECK(knn.logpdf(-1, {{1, 4.0}}, ev) == knn.logpdf(-1, {{1, 4.0}}, ev));
}

TEST_CASE("draws agree with the local densities") {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"c", StatType::nominal(3)}});
  GenKnn knn(pop, {0, 1}, 8);
  Rng rng(19);
  for (MemberId r = 0; r < 60; ++r) {
    knn.incorporate(r, 0, rng.normal(r % 3, 0.3));
    knn.incorporate(r, 1, static_cast<double>(r % 3));
  }
  RowValues ev = {{0, 1.0}};
  std::vector<double> pmf(3);
  for (int s = 0; s < 3; ++s) {
    double lp = knn.logpdf(-1, {{1, static_cast<double>(s)}}, ev);
    pmf[s] = std::exp(lp);
  }
  std::vector<double> freq(3, 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i)
    freq[static_cast<int>(knn.simulate(-1, {1}, ev, rng).at(1))] += 1.0 / n;
  double tv = 0;
  for (int s = 0; s < 3; ++s) tv += std::abs(pmf[s] - freq[s]);
  CHECK(tv / 2 < 0.02);
}

TEST_CASE("x-cross neighborhoods behave like the figure") {
  double k2_avg = 0, k10_avg = 0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    auto d = datasets::xcross(250, 100 + s);
    {
      GenKnn knn = xcross_model(d, 2);
      k2_avg +=
          std::exp(knn.logpdf(-1, {{2, 0.0}}, {{0, 0.5}, {1, 0.5}})) / seeds;
    }
    {
      GenKnn knn = xcross_model(d, 10);
      k10_avg +=
          std::exp(knn.logpdf(-1, {{2, 0.0}}, {{0, 0.5}, {1, 0.5}})) / seeds;
    }
  }
  CHECK(k2_avg >= 0.9);
  CHECK(k10_avg < k2_avg);
  CHECK(k10_avg > 0.5);
}

TEST_CASE("error cases are reported") {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"y", StatType::numerical()}});
  GenKnn knn(pop, {0, 1}, 5);
  knn.incorporate(0, 0, 1.0);
  knn.incorporate(1, 0, 2.0);
  // Only two rows carry x but K=5.
  CHECK_THROWS(knn.logpdf(-1, {{1, 0.0}}, {{0, 1.0}}));
  CHECK_THROWS(GenKnn(pop, {0, 1}, 0));
}

TEST_CASE("queried members are excluded from their own neighborhood") {
  auto pop = make_pop({{"x", StatType::numerical()},
                       {"y", StatType::numerical()}});
  GenKnn knn(pop, {0, 1}, 1);
  for (MemberId r = 0; r < 5; ++r) {
    knn.incorporate(r, 0, static_cast<double>(r));
    knn.incorporate(r, 1, static_cast<double>(10 * r));
  }
  // Member 2's own row would be distance zero; the neighborhood must pick
  // a different row.
  auto hood = knn.neighborhood(2, {{0, 2.0}});
  REQUIRE(hood.size() == 1);
  CHECK(hood[0] != 2);
}
