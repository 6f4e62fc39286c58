#include <catch2/catch_amalgamated.hpp>

#include "cgpm/dataset.hpp"
#include "cgpm/interface.hpp"
#include "cgpm/population.hpp"
#include "cgpm/primitives.hpp"
#include "cgpm/stat_type.hpp"

using namespace cgpm;

TEST_CASE("stat types know their supports") {
  CHECK(StatType::binary().admissible(0));
  CHECK(StatType::binary().admissible(1));
  CHECK_FALSE(StatType::binary().admissible(2));
  CHECK_FALSE(StatType::binary().admissible(0.5));

  StatType nom = StatType::nominal(3);
  CHECK(nom.admissible(2));
  CHECK_FALSE(nom.admissible(3));
  CHECK_FALSE(nom.admissible(1.5));
  CHECK_FALSE(nom.admissible(-1));

  StatType rate = StatType::count(4.0);  // support {0, 0.25, 0.5, ...}
  CHECK(rate.admissible(0.0));
  CHECK(rate.admissible(0.75));
  CHECK_FALSE(rate.admissible(0.3));
  CHECK_FALSE(rate.admissible(-0.25));

  StatType cyc = StatType::cyclic(24.0);
  CHECK(cyc.admissible(12.0));
  CHECK_FALSE(cyc.admissible(0.0));
  CHECK_FALSE(cyc.admissible(24.0));

  CHECK(StatType::magnitude().admissible(1e-9));
  CHECK_FALSE(StatType::magnitude().admissible(0.0));

  CHECK(StatType::numerical().admissible(-1e300));
  CHECK_FALSE(StatType::numerical().admissible(
      std::numeric_limits<double>::quiet_NaN()));

  StatType rng = StatType::ranged(-1, 1);
  CHECK(rng.admissible(0.0));
  CHECK_FALSE(rng.admissible(-1.0));
  CHECK_FALSE(rng.admissible(1.0));

  CHECK(StatType::nominal(4).discrete());
  CHECK_FALSE(StatType::cyclic(2).discrete());
}

TEST_CASE("population manages variables and symbol tables") {
  Population pop;
  int a = pop.add_variable("a", StatType::numerical());
  int b = pop.add_variable("b", StatType::nominal(2));
  CHECK(a == 0);
  CHECK(b == 1);
  CHECK(pop.id("b") == 1);
  CHECK_FALSE(pop.try_id("zzz").has_value());
  CHECK_THROWS(pop.id("zzz"));
  CHECK_THROWS(pop.add_variable("a", StatType::numerical()));

  CHECK(pop.intern_symbol(b, "yes") == 0);
  CHECK(pop.intern_symbol(b, "no") == 1);
  CHECK(pop.intern_symbol(b, "yes") == 0);
  CHECK_THROWS(pop.intern_symbol(b, "maybe"));  // cardinality 2
  CHECK(pop.label(b, 1) == "no");
  CHECK_THROWS(pop.symbol(b, "maybe"));
  CHECK_THROWS(pop.intern_symbol(a, "yes"));  // not nominal
}

TEST_CASE("stat type guessing") {
  std::vector<std::string> words = {"red", "blue", "red", "", "green"};
  CHECK(guess_stat_kind(words) == StatKind::nominal);

  std::vector<std::string> codes;
  for (int i = 0; i < 100; ++i) codes.push_back(std::to_string(i % 3));
  CHECK(guess_stat_kind(codes) == StatKind::nominal);

  std::vector<std::string> reals;
  for (int i = 0; i < 100; ++i) reals.push_back(std::to_string(i * 0.37));
  CHECK(guess_stat_kind(reals) == StatKind::numerical);

  // 21 distinct values: too many to be a coded category.
  std::vector<std::string> many;
  for (int i = 0; i < 210; ++i) many.push_back(std::to_string(i % 21));
  CHECK(guess_stat_kind(many) == StatKind::numerical);

  // 5 distinct out of 30 observed: ratio above 10 percent.
  std::vector<std::string> sparse;
  for (int i = 0; i < 30; ++i) sparse.push_back(std::to_string(i % 5));
  CHECK(guess_stat_kind(sparse) == StatKind::numerical);

  // Same 5 codes over 200 rows: plausible category coding.
  std::vector<std::string> dense;
  for (int i = 0; i < 200; ++i) dense.push_back(std::to_string(i % 5));
  CHECK(guess_stat_kind(dense) == StatKind::nominal);
}

TEST_CASE("dataset cell bookkeeping") {
  Dataset d;
  CHECK(d.fresh_member() == 0);
  d.observe(7, 0, 1.5);
  d.observe(7, 1, 2.5);
  d.observe(3, 0, 0.5);
  CHECK(d.cell_count() == 3);
  CHECK(d.fresh_member() == 8);
  CHECK(d.get(7, 1) == 2.5);
  CHECK_FALSE(d.get(7, 2).has_value());
  CHECK_THROWS(d.observe(7, 0, 9.0));  // already observed
  d.forget(7, 0);
  CHECK_FALSE(d.has(7, 0));
  CHECK_THROWS(d.forget(7, 0));
  d.forget(3, 0);
  CHECK(d.row(3) == nullptr);
}

namespace {

std::shared_ptr<Population> one_numerical() {
  auto pop = std::make_shared<Population>();
  pop->add_variable("x", StatType::numerical());
  return pop;
}

}  // namespace

TEST_CASE("interface contract on a primitive model") {
  auto pop = one_numerical();
  Primitive g(pop, 0);
  Rng rng(1);

  SECTION("query validation") {
    CHECK_THROWS(g.simulate(0, {}, {}, rng));
    CHECK_THROWS(g.simulate(0, {5}, {}, rng));
    CHECK_THROWS(g.simulate(0, {0, 0}, {}, rng));
    CHECK_THROWS(g.logpdf(0, {{0, 1.0}}, {{0, 2.0}}));  // overlap
    CHECK_THROWS(g.logpdf(0, {{0, 1.0}}, {{9, 2.0}}));  // unknown evidence
  }

  SECTION("values outside support") {
    CHECK_THROWS(g.incorporate(0, 0, std::nan("")));
    double lp = g.logpdf(0, {{0, std::numeric_limits<double>::infinity()}}, {});
    CHECK(lp == -kInf);
  }

  SECTION("incorporate round trip restores logpdf bits") {
    g.incorporate(0, 0, 1.25);
    g.incorporate(1, 0, -0.75);
    double before = g.logpdf(99, {{0, 0.5}}, {});
    g.incorporate(2, 0, 3.5);
    g.unincorporate(2, 0);
    double after = g.logpdf(99, {{0, 0.5}}, {});
    CHECK(before == after);
    CHECK_THROWS(g.unincorporate(2, 0));
    CHECK_THROWS(g.incorporate(0, 0, 4.0));  // duplicate cell
  }

  SECTION("incorporation order does not matter") {
    Primitive g1(pop, 0), g2(pop, 0);
    g1.incorporate(1, 0, 0.25);
    g1.incorporate(2, 0, 1.5);
    g1.incorporate(3, 0, -2.0);
    g2.incorporate(3, 0, -2.0);
    g2.incorporate(1, 0, 0.25);
    g2.incorporate(2, 0, 1.5);
    CHECK(g1.logpdf(9, {{0, 0.3}}, {}) == g2.logpdf(9, {{0, 0.3}}, {}));
  }

  SECTION("a member's own cell is not conditioned on when queried") {
    g.incorporate(0, 0, 5.0);
    g.incorporate(1, 0, 6.0);
    Primitive h(pop, 0);
    h.incorporate(1, 0, 6.0);
    CHECK(g.logpdf(0, {{0, 1.0}}, {}) == h.logpdf(42, {{0, 1.0}}, {}));
    CHECK(g.logpdf(0, {{0, 1.0}}, {}) != g.logpdf(42, {{0, 1.0}}, {}));
  }

  SECTION("simulate stays in support") {
    auto pop2 = std::make_shared<Population>();
    pop2->add_variable("m", StatType::magnitude());
    Primitive gm(pop2, 0, Family::exponential);
    gm.incorporate(0, 0, 0.01);
    gm.incorporate(1, 0, 2.0);
    for (int i = 0; i < 200; ++i) {
      RowValues out = gm.simulate(5, {0}, {}, rng);
      CHECK(out.at(0) > 0);
    }
  }
}

TEST_CASE("infer plans select targets") {
  InferProgram p;
  std::vector<int> outs = {2, 5, 9};
  CHECK(p.targets(outs) == outs);
  p.variables = {5};
  CHECK(p.targets(outs) == std::vector<int>{5});
  p.skip = true;
  CHECK(p.targets(outs) == std::vector<int>{2, 9});
  p.variables.clear();
  CHECK(p.targets(outs) == outs);
}
