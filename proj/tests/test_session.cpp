// Copyright 2026
// See LICENSE.txt

#include <cmath>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "cgpm/kepler.hpp"
#include "cgpm/session.hpp"

namespace {

using namespace cgpm;

std::string write_file(const std::string& name, const std::string& text) {
  std::string path = "/tmp/" + name;
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

session::TextTable run(session::Session& s, const std::string& text) {
  lang::Program p = lang::parse(text);
  INFO(text);
  REQUIRE(p.diagnostics.empty());
  REQUIRE(p.statements.size() == 1);
  return s.execute(p.statements[0]);
}

void run_script(session::Session& s, const std::string& text) {
  lang::Program p = lang::parse(text);
  INFO(text);
  REQUIRE(p.diagnostics.empty());
  for (const lang::Statement& stmt : p.statements) s.execute(stmt);
}

std::string demo_csv() {
  std::ostringstream os;
  os << "id,x,y,color,note\n";
  for (int i = 0; i < 24; ++i) {
    os << "s" << i << ",";
    if (i == 5)
      os << ",";
    else
      os << 0.25 * i << ",";
    if (i == 9)
      os << "NaN,";
    else
      os << 0.5 * i + ((i * 7) % 5 - 2) * 0.3 << ",";
    os << (i % 3 == 0 ? "red" : i % 3 == 1 ? "green" : "blue") << ",";
    os << (i == 2 ? "\"needs, quoting\"" : "plain") << "\n";
  }
  return os.str();
}

const std::string kDemoSchema =
    "CREATE POPULATION pop FOR demo WITH SCHEMA ("
    "  IGNORE id, note;"
    "  MODEL x, y AS NUMERICAL;"
    "  MODEL color AS NOMINAL"
    ");";

std::string satellites_csv() {
  std::ostringstream os;
  os << "name,apogee_km,perigee_km,period_minutes,mass_kg,orbit\n";
  for (int i = 0; i < 16; ++i) {
    double apogee = 500 + 30.0 * i, perigee = 480 + 25.0 * i;
    double period = Kepler::law(apogee, perigee) + ((i % 5) - 2) * 0.4;
    double mass = 900 + 12.0 * apogee / 100 + (i % 4) * 5.0;
    os << "sat" << i << "," << apogee << "," << perigee << "," << period
       << "," << mass << ",LEO\n";
  }
  for (int i = 0; i < 6; ++i) {
    double apogee = 35780 + 4.0 * i, perigee = 35770 + 3.0 * i;
    double period = Kepler::law(apogee, perigee) + ((i % 3) - 1) * 0.5;
    double mass = 3200 + 20.0 * i;
    os << "geo" << i << "," << apogee << "," << perigee << "," << period
       << "," << mass << ",GEO\n";
  }
  return os.str();
}

session::Session demo_session(uint64_t seed, int workers = 1,
                              int analyze_iters = 12) {
  session::Session s(seed, workers);
  std::string path = write_file("cgpm_demo.csv", demo_csv());
  run(s, "CREATE TABLE demo FROM '" + path + "';");
  run(s, ".nullify demo 'NaN'\n");
  run(s, kDemoSchema);
  run(s, "CREATE METAMODEL mm FOR pop WITH BASELINE crosscat;");
  run(s, "INITIALIZE 4 MODELS FOR mm;");
  run(s, "ANALYZE mm FOR " + std::to_string(analyze_iters) +
             " ITERATIONS WAIT;");
  return s;
}

double cell_number(const session::TextTable& t, size_t r, size_t c) {
  REQUIRE(r < t.rows.size());
  REQUIRE(c < t.rows[r].size());
  return std::stod(t.rows[r][c]);
}

}  // namespace

TEST_CASE("csv ingestion handles quoting and missing cells") {
  std::string text =
      "a,b,c\r\n"
      "1,\"two, with comma\",3\n"
      "4,,\"line\nbreak\"\n"
      "\"doubled \"\" quote\",5,6\n";
  session::Table t = session::parse_csv(text, "mem");
  REQUIRE(t.columns == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 3);
  CHECK(*t.rows[0][1] == "two, with comma");
  CHECK(!t.rows[1][1].has_value());
  CHECK(*t.rows[1][2] == "line\nbreak");
  CHECK(*t.rows[2][0] == "doubled \" quote");

  session::Table last = session::parse_csv("a,b\n1,2", "mem");
  REQUIRE(last.rows.size() == 1);
  CHECK(*last.rows[0][1] == "2");
}

TEST_CASE("csv ingestion reports structural problems") {
  CHECK_THROWS_WITH(session::parse_csv("a,b\n1,2,3\n", "f.csv"),
                    Catch::Matchers::ContainsSubstring("row 0") &&
                        Catch::Matchers::ContainsSubstring("3 fields"));
  CHECK_THROWS_WITH(session::parse_csv("a,b\n\"open,2\n", "f.csv"),
                    Catch::Matchers::ContainsSubstring("unterminated"));
  CHECK_THROWS_WITH(session::parse_csv("", "f.csv"),
                    Catch::Matchers::ContainsSubstring("header"));
  CHECK_THROWS_WITH(session::ingest_csv("/nonexistent/nope.csv"),
                    Catch::Matchers::ContainsSubstring("cannot read"));
}

TEST_CASE("populations validate cells against declared types") {
  session::Session s(1);
  std::string path = write_file(
      "cgpm_bad.csv",
      "u,v,w\n1,apple,red\n-2,banana,blue\nthree,apple,red\n4,banana,green\n");
  run(s, "CREATE TABLE bad FROM '" + path + "';");

  CHECK_THROWS_WITH(
      run(s, "CREATE POPULATION p1 FOR bad WITH SCHEMA (MODEL u AS "
             "NUMERICAL; IGNORE v, w);"),
      Catch::Matchers::ContainsSubstring("row 2") &&
          Catch::Matchers::ContainsSubstring("'u'") &&
          Catch::Matchers::ContainsSubstring("not numeric"));

  CHECK_THROWS_WITH(
      run(s, "CREATE POPULATION p2 FOR bad WITH SCHEMA (IGNORE u; MODEL v AS "
             "NOMINAL(1); IGNORE w);"),
      Catch::Matchers::ContainsSubstring("2 distinct values"));

  CHECK_THROWS_WITH(
      run(s, "CREATE POPULATION p3 FOR bad WITH SCHEMA (MODEL u AS "
             "MAGNITUDE; IGNORE v, w);"),
      Catch::Matchers::ContainsSubstring("outside the support"));

  run(s, "CREATE POPULATION ok FOR bad WITH SCHEMA (GUESS STATTYPES FOR (*));");
  const Population& pop = *s.catalog().populations.at("ok");
  CHECK(pop.var(pop.id("v")).type.kind == StatKind::nominal);
  CHECK(pop.var(pop.id("v")).type.cardinality == 2);
  CHECK(pop.var(pop.id("w")).type.kind == StatKind::nominal);
}

TEST_CASE("bind diagnostics surface as errors with positions") {
  session::Session s(1);
  CHECK_THROWS_WITH(run(s, "SIMULATE x FROM nowhere LIMIT 3;"),
                    Catch::Matchers::ContainsSubstring("1:1:") &&
                        Catch::Matchers::ContainsSubstring("nowhere"));
}

TEST_CASE("a modeling session answers queries end to end") {
  session::Session s = demo_session(42);

  SECTION("nullify blanked the sentinel") {
    const session::Table* t = s.table("demo");
    REQUIRE(t != nullptr);
    CHECK(!t->rows[9][2].has_value());
    CHECK(!t->rows[5][1].has_value());
  }

  SECTION("simulate renders symbols and honors limit") {
    session::TextTable out =
        run(s, "SIMULATE color, x FROM mm LIMIT 5;");
    REQUIRE(out.columns == std::vector<std::string>{"color", "x"});
    REQUIRE(out.rows.size() == 5);
    std::string seen;
    for (const auto& row : out.rows) {
      seen += row[0] + " " + row[1] + "\n";
      bool named = row[0] == "red" || row[0] == "green" || row[0] == "blue";
      CHECK(named);
      CHECK(std::isfinite(std::stod(row[1])));
    }
    INFO(seen);
    CHECK(seen.size() > 0);
  }

  SECTION("simulate conditions on givens and rowids") {
    session::TextTable out = run(
        s, "SIMULATE y FROM mm GIVEN x = 3.0 WHERE rowid = 12 LIMIT 40;");
    REQUIRE(out.rows.size() == 40);
    double mean = 0;
    for (size_t r = 0; r < out.rows.size(); ++r)
      mean += cell_number(out, r, 0) / out.rows.size();
    CHECK(mean > 2.0);
    CHECK(mean < 10.0);
  }

  SECTION("probability estimates are positive densities") {
    session::TextTable out = run(
        s, "ESTIMATE PROBABILITY OF y = 5.5 GIVEN x = 2.75 FROM mm;");
    REQUIRE(out.columns == std::vector<std::string>{"probability"});
    double p = cell_number(out, 0, 0);
    CHECK(p > 0.0);
    CHECK(std::isfinite(p));
  }

  SECTION("dependence and mutual information smell right") {
    double dep = cell_number(
        run(s, "ESTIMATE DEPENDENCE PROBABILITY OF x WITH y FROM mm;"), 0, 0);
    CHECK(dep >= 0.0);
    CHECK(dep <= 1.0);
    double mi = cell_number(
        run(s, "ESTIMATE MUTUAL INFORMATION OF x WITH y USING 200 SAMPLES "
               "FROM mm;"),
        0, 0);
    CHECK(std::isfinite(mi));
  }

  SECTION("predictive probability covers stored cells") {
    session::TextTable all =
        run(s, "ESTIMATE PREDICTIVE PROBABILITY OF y FROM mm;");
    REQUIRE(all.columns ==
            std::vector<std::string>{"rowid", "predictive_probability"});
    REQUIRE(all.rows.size() == 23);  // row 9's y was nullified
    for (size_t r = 0; r < all.rows.size(); ++r) {
      CHECK(all.rows[r][0] != "9");
      CHECK(std::isfinite(cell_number(all, r, 1)));
    }
    session::TextTable one = run(
        s, "ESTIMATE PREDICTIVE PROBABILITY OF y FROM mm WHERE rowid = 3;");
    REQUIRE(one.rows.size() == 1);
    CHECK(one.rows[0][0] == "3");
  }

  SECTION("infer fills cells and reports confidence") {
    session::TextTable out = run(
        s, "INFER EXPLICIT PREDICT y USING 40 SAMPLES CONFIDENCE y_conf "
           "FROM mm WHERE rowid = 9;");
    REQUIRE(out.columns ==
            std::vector<std::string>{"rowid", "y", "y_conf"});
    REQUIRE(out.rows.size() == 1);
    CHECK(out.rows[0][0] == "9");
    CHECK(std::isfinite(cell_number(out, 0, 1)));
    double conf = cell_number(out, 0, 2);
    CHECK(conf >= 0.0);
    CHECK(conf <= 1.0);
  }

  SECTION("create table as materializes inferred values") {
    run(s, "CREATE TABLE filled AS INFER EXPLICIT PREDICT y CONFIDENCE c "
           "FROM mm;");
    const session::Table* t = s.table("filled");
    REQUIRE(t != nullptr);
    CHECK(t->columns == std::vector<std::string>{"rowid", "y", "c"});
    CHECK(t->rows.size() == 24);
    CHECK(s.catalog().tables.count("filled") == 1);
  }
}

TEST_CASE("overrides assemble hybrid models") {
  session::Session s(7);
  std::string path = write_file("cgpm_sats.csv", satellites_csv());
  run_script(s, "CREATE TABLE sat_t FROM '" + path +
                    "';"
                    "CREATE POPULATION sats FOR sat_t WITH SCHEMA ("
                    "  IGNORE name;"
                    "  MODEL apogee_km, perigee_km, period_minutes AS "
                    "NUMERICAL;"
                    "  MODEL mass_kg AS NUMERICAL;"
                    "  MODEL orbit AS NOMINAL(2)"
                    ");");

  SECTION("kepler, regression, and forest nodes cooperate") {
    run(s,
        "CREATE METAMODEL sm FOR sats WITH BASELINE crosscat("
        "  OVERRIDE GENERATIVE MODEL FOR period_minutes"
        "    GIVEN apogee_km, perigee_km"
        "    AND EXPOSE kepler_cluster COUNT, kepler_noise NUMERICAL"
        "  USING kepler(alpha=0.5);"
        "  OVERRIDE MODEL FOR mass_kg GIVEN apogee_km"
        "  USING linear_regression(prior_scale=50);"
        "  OVERRIDE MODEL FOR orbit GIVEN apogee_km, perigee_km"
        "  USING random_forest(k=2, trees=16, depth=5)"
        ");");
    run(s, "INITIALIZE 2 MODELS FOR sm;");
    run(s, "ANALYZE sm FOR 3 ITERATIONS WAIT;");

    session::TextTable clusters =
        run(s, "SIMULATE kepler_cluster, kepler_noise FROM sm LIMIT 4;");
    REQUIRE(clusters.rows.size() == 4);
    for (size_t r = 0; r < clusters.rows.size(); ++r) {
      double c = cell_number(clusters, r, 0);
      CHECK(c >= 0.0);
      CHECK(c == std::floor(c));
    }

    session::TextTable orbit = run(
        s, "INFER EXPLICIT PREDICT orbit USING 20 SAMPLES FROM sm "
           "WHERE rowid = 2;");
    REQUIRE(orbit.columns == std::vector<std::string>{"rowid", "orbit"});
    bool named = orbit.rows[0][1] == "LEO" || orbit.rows[0][1] == "GEO";
    CHECK(named);

    double lp = cell_number(
        run(s, "ESTIMATE PREDICTIVE PROBABILITY OF period_minutes FROM sm "
               "WHERE rowid = 0;"),
        0, 1);
    CHECK(std::isfinite(lp));
  }

  SECTION("factor analysis exposes scores; other baselines work") {
    run(s,
        "CREATE METAMODEL fm FOR sats WITH BASELINE crosscat("
        "  OVERRIDE MODEL FOR apogee_km, perigee_km"
        "    AND EXPOSE span_score NUMERICAL"
        "  USING factor_analysis(L=1)"
        ");");
    run(s, "INITIALIZE 2 MODELS FOR fm;");
    run(s, "ANALYZE fm FOR 2 ITERATIONS WAIT;");
    session::TextTable score =
        run(s, "SIMULATE span_score FROM fm LIMIT 3;");
    REQUIRE(score.rows.size() == 3);
    for (size_t r = 0; r < score.rows.size(); ++r)
      CHECK(std::isfinite(cell_number(score, r, 0)));

    run(s, "CREATE METAMODEL km FOR sats WITH BASELINE multivariate_kde;");
    run(s, "INITIALIZE 2 MODELS FOR km;");
    run(s, "ANALYZE km FOR 1 ITERATION WAIT;");
    CHECK(run(s, "SIMULATE mass_kg FROM km LIMIT 2;").rows.size() == 2);

    run(s, "CREATE METAMODEL nm FOR sats WITH BASELINE generative_knn(k=3);");
    run(s, "INITIALIZE 2 MODELS FOR nm;");
    run(s, "ANALYZE nm FOR 1 ITERATION WAIT;");
    CHECK(run(s, "SIMULATE orbit FROM nm LIMIT 2;").rows.size() == 2);
  }

  SECTION("override shape problems are rejected") {
    CHECK_THROWS_WITH(
        run(s,
            "CREATE METAMODEL bad1 FOR sats WITH BASELINE crosscat("
            "  OVERRIDE GENERATIVE MODEL FOR period_minutes"
            "    GIVEN apogee_km"
            "    AND EXPOSE kc COUNT, kn NUMERICAL"
            "  USING kepler"
            ");"),
        Catch::Matchers::ContainsSubstring("two inputs"));
    CHECK_THROWS_WITH(
        run(s,
            "CREATE METAMODEL bad2 FOR sats WITH BASELINE crosscat("
            "  OVERRIDE MODEL FOR orbit GIVEN apogee_km"
            "  USING random_forest(k=5)"
            ");"),
        Catch::Matchers::ContainsSubstring("category count"));
    CHECK_THROWS_WITH(
        run(s,
            "CREATE METAMODEL bad3 FOR sats WITH BASELINE crosscat("
            "  OVERRIDE MODEL FOR mass_kg GIVEN apogee_km"
            "  USING linear_regression(bandwidth=2)"
            ");"),
        Catch::Matchers::ContainsSubstring("unknown parameter 'bandwidth'"));
  }
}

TEST_CASE("identical scripts and seeds give byte-identical output") {
  auto transcript = [](int workers) {
    session::Session s = demo_session(99, workers);
    std::string log;
    log += session::format_csv(run(s, "SIMULATE x, y, color FROM mm LIMIT 6;"));
    log += session::format_csv(
        run(s, "ESTIMATE PROBABILITY OF y = 4.0 GIVEN x = 2.0 FROM mm;"));
    log += session::format_csv(
        run(s, "INFER EXPLICIT PREDICT y CONFIDENCE c FROM mm WHERE "
               "rowid = 9;"));
    log += session::format_csv(
        run(s, "ESTIMATE MUTUAL INFORMATION OF x WITH y USING 50 SAMPLES "
               "FROM mm;"));
    return log;
  };
  std::string once = transcript(1);
  CHECK(once == transcript(1));
  CHECK(once == transcript(3));
  CHECK(once == transcript(8));

  session::Session other = demo_session(100);
  std::string different = session::format_csv(
      run(other, "SIMULATE x, y, color FROM mm LIMIT 6;"));
  CHECK(once.substr(0, different.size()) != different);
}

TEST_CASE("state files round-trip exactly") {
  session::Session s1 = demo_session(7);
  run(s1, "SIMULATE x FROM mm LIMIT 2;");  // advance the query cursor

  std::ostringstream blob;
  s1.save(blob);
  std::string bytes = blob.str();
  CHECK(bytes.rfind("cgpm-state 1\n", 0) == 0);

  std::istringstream in(bytes);
  session::Session s2 = session::Session::load(in);

  std::ostringstream again;
  s2.save(again);
  CHECK(again.str() == bytes);

  for (const std::string& q :
       {std::string("SIMULATE x, y, color FROM mm LIMIT 5;"),
        std::string("ESTIMATE PREDICTIVE PROBABILITY OF y FROM mm WHERE "
                    "rowid = 4;"),
        std::string("ESTIMATE PROBABILITY OF y = 1.0 FROM mm;")}) {
    session::TextTable a = run(s1, q);
    session::TextTable b = run(s2, q);
    INFO(q);
    CHECK(session::format_csv(a) == session::format_csv(b));
  }
}

TEST_CASE("state files reject other versions and corruption") {
  session::Session s = demo_session(3, 1, 2);
  std::ostringstream blob;
  s.save(blob);
  std::string bytes = blob.str();

  std::string bumped = bytes;
  bumped.replace(bumped.find("cgpm-state 1"), 12, "cgpm-state 2");
  std::istringstream inb(bumped);
  CHECK_THROWS_WITH(session::Session::load(inb),
                    Catch::Matchers::ContainsSubstring("version"));

  std::istringstream inc(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH(session::Session::load(inc),
                    Catch::Matchers::ContainsSubstring("corrupt"));

  std::istringstream garbage("not a state file\n");
  CHECK_THROWS(session::Session::load(garbage));
}

TEST_CASE("state round-trips survive further analysis") {
  session::Session s1 = demo_session(11, 1, 6);
  std::ostringstream blob;
  s1.save(blob);
  std::istringstream in(blob.str());
  session::Session s2 = session::Session::load(in);

  const std::string more = "ANALYZE mm FOR 4 ITERATIONS WAIT;";
  run(s1, more);
  run(s2, more);
  const std::string q = "SIMULATE x, y FROM mm LIMIT 5;";
  CHECK(session::format_csv(run(s1, q)) == session::format_csv(run(s2, q)));
}

TEST_CASE("nullify after modeling replays against the original grid") {
  auto build = []() {
    session::Session s(5);
    std::string path = write_file(
        "cgpm_sentinel.csv", "x,y\n1,2\n2,4\n3,9999\n4,8\n5,10\n6,12\n");
    run(s, "CREATE TABLE t FROM '" + path + "';");
    run(s, "CREATE POPULATION p FOR t WITH SCHEMA (MODEL x, y AS "
           "NUMERICAL);");
    run(s, "CREATE METAMODEL m FOR p WITH BASELINE crosscat;");
    run(s, "INITIALIZE 2 MODELS FOR m;");
    run(s, "ANALYZE m FOR 3 ITERATIONS WAIT;");
    run(s, ".nullify t '9999'\n");
    return s;
  };
  session::Session s1 = build();
  CHECK(!s1.table("t")->rows[2][1].has_value());

  std::ostringstream blob;
  s1.save(blob);
  std::istringstream in(blob.str());
  session::Session s2 = session::Session::load(in);

  CHECK(!s2.table("t")->rows[2][1].has_value());
  const std::string q = "ESTIMATE PROBABILITY OF y = 9999.0 GIVEN x = 3.0 "
                        "FROM m;";
  CHECK(session::format_csv(run(s1, q)) == session::format_csv(run(s2, q)));
}

TEST_CASE("time budgets journal their realized sweep count") {
  session::Session s(2);
  std::string path =
      write_file("cgpm_tiny.csv", "x,y\n1,2\n2,4\n3,6\n4,8\n");
  run(s, "CREATE TABLE t FROM '" + path + "';");
  run(s, "CREATE POPULATION p FOR t WITH SCHEMA (MODEL x, y AS NUMERICAL);");
  run(s, "CREATE METAMODEL m FOR p WITH BASELINE crosscat;");
  run(s, "INITIALIZE 2 MODELS FOR m;");
  run(s, "ANALYZE m FOR 1 SECOND WAIT;");

  std::ostringstream blob;
  s.save(blob);
  std::string bytes = blob.str();
  CHECK(bytes.find("SECONDS") == std::string::npos);
  CHECK(bytes.find("ITERATIONS") != std::string::npos);

  std::istringstream in(bytes);
  session::Session s2 = session::Session::load(in);
  const std::string q = "SIMULATE y FROM m LIMIT 3;";
  CHECK(session::format_csv(run(s, q)) == session::format_csv(run(s2, q)));
}

TEST_CASE("query results render as table, csv, and json") {
  session::TextTable t;
  t.columns = {"name", "value"};
  t.rows = {{"alpha", "1.5"}, {"beta, again", "-2"}};

  std::string table = session::format_table(t);
  CHECK(table.find("name") != std::string::npos);
  CHECK(table.find("| value") != std::string::npos);
  CHECK(table.find("alpha") != std::string::npos);

  std::string csv = session::format_csv(t);
  CHECK(csv == "name,value\nalpha,1.5\n\"beta, again\",-2\n");

  std::string json = session::format_json(t);
  CHECK(json.find("\"name\": \"alpha\"") != std::string::npos);
  CHECK(json.find("\"value\": 1.5") != std::string::npos);
  CHECK(json.find("\"beta, again\"") != std::string::npos);
}
