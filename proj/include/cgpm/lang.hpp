// Copyright 2026
// See LICENSE.txt

// Tokenizer, recursive-descent parser, statement ASTs, and pretty-printer
// for the modeling and query language accepted by the command-line tool.

#pragma once

#include <cctype>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace cgpm::lang {

struct Diagnostic {
  int line = 1;
  int column = 1;
  std::string message;

  std::string format() const {
    std::ostringstream os;
    os << line << ":" << column << ": " << message;
    return os.str();
  }
};

enum class TokenKind { keyword, identifier, number, string, symbol, end };

struct Token {
  TokenKind kind = TokenKind::end;
  std::string lexeme;
  int line = 1;
  int column = 1;
};

inline const std::set<std::string>& keywords() {
  static const std::set<std::string> kw = {
      "CREATE",     "TABLE",      "FROM",        "AS",         "POPULATION",
      "FOR",        "WITH",       "SCHEMA",      "MODEL",      "IGNORE",
      "GUESS",      "STATTYPES",  "METAMODEL",   "BASELINE",   "OVERRIDE",
      "GENERATIVE", "GIVEN",      "AND",         "EXPOSE",     "USING",
      "SET",        "CATEGORY",   "TO",          "INITIALIZE", "MODELS",
      "ANALYZE",    "ITERATION",  "ITERATIONS",  "SECOND",     "SECONDS",
      "WAIT",       "VARIABLES",  "SKIP",        "SIMULATE",   "ESTIMATE",
      "PROBABILITY", "OF",        "DEPENDENCE",  "MUTUAL",     "INFORMATION",
      "PREDICTIVE", "INFER",      "EXPLICIT",    "PREDICT",    "CONFIDENCE",
      "SAMPLES",    "WHERE",      "LIMIT",       "ROWID",      "BY",
      "ORDER",      "COLUMNS",    "NULLIFY",
  };
  return kw;
}

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct TokenStream {
  std::vector<Token> tokens;
  std::vector<Diagnostic> diagnostics;
};

inline TokenStream tokenize(const std::string& src) {
  TokenStream out;
  int line = 1, column = 1;
  size_t i = 0;
  auto advance = [&](size_t n) {
    for (size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '-') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    int tl = line, tc = column;
    if (c == '\'') {
      std::string text;
      advance(1);
      bool closed = false;
      while (i < src.size()) {
        if (src[i] == '\'') {
          if (i + 1 < src.size() && src[i + 1] == '\'') {
            text += '\'';
            advance(2);
            continue;
          }
          advance(1);
          closed = true;
          break;
        }
        text += src[i];
        advance(1);
      }
      if (!closed) {
        out.diagnostics.push_back({tl, tc, "unterminated string literal"});
        break;
      }
      out.tokens.push_back({TokenKind::string, text, tl, tc});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < src.size() &&
         std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::string text;
      bool seen_dot = false, seen_exp = false;
      while (i < src.size()) {
        char d = src[i];
        if (std::isdigit(static_cast<unsigned char>(d))) {
          text += d;
          advance(1);
        } else if (d == '.' && !seen_dot && !seen_exp) {
          seen_dot = true;
          text += d;
          advance(1);
        } else if ((d == 'e' || d == 'E') && !seen_exp && !text.empty() &&
                   std::isdigit(static_cast<unsigned char>(text.back()))) {
          seen_exp = true;
          text += d;
          advance(1);
          if (i < src.size() && (src[i] == '+' || src[i] == '-')) {
            text += src[i];
            advance(1);
          }
        } else {
          break;
        }
      }
      out.tokens.push_back({TokenKind::number, text, tl, tc});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string text;
      while (i < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[i])) ||
              src[i] == '_')) {
        text += src[i];
        advance(1);
      }
      std::string up = upper(text);
      if (keywords().count(up))
        out.tokens.push_back({TokenKind::keyword, up, tl, tc});
      else
        out.tokens.push_back({TokenKind::identifier, text, tl, tc});
      continue;
    }
    std::string sym(1, c);
    advance(1);
    out.tokens.push_back({TokenKind::symbol, sym, tl, tc});
  }
  out.tokens.push_back({TokenKind::end, "", line, column});
  return out;
}

struct Span {
  int line = 1;
  int column = 1;
};

enum class LiteralKind { number, string, name };

struct Literal {
  LiteralKind kind = LiteralKind::number;
  double number = 0;
  std::string text;
};

struct Given {
  std::string var;
  Literal value;
};

struct SchemaItem {
  enum class Kind { model, ignore, guess };
  Kind kind = Kind::model;
  std::vector<std::string> vars;
  std::string stattype;
  std::vector<double> stattype_args;
  bool guess_all = false;
};

struct Param {
  std::string name;
  Literal value;
};

struct Exposed {
  std::string name;
  std::string stattype;
  std::vector<double> stattype_args;
};

struct Override {
  std::vector<std::string> outputs;
  std::vector<std::string> givens;
  std::vector<Exposed> exposed;
  std::string cgpm;
  std::vector<Param> params;
};

struct CategoryModel {
  std::string var;
  std::string model;
};

struct Statement;

struct CreateTable {
  std::string name;
  std::string file;
  std::shared_ptr<Statement> query;
};

struct Nullify {
  std::string table;
  std::string token;
};

struct CreatePopulation {
  std::string name;
  std::string table;
  std::vector<SchemaItem> schema;
};

struct CreateMetamodel {
  std::string name;
  std::string population;
  std::string baseline;
  std::vector<Param> baseline_params;
  std::vector<CategoryModel> category_models;
  std::vector<Override> overrides;
};

struct Initialize {
  int count = 1;
  std::string metamodel;
};

struct AnalyzePlan {
  bool skip = false;
  std::vector<std::string> vars;
};

struct Analyze {
  std::string metamodel;
  int count = 1;
  bool seconds = false;
  std::optional<AnalyzePlan> plan;
};

struct Simulate {
  std::vector<std::string> targets;
  std::string source;
  std::vector<Given> givens;
  std::optional<long long> rowid;
  std::optional<int> limit;
};

struct EstimateProbability {
  std::vector<Given> targets;
  std::vector<Given> givens;
  std::string source;
  std::optional<long long> rowid;
};

struct EstimateDependence {
  std::string x;
  std::string y;
  std::string source;
};

struct EstimateMI {
  std::string x;
  std::string y;
  std::vector<Given> givens;
  std::optional<int> samples;
  std::string source;
};

struct EstimatePredictiveProbability {
  std::string var;
  std::string source;
  std::optional<long long> rowid;
};

struct InferItem {
  bool predict = false;
  std::string var;
  std::optional<int> samples;
  std::optional<std::string> confidence;
};

struct Infer {
  bool explicit_form = false;
  std::vector<InferItem> items;
  std::string source;
  std::optional<long long> rowid;
};

using StatementNode =
    std::variant<CreateTable, Nullify, CreatePopulation, CreateMetamodel,
                 Initialize, Analyze, Simulate, EstimateProbability,
                 EstimateDependence, EstimateMI, EstimatePredictiveProbability,
                 Infer>;

struct Statement {
  Span begin;
  Span end;
  StatementNode node;
};

struct Program {
  std::vector<Statement> statements;
  std::vector<Diagnostic> diagnostics;
};

// Shortest decimal text that reads back to the same double.
inline std::string number_repr(double v) {
  for (int p = 6; p <= 17; ++p) {
    std::ostringstream os;
    os << std::setprecision(p) << v;
    if (std::strtod(os.str().c_str(), nullptr) == v) return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    out += c;
    if (c == '\'') out += c;
  }
  out += "'";
  return out;
}

class Parser {
 public:
  explicit Parser(TokenStream stream) : ts_(std::move(stream)) {}

  Program run() {
    Program out;
    out.diagnostics = ts_.diagnostics;
    while (!at_end()) {
      size_t before = pos_;
      auto stmt = statement(out.diagnostics);
      if (stmt) out.statements.push_back(std::move(*stmt));
      if (pos_ == before) recover(true);
    }
    return out;
  }

 private:
  const Token& peek(size_t k = 0) const {
    size_t i = pos_ + k;
    if (i >= ts_.tokens.size()) i = ts_.tokens.size() - 1;
    return ts_.tokens[i];
  }
  const Token& prev() const { return ts_.tokens[pos_ == 0 ? 0 : pos_ - 1]; }
  bool at_end() const { return peek().kind == TokenKind::end; }
  const Token& take() {
    const Token& t = peek();
    if (!at_end()) ++pos_;
    return t;
  }
  bool is_kw(const char* kw, size_t k = 0) const {
    return peek(k).kind == TokenKind::keyword && peek(k).lexeme == kw;
  }
  bool match(const char* kw) {
    if (!is_kw(kw)) return false;
    ++pos_;
    return true;
  }
  bool is_sym(const char* s, size_t k = 0) const {
    return peek(k).kind == TokenKind::symbol && peek(k).lexeme == s;
  }
  bool match_sym(const char* s) {
    if (!is_sym(s)) return false;
    ++pos_;
    return true;
  }

  struct Fail {};

  [[noreturn]] void error(std::vector<Diagnostic>& diags,
                          const std::string& expected) {
    const Token& t = peek();
    std::string got = t.kind == TokenKind::end
                          ? "end of input"
                          : "'" + t.lexeme + "'";
    diags.push_back({t.line, t.column, "expected " + expected + ", found " + got});
    throw Fail{};
  }

  void expect_kw(std::vector<Diagnostic>& diags, const char* kw) {
    if (!match(kw)) error(diags, std::string("'") + kw + "'");
  }
  void expect_sym(std::vector<Diagnostic>& diags, const char* s) {
    if (!match_sym(s)) error(diags, std::string("'") + s + "'");
  }

  std::string identifier(std::vector<Diagnostic>& diags,
                         const std::string& what) {
    if (peek().kind != TokenKind::identifier) error(diags, what);
    return take().lexeme;
  }

  double number(std::vector<Diagnostic>& diags, const std::string& what) {
    bool neg = false;
    if (is_sym("-") && peek(1).kind == TokenKind::number) {
      ++pos_;
      neg = true;
    }
    if (peek().kind != TokenKind::number) error(diags, what);
    double v = std::strtod(take().lexeme.c_str(), nullptr);
    return neg ? -v : v;
  }

  long long integer(std::vector<Diagnostic>& diags, const std::string& what) {
    double v = number(diags, what);
    long long n = static_cast<long long>(v);
    if (static_cast<double>(n) != v) error(diags, what);
    return n;
  }

  Literal literal(std::vector<Diagnostic>& diags) {
    if (peek().kind == TokenKind::string)
      return {LiteralKind::string, 0, take().lexeme};
    if (peek().kind == TokenKind::number ||
        (is_sym("-") && peek(1).kind == TokenKind::number))
      return {LiteralKind::number, number(diags, "a value"), ""};
    error(diags, "a number or quoted string");
  }

  std::vector<std::string> name_list(std::vector<Diagnostic>& diags,
                                     const std::string& what) {
    std::vector<std::string> names;
    names.push_back(identifier(diags, what));
    while (match_sym(",")) names.push_back(identifier(diags, what));
    return names;
  }

  std::vector<Given> given_list(std::vector<Diagnostic>& diags) {
    std::vector<Given> out;
    do {
      Given g;
      g.var = identifier(diags, "a variable name");
      expect_sym(diags, "=");
      g.value = literal(diags);
      out.push_back(std::move(g));
    } while (match_sym(",") || match("AND"));
    return out;
  }

  void reject(std::vector<Diagnostic>& diags, const Token& at,
              const std::string& what) {
    diags.push_back({at.line, at.column, what + " is not supported"});
    throw Fail{};
  }

  std::optional<long long> where_clause(std::vector<Diagnostic>& diags) {
    const Token& at = peek();
    bool named = false;
    if (match("ROWID")) {
      named = true;
    } else if (peek().kind == TokenKind::identifier &&
               upper(peek().lexeme) == "_ROWID_") {
      ++pos_;
      named = true;
    }
    if (!named)
      reject(diags, at,
             "this WHERE predicate (only WHERE rowid = <integer>)");
    if (is_sym("<") || is_sym(">"))
      reject(diags, peek(),
             "rowid comparison '" + peek().lexeme +
                 "' (only WHERE rowid = <integer>)");
    expect_sym(diags, "=");
    return integer(diags, "an integer rowid");
  }

  void end_statement(std::vector<Diagnostic>& diags) {
    if (match("ORDER")) reject(diags, prev(), "ORDER BY");
    expect_sym(diags, ";");
  }

  // Dot commands are line oriented: the statement ends where the line does.
  std::optional<StatementNode> dot_command(std::vector<Diagnostic>& diags) {
    int line = peek().line;
    expect_sym(diags, ".");
    bool is_nullify = (peek().kind == TokenKind::keyword ||
                       peek().kind == TokenKind::identifier) &&
                      peek().line == line && upper(peek().lexeme) == "NULLIFY";
    if (!is_nullify) error(diags, "a dot-command (.nullify)");
    ++pos_;
    Nullify n;
    if (peek().line != line) error(diags, "a table name");
    n.table = identifier(diags, "a table name");
    if (peek().kind != TokenKind::string || peek().line != line)
      error(diags, "a quoted null token");
    n.token = take().lexeme;
    match_sym(";");
    return StatementNode{std::move(n)};
  }

  std::vector<double> stattype_args(std::vector<Diagnostic>& diags) {
    std::vector<double> args;
    if (match_sym("(")) {
      args.push_back(number(diags, "a statistical-type parameter"));
      while (match_sym(","))
        args.push_back(number(diags, "a statistical-type parameter"));
      expect_sym(diags, ")");
    }
    return args;
  }

  std::string stattype_name(std::vector<Diagnostic>& diags) {
    if (peek().kind == TokenKind::identifier) return upper(take().lexeme);
    error(diags, "a statistical type name");
  }

  std::vector<Param> param_list(std::vector<Diagnostic>& diags) {
    std::vector<Param> params;
    if (!match_sym("(")) return params;
    if (!is_sym(")")) {
      do {
        Param p;
        p.name = identifier(diags, "a parameter name");
        expect_sym(diags, "=");
        if (peek().kind == TokenKind::identifier)
          p.value = {LiteralKind::name, 0, take().lexeme};
        else
          p.value = literal(diags);
        params.push_back(std::move(p));
      } while (match_sym(","));
    }
    expect_sym(diags, ")");
    return params;
  }

  StatementNode create_table(std::vector<Diagnostic>& diags) {
    CreateTable ct;
    ct.name = identifier(diags, "a table name");
    if (match("FROM")) {
      if (peek().kind != TokenKind::string)
        error(diags, "a quoted file path");
      ct.file = take().lexeme;
      end_statement(diags);
      return ct;
    }
    expect_kw(diags, "AS");
    Span begin{peek().line, peek().column};
    StatementNode inner;
    if (match("INFER"))
      inner = infer(diags);
    else if (match("SIMULATE"))
      inner = simulate(diags);
    else if (match("ESTIMATE"))
      inner = estimate(diags);
    else
      error(diags, "INFER, SIMULATE, or ESTIMATE after AS");
    ct.query = std::make_shared<Statement>();
    ct.query->begin = begin;
    ct.query->end = {prev().line, prev().column};
    ct.query->node = std::move(inner);
    return ct;
  }

  StatementNode create_population(std::vector<Diagnostic>& diags) {
    CreatePopulation cp;
    cp.name = identifier(diags, "a population name");
    expect_kw(diags, "FOR");
    cp.table = identifier(diags, "a table name");
    expect_kw(diags, "WITH");
    expect_kw(diags, "SCHEMA");
    expect_sym(diags, "(");
    while (!is_sym(")")) {
      SchemaItem item;
      if (match("MODEL")) {
        item.kind = SchemaItem::Kind::model;
        item.vars = name_list(diags, "a variable name");
        expect_kw(diags, "AS");
        item.stattype = stattype_name(diags);
        item.stattype_args = stattype_args(diags);
      } else if (match("IGNORE")) {
        item.kind = SchemaItem::Kind::ignore;
        item.vars = name_list(diags, "a variable name");
      } else if (match("GUESS")) {
        item.kind = SchemaItem::Kind::guess;
        expect_kw(diags, "STATTYPES");
        expect_kw(diags, "FOR");
        if (match_sym("(")) {
          expect_sym(diags, "*");
          expect_sym(diags, ")");
          item.guess_all = true;
        } else {
          item.vars = name_list(diags, "a variable name");
        }
      } else {
        error(diags, "MODEL, IGNORE, or GUESS in the schema");
      }
      cp.schema.push_back(std::move(item));
      if (!match_sym(";")) break;
    }
    expect_sym(diags, ")");
    end_statement(diags);
    return cp;
  }

  StatementNode create_metamodel(std::vector<Diagnostic>& diags) {
    CreateMetamodel cm;
    cm.name = identifier(diags, "a metamodel name");
    expect_kw(diags, "FOR");
    cm.population = identifier(diags, "a population name");
    expect_kw(diags, "WITH");
    expect_kw(diags, "BASELINE");
    cm.baseline = identifier(diags, "a baseline name");
    if (is_sym("(") && is_schemum_ahead()) {
      expect_sym(diags, "(");
      while (!is_sym(")")) {
        if (match("SET")) {
          expect_kw(diags, "CATEGORY");
          expect_kw(diags, "MODEL");
          expect_kw(diags, "FOR");
          CategoryModel cat;
          cat.var = identifier(diags, "a variable name");
          expect_kw(diags, "TO");
          cat.model = identifier(diags, "a category model name");
          cm.category_models.push_back(std::move(cat));
        } else if (match("OVERRIDE")) {
          match("GENERATIVE");
          expect_kw(diags, "MODEL");
          expect_kw(diags, "FOR");
          Override ov;
          ov.outputs = name_list(diags, "an output variable");
          if (match("GIVEN"))
            ov.givens = name_list(diags, "an input variable");
          if (match("AND")) {
            expect_kw(diags, "EXPOSE");
            do {
              Exposed ex;
              ex.name = identifier(diags, "an exposed variable name");
              ex.stattype = stattype_name(diags);
              ex.stattype_args = stattype_args(diags);
              ov.exposed.push_back(std::move(ex));
            } while (match_sym(","));
          }
          expect_kw(diags, "USING");
          ov.cgpm = identifier(diags, "a model name");
          ov.params = param_list(diags);
          cm.overrides.push_back(std::move(ov));
        } else {
          error(diags, "SET CATEGORY MODEL or OVERRIDE in the definition");
        }
        if (!match_sym(";")) break;
      }
      expect_sym(diags, ")");
    } else {
      cm.baseline_params = param_list(diags);
    }
    end_statement(diags);
    return cm;
  }

  // Distinguishes "crosscat(SET ...)" from baseline parameters "kde(k=2)".
  bool is_schemum_ahead() const {
    return is_kw("SET", 1) || is_kw("OVERRIDE", 1);
  }

  StatementNode initialize(std::vector<Diagnostic>& diags) {
    Initialize in;
    in.count = static_cast<int>(integer(diags, "a model count"));
    if (!match("MODELS")) expect_kw(diags, "MODEL");
    expect_kw(diags, "FOR");
    in.metamodel = identifier(diags, "a metamodel name");
    end_statement(diags);
    return in;
  }

  StatementNode analyze(std::vector<Diagnostic>& diags) {
    Analyze an;
    an.metamodel = identifier(diags, "a metamodel name");
    expect_kw(diags, "FOR");
    an.count = static_cast<int>(integer(diags, "an amount"));
    if (match("SECONDS") || match("SECOND"))
      an.seconds = true;
    else if (!match("ITERATIONS") && !match("ITERATION"))
      error(diags, "ITERATIONS or SECONDS");
    match("WAIT");
    if (match_sym("(")) {
      AnalyzePlan plan;
      if (match("SKIP"))
        plan.skip = true;
      else
        expect_kw(diags, "VARIABLES");
      plan.vars = name_list(diags, "a variable name");
      expect_sym(diags, ")");
      an.plan = std::move(plan);
    }
    end_statement(diags);
    return an;
  }

  StatementNode simulate(std::vector<Diagnostic>& diags) {
    Simulate sim;
    if (is_kw("FROM")) error(diags, "a list of variables to simulate");
    sim.targets = name_list(diags, "a variable name");
    bool have_from = false;
    for (;;) {
      if (match("FROM")) {
        if (is_kw("COLUMNS")) reject(diags, peek(), "FROM COLUMNS");
        sim.source = identifier(diags, "a metamodel or population name");
        have_from = true;
      } else if (match("GIVEN")) {
        sim.givens = given_list(diags);
      } else if (match("WHERE")) {
        sim.rowid = where_clause(diags);
      } else if (match("LIMIT")) {
        sim.limit = static_cast<int>(integer(diags, "a row limit"));
      } else {
        break;
      }
    }
    if (!have_from) error(diags, "a FROM clause");
    end_statement(diags);
    return sim;
  }

  StatementNode estimate(std::vector<Diagnostic>& diags) {
    if (match("PROBABILITY")) {
      EstimateProbability ep;
      expect_kw(diags, "OF");
      ep.targets = given_list(diags);
      bool have_from = false;
      for (;;) {
        if (match("GIVEN")) {
          ep.givens = given_list(diags);
        } else if (match("FROM")) {
          if (is_kw("COLUMNS")) reject(diags, peek(), "FROM COLUMNS");
          ep.source = identifier(diags, "a metamodel or population name");
          have_from = true;
        } else if (match("WHERE")) {
          ep.rowid = where_clause(diags);
        } else {
          break;
        }
      }
      if (!have_from) error(diags, "a FROM clause");
      end_statement(diags);
      return ep;
    }
    if (match("DEPENDENCE")) {
      expect_kw(diags, "PROBABILITY");
      expect_kw(diags, "OF");
      EstimateDependence ed;
      ed.x = identifier(diags, "a variable name");
      expect_kw(diags, "WITH");
      ed.y = identifier(diags, "a variable name");
      expect_kw(diags, "FROM");
      if (is_kw("COLUMNS")) reject(diags, peek(), "FROM COLUMNS");
      ed.source = identifier(diags, "a metamodel or population name");
      end_statement(diags);
      return ed;
    }
    if (match("MUTUAL")) {
      expect_kw(diags, "INFORMATION");
      expect_kw(diags, "OF");
      EstimateMI em;
      em.x = identifier(diags, "a variable name");
      expect_kw(diags, "WITH");
      em.y = identifier(diags, "a variable name");
      for (;;) {
        if (match("GIVEN")) {
          em.givens = given_list(diags);
        } else if (match("USING")) {
          em.samples = static_cast<int>(integer(diags, "a sample count"));
          expect_kw(diags, "SAMPLES");
        } else if (match("FROM")) {
          if (is_kw("COLUMNS")) reject(diags, peek(), "FROM COLUMNS");
          em.source = identifier(diags, "a metamodel or population name");
        } else {
          break;
        }
      }
      if (em.source.empty()) error(diags, "a FROM clause");
      end_statement(diags);
      return em;
    }
    if (match("PREDICTIVE")) {
      expect_kw(diags, "PROBABILITY");
      expect_kw(diags, "OF");
      EstimatePredictiveProbability ev;
      ev.var = identifier(diags, "a variable name");
      expect_kw(diags, "FROM");
      if (is_kw("COLUMNS")) reject(diags, peek(), "FROM COLUMNS");
      ev.source = identifier(diags, "a metamodel or population name");
      if (match("WHERE")) ev.rowid = where_clause(diags);
      end_statement(diags);
      return ev;
    }
    error(diags,
          "PROBABILITY, DEPENDENCE PROBABILITY, MUTUAL INFORMATION, or "
          "PREDICTIVE PROBABILITY after ESTIMATE");
  }

  StatementNode infer(std::vector<Diagnostic>& diags) {
    Infer in;
    in.explicit_form = match("EXPLICIT");
    do {
      InferItem item;
      if (match("PREDICT")) {
        item.predict = true;
        item.var = identifier(diags, "a variable name");
        if (match("USING")) {
          item.samples = static_cast<int>(integer(diags, "a sample count"));
          expect_kw(diags, "SAMPLES");
        }
        if (match("CONFIDENCE"))
          item.confidence = identifier(diags, "a confidence column name");
      } else {
        item.var = identifier(diags, "a variable name");
      }
      in.items.push_back(std::move(item));
    } while (match_sym(","));
    expect_kw(diags, "FROM");
    in.source = identifier(diags, "a metamodel or population name");
    if (match("WHERE")) in.rowid = where_clause(diags);
    end_statement(diags);
    return in;
  }

  std::optional<Statement> statement(std::vector<Diagnostic>& diags) {
    Statement stmt;
    stmt.begin = {peek().line, peek().column};
    try {
      std::optional<StatementNode> node;
      if (is_sym(".")) {
        node = dot_command(diags);
      } else if (match("CREATE")) {
        if (match("TABLE"))
          node = create_table(diags);
        else if (match("POPULATION"))
          node = create_population(diags);
        else if (match("METAMODEL"))
          node = create_metamodel(diags);
        else
          error(diags, "TABLE, POPULATION, or METAMODEL after CREATE");
      } else if (match("INITIALIZE")) {
        node = initialize(diags);
      } else if (match("ANALYZE")) {
        node = analyze(diags);
      } else if (match("SIMULATE")) {
        node = simulate(diags);
      } else if (match("ESTIMATE")) {
        node = estimate(diags);
      } else if (match("INFER")) {
        node = infer(diags);
      } else {
        error(diags,
              "a statement (CREATE, INITIALIZE, ANALYZE, SIMULATE, ESTIMATE, "
              "or INFER)");
      }
      stmt.end = {prev().line, prev().column};
      stmt.node = std::move(*node);
      return stmt;
    } catch (const Fail&) {
      recover(false);
      return std::nullopt;
    }
  }

  // Skips to just past the next ';' (or consumes one token at minimum).
  void recover(bool force_progress) {
    if (force_progress && !at_end()) ++pos_;
    while (!at_end()) {
      if (ts_.tokens[pos_].kind == TokenKind::symbol &&
          ts_.tokens[pos_].lexeme == ";") {
        ++pos_;
        return;
      }
      ++pos_;
    }
  }

  TokenStream ts_;
  size_t pos_ = 0;
};

inline Program parse(const std::string& source) {
  return Parser(tokenize(source)).run();
}

inline std::string print_literal(const Literal& lit) {
  switch (lit.kind) {
    case LiteralKind::number: return number_repr(lit.number);
    case LiteralKind::string: return quote(lit.text);
    case LiteralKind::name: return lit.text;
  }
  return "";
}

inline std::string print_givens(const std::vector<Given>& givens) {
  std::string out;
  for (size_t i = 0; i < givens.size(); ++i) {
    if (i) out += ", ";
    out += givens[i].var + " = " + print_literal(givens[i].value);
  }
  return out;
}

inline std::string print_names(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

inline std::string print_params(const std::vector<Param>& params) {
  if (params.empty()) return "";
  std::string out = "(";
  for (size_t i = 0; i < params.size(); ++i) {
    if (i) out += ", ";
    out += params[i].name + " = " + print_literal(params[i].value);
  }
  return out + ")";
}

inline std::string print_stattype(const std::string& name,
                                  const std::vector<double>& args) {
  std::string out = name;
  if (!args.empty()) {
    out += "(";
    for (size_t i = 0; i < args.size(); ++i) {
      if (i) out += ", ";
      out += number_repr(args[i]);
    }
    out += ")";
  }
  return out;
}

std::string print(const Statement& stmt);

inline std::string print_node(const StatementNode& node) {
  struct Printer {
    std::string operator()(const CreateTable& s) const {
      if (s.query)
        return "CREATE TABLE " + s.name + " AS " + print(*s.query);
      return "CREATE TABLE " + s.name + " FROM " + quote(s.file) + ";";
    }
    std::string operator()(const Nullify& s) const {
      return ".nullify " + s.table + " " + quote(s.token);
    }
    std::string operator()(const CreatePopulation& s) const {
      std::string out =
          "CREATE POPULATION " + s.name + " FOR " + s.table + " WITH SCHEMA (";
      for (size_t i = 0; i < s.schema.size(); ++i) {
        const SchemaItem& item = s.schema[i];
        if (i) out += " ";
        switch (item.kind) {
          case SchemaItem::Kind::model:
            out += "MODEL " + print_names(item.vars) + " AS " +
                   print_stattype(item.stattype, item.stattype_args);
            break;
          case SchemaItem::Kind::ignore:
            out += "IGNORE " + print_names(item.vars);
            break;
          case SchemaItem::Kind::guess:
            out += "GUESS STATTYPES FOR ";
            out += item.guess_all ? "(*)" : print_names(item.vars);
            break;
        }
        out += ";";
      }
      return out + ");";
    }
    std::string operator()(const CreateMetamodel& s) const {
      std::string out = "CREATE METAMODEL " + s.name + " FOR " + s.population +
                        " WITH BASELINE " + s.baseline;
      if (s.category_models.empty() && s.overrides.empty())
        return out + print_params(s.baseline_params) + ";";
      out += "(";
      bool first = true;
      for (const CategoryModel& cat : s.category_models) {
        if (!first) out += " ";
        first = false;
        out += "SET CATEGORY MODEL FOR " + cat.var + " TO " + cat.model + ";";
      }
      for (const Override& ov : s.overrides) {
        if (!first) out += " ";
        first = false;
        out += "OVERRIDE GENERATIVE MODEL FOR " + print_names(ov.outputs);
        if (!ov.givens.empty()) out += " GIVEN " + print_names(ov.givens);
        if (!ov.exposed.empty()) {
          out += " AND EXPOSE ";
          for (size_t i = 0; i < ov.exposed.size(); ++i) {
            if (i) out += ", ";
            out += ov.exposed[i].name + " " +
                   print_stattype(ov.exposed[i].stattype,
                                  ov.exposed[i].stattype_args);
          }
        }
        out += " USING " + ov.cgpm + print_params(ov.params) + ";";
      }
      return out + ");";
    }
    std::string operator()(const Initialize& s) const {
      std::ostringstream os;
      os << "INITIALIZE " << s.count << " MODELS FOR " << s.metamodel << ";";
      return os.str();
    }
    std::string operator()(const Analyze& s) const {
      std::ostringstream os;
      os << "ANALYZE " << s.metamodel << " FOR " << s.count
         << (s.seconds ? " SECONDS" : " ITERATIONS");
      if (s.plan) {
        os << " (" << (s.plan->skip ? "SKIP " : "VARIABLES ")
           << print_names(s.plan->vars) << ")";
      }
      os << ";";
      return os.str();
    }
    std::string operator()(const Simulate& s) const {
      std::string out = "SIMULATE " + print_names(s.targets) + " FROM " +
                        s.source;
      if (!s.givens.empty()) out += " GIVEN " + print_givens(s.givens);
      if (s.rowid) out += " WHERE rowid = " + std::to_string(*s.rowid);
      if (s.limit) out += " LIMIT " + std::to_string(*s.limit);
      return out + ";";
    }
    std::string operator()(const EstimateProbability& s) const {
      std::string out = "ESTIMATE PROBABILITY OF " + print_givens(s.targets);
      if (!s.givens.empty()) out += " GIVEN " + print_givens(s.givens);
      out += " FROM " + s.source;
      if (s.rowid) out += " WHERE rowid = " + std::to_string(*s.rowid);
      return out + ";";
    }
    std::string operator()(const EstimateDependence& s) const {
      return "ESTIMATE DEPENDENCE PROBABILITY OF " + s.x + " WITH " + s.y +
             " FROM " + s.source + ";";
    }
    std::string operator()(const EstimateMI& s) const {
      std::string out = "ESTIMATE MUTUAL INFORMATION OF " + s.x + " WITH " +
                        s.y;
      if (!s.givens.empty()) out += " GIVEN " + print_givens(s.givens);
      if (s.samples)
        out += " USING " + std::to_string(*s.samples) + " SAMPLES";
      return out + " FROM " + s.source + ";";
    }
    std::string operator()(const EstimatePredictiveProbability& s) const {
      std::string out = "ESTIMATE PREDICTIVE PROBABILITY OF " + s.var +
                        " FROM " + s.source;
      if (s.rowid) out += " WHERE rowid = " + std::to_string(*s.rowid);
      return out + ";";
    }
    std::string operator()(const Infer& s) const {
      std::string out = "INFER ";
      if (s.explicit_form) out += "EXPLICIT ";
      for (size_t i = 0; i < s.items.size(); ++i) {
        const InferItem& item = s.items[i];
        if (i) out += ", ";
        if (item.predict) {
          out += "PREDICT " + item.var;
          if (item.samples)
            out += " USING " + std::to_string(*item.samples) + " SAMPLES";
          if (item.confidence) out += " CONFIDENCE " + *item.confidence;
        } else {
          out += item.var;
        }
      }
      out += " FROM " + s.source;
      if (s.rowid) out += " WHERE rowid = " + std::to_string(*s.rowid);
      return out + ";";
    }
  };
  return std::visit(Printer{}, node);
}

inline std::string print(const Statement& stmt) { return print_node(stmt.node); }

inline std::string print(const Program& program) {
  std::string out;
  for (const Statement& s : program.statements) {
    out += print(s);
    out += "\n";
  }
  return out;
}

}  // namespace cgpm::lang
