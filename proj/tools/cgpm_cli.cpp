// Copyright 2026
// See LICENSE.txt

#include <unistd.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <sys/stat.h>
#include <vector>

#include "cgpm/lang.hpp"
#include "cgpm/satellites.hpp"
#include "cgpm/session.hpp"

namespace {

using namespace cgpm;

const char* kUsage =
    "usage: cgpm [--script FILE] [--state FILE] [--seed N] [--workers N]\n"
    "            [--output table|csv|json]\n"
    "       cgpm satgen [--out FILE] [--truth FILE] [--rows N]\n"
    "            [--anomalies N] [--seed N]\n"
    "\n"
    "Runs modeling-language statements from a script, or starts a REPL.\n"
    "  --script FILE   execute FILE, stopping at the first error\n"
    "  --state FILE    load session state from FILE if it exists and\n"
    "                  save back on clean exit\n"
    "  --seed N        master seed for a fresh session (default 1)\n"
    "  --workers N     worker pool size for ANALYZE (default 1)\n"
    "  --output FMT    result rendering: table (default), csv, or json\n"
    "\n"
    "REPL dot-commands: .nullify TABLE 'TOKEN'   .tables   .output FMT\n"
    "                   .quit\n"
    "\n"
    "satgen writes a synthetic satellite catalog as CSV (default stdout);\n"
    "--truth FILE records the planted-anomaly rowids one per line.\n";

struct Options {
  std::string script;
  std::string state;
  uint64_t seed = 1;
  int workers = 1;
  std::string format = "table";
};

int usage_error(const std::string& message) {
  if (!message.empty()) std::cerr << "cgpm: " << message << "\n";
  std::cerr << kUsage;
  return 2;
}

bool file_exists(const std::string& path) {
  struct stat st;
  return ::stat(path.c_str(), &st) == 0;
}

std::optional<uint64_t> parse_u64(const std::string& s) {
  if (s.empty()) return std::nullopt;
  uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

void emit(const session::TextTable& t, const std::string& format) {
  if (t.columns.empty()) return;
  if (format == "csv")
    std::cout << session::format_csv(t);
  else if (format == "json")
    std::cout << session::format_json(t);
  else
    std::cout << session::format_table(t);
  std::cout.flush();
}

// Errors from binding already carry a "line:col:" prefix; runtime errors
// get the statement's own position.
std::string positioned(const lang::Statement& stmt, const std::string& msg) {
  size_t colon = msg.find(':');
  bool has_position = colon != std::string::npos && colon > 0;
  for (size_t i = 0; has_position && i < colon; ++i)
    has_position = msg[i] >= '0' && msg[i] <= '9';
  if (has_position) return msg;
  return std::to_string(stmt.begin.line) + ":" +
         std::to_string(stmt.begin.column) + ": " + msg;
}

int run_script(session::Session& s, const std::string& path,
               const std::string& format) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) {
    std::cerr << "cgpm: cannot read script '" << path << "'\n";
    return 1;
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  lang::Program program = lang::parse(buffer.str());
  if (!program.diagnostics.empty()) {
    for (const lang::Diagnostic& d : program.diagnostics)
      std::cerr << d.format() << "\n";
    return 1;
  }
  for (const lang::Statement& stmt : program.statements) {
    try {
      emit(s.execute(stmt), format);
    } catch (const std::exception& e) {
      std::cerr << positioned(stmt, e.what()) << "\n";
      return 1;
    }
  }
  return 0;
}

// Finds the end of the first complete statement: a ';' outside strings and
// comments, or the end of a leading dot-command line.
size_t statement_end(const std::string& text) {
  bool in_string = false, in_comment = false;
  size_t start = text.find_first_not_of(" \t\r\n");
  if (start != std::string::npos && text[start] == '.') {
    size_t eol = text.find('\n', start);
    return eol == std::string::npos ? std::string::npos : eol + 1;
  }
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_comment) {
      if (c == '\n') in_comment = false;
      continue;
    }
    if (in_string) {
      if (c == '\'') in_string = false;
      continue;
    }
    if (c == '\'') in_string = true;
    else if (c == '-' && i + 1 < text.size() && text[i + 1] == '-')
      in_comment = true;
    else if (c == ';')
      return i + 1;
  }
  return std::string::npos;
}

void repl_execute(session::Session& s, const std::string& text,
                  std::string& format) {
  lang::Program program = lang::parse(text);
  if (!program.diagnostics.empty()) {
    for (const lang::Diagnostic& d : program.diagnostics)
      std::cerr << d.format() << "\n";
    return;
  }
  for (const lang::Statement& stmt : program.statements) {
    try {
      emit(s.execute(stmt), format);
    } catch (const std::exception& e) {
      std::cerr << positioned(stmt, e.what()) << "\n";
      return;
    }
  }
}

int run_repl(session::Session& s, std::string format) {
  bool interactive = ::isatty(0);
  std::string pending;
  std::string line;
  bool done = false;
  while (!done) {
    if (interactive)
      std::cerr << (pending.empty() ? "cgpm> " : "  ..> ") << std::flush;
    if (!std::getline(std::cin, line)) break;
    size_t first = line.find_first_not_of(" \t\r");
    std::string trimmed =
        first == std::string::npos ? std::string() : line.substr(first);
    if (pending.empty() && !trimmed.empty() && trimmed[0] == '.') {
      std::istringstream words(trimmed);
      std::string cmd, arg;
      words >> cmd >> arg;
      if (cmd == ".quit" || cmd == ".exit") {
        done = true;
      } else if (cmd == ".tables") {
        for (const std::string& name : s.table_names())
          std::cout << name << "\n";
      } else if (cmd == ".output") {
        if (arg == "table" || arg == "csv" || arg == "json")
          format = arg;
        else
          std::cerr << "usage: .output table|csv|json\n";
      } else if (cmd == ".nullify") {
        repl_execute(s, trimmed + "\n", format);
      } else {
        std::cerr << "unknown dot-command '" << cmd << "'\n";
      }
      continue;
    }
    pending += line + "\n";
    size_t end;
    while ((end = statement_end(pending)) != std::string::npos) {
      std::string one = pending.substr(0, end);
      pending = pending.substr(end);
      if (one.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      repl_execute(s, one, format);
    }
    if (pending.find_first_not_of(" \t\r\n") == std::string::npos)
      pending.clear();
  }
  if (pending.find_first_not_of(" \t\r\n") != std::string::npos)
    repl_execute(s, pending, format);
  return 0;
}

int run_satgen(int argc, char** argv) {
  std::string out_path, truth_path;
  int rows = 600, anomalies = 18;
  uint64_t seed = 1;
  for (int i = 2; i < argc; ++i) {
    std::string flag = argv[i];
    auto value = [&]() -> std::optional<std::string> {
      if (i + 1 >= argc) return std::nullopt;
      return std::string(argv[++i]);
    };
    std::optional<std::string> v;
    if (flag == "--out" && (v = value()))
      out_path = *v;
    else if (flag == "--truth" && (v = value()))
      truth_path = *v;
    else if (flag == "--rows" && (v = value()) && parse_u64(*v))
      rows = static_cast<int>(*parse_u64(*v));
    else if (flag == "--anomalies" && (v = value()) && parse_u64(*v))
      anomalies = static_cast<int>(*parse_u64(*v));
    else if (flag == "--seed" && (v = value()) && parse_u64(*v))
      seed = *parse_u64(*v);
    else
      return usage_error("bad satgen argument '" + flag + "'");
  }
  satgen::SyntheticSatellites data;
  try {
    data = satgen::generate(rows, anomalies, seed);
  } catch (const std::exception& e) {
    std::cerr << "cgpm: " << e.what() << "\n";
    return 1;
  }
  if (out_path.empty()) {
    satgen::write_csv(data.table, std::cout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out.good()) {
      std::cerr << "cgpm: cannot write '" << out_path << "'\n";
      return 1;
    }
    satgen::write_csv(data.table, out);
  }
  if (!truth_path.empty()) {
    std::ofstream truth(truth_path, std::ios::binary);
    if (!truth.good()) {
      std::cerr << "cgpm: cannot write '" << truth_path << "'\n";
      return 1;
    }
    for (int64_t r : data.anomalies) truth << r << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && std::string(argv[1]) == "satgen")
    return run_satgen(argc, argv);

  Options opt;
  for (int i = 1; i < argc; ++i) {
    std::string flag = argv[i];
    auto value = [&]() -> std::optional<std::string> {
      if (i + 1 >= argc) return std::nullopt;
      return std::string(argv[++i]);
    };
    std::optional<std::string> v;
    if (flag == "--script" && (v = value())) {
      opt.script = *v;
    } else if (flag == "--state" && (v = value())) {
      opt.state = *v;
    } else if (flag == "--seed" && (v = value())) {
      auto n = parse_u64(*v);
      if (!n) return usage_error("--seed needs a nonnegative integer");
      opt.seed = *n;
    } else if (flag == "--workers" && (v = value())) {
      auto n = parse_u64(*v);
      if (!n || *n == 0) return usage_error("--workers needs a positive count");
      opt.workers = static_cast<int>(*n);
    } else if (flag == "--output" && (v = value())) {
      if (*v != "table" && *v != "csv" && *v != "json")
        return usage_error("--output must be table, csv, or json");
      opt.format = *v;
    } else if (flag == "--help" || flag == "-h") {
      std::cout << kUsage;
      return 0;
    } else {
      return usage_error("unrecognized argument '" + flag + "'");
    }
  }

  try {
    session::Session s =
        (!opt.state.empty() && file_exists(opt.state))
            ? session::Session::load(opt.state, opt.workers)
            : session::Session(opt.seed, opt.workers);

    int code = opt.script.empty() ? run_repl(s, opt.format)
                                  : run_script(s, opt.script, opt.format);
    if (code == 0 && !opt.state.empty()) s.save(opt.state);
    return code;
  } catch (const std::exception& e) {
    std::cerr << "cgpm: " << e.what() << "\n";
    return 1;
  }
}
