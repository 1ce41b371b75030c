#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "flock/database.hpp"
#include "flock/error.hpp"
#include "flock/explain.hpp"
#include "flock/service.hpp"

#ifndef FLOCK_DEFAULT_UI_DIR
#define FLOCK_DEFAULT_UI_DIR "ui"
#endif

namespace fs = std::filesystem;
using namespace flockmtl;

namespace {

struct GlobalFlags {
  std::string workspace;
  std::string providers;
  bool mock = false;
  bool no_cache = false;
};

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

DatabaseOptions make_options(const GlobalFlags& g, const std::string& data_dir) {
  DatabaseOptions o;
  if (!data_dir.empty()) o.data_dir = data_dir;
  o.workspace = g.workspace.empty() ? env_or("FLOCK_WORKSPACE", fs::current_path().string()) : g.workspace;
  if (!g.providers.empty()) o.providers_file = g.providers;
  o.route_all_to_mock = g.mock;
  o.persistent_cache = !g.no_cache;
  return o;
}

void print_error(const std::exception& e) {
  std::cerr << "error";
  if (const auto* err = dynamic_cast<const Error*>(&e)) std::cerr << " [" << error_code_name(err->code()) << "]";
  std::cerr << ": " << e.what() << "\n";
}

void print_result(const QueryResult& r, bool explain) {
  if (r.generated_sql) std::cout << "-- generated SQL:\n" << *r.generated_sql << "\n";
  std::cout << format_result_table(r);
  if (explain && r.plan.root) std::cout << explain_text(r.plan, &r);
}

/// Loads every CSV in `dir` as a table named after the file stem.
void load_data_dir(Database& db, const fs::path& dir) {
  if (dir.empty()) return;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") {
      db.load_csv(entry.path(), entry.path().stem().string());
      std::cerr << "loaded " << entry.path().stem().string() << " (" << db.table(entry.path().stem().string())->row_count()
                << " rows)\n";
    }
  }
}

int run_file(Database& db, const std::string& path, bool explain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  for (const auto& r : db.execute_script(buf.str())) print_result(r, explain);
  return 0;
}

bool statement_complete(const std::string& text) {
  bool in_string = false;
  char last = 0;
  for (char c : text) {
    if (c == '\'') in_string = !in_string;
    if (!in_string && !std::isspace(static_cast<unsigned char>(c))) last = c;
  }
  return !in_string && last == ';';
}

int repl(Database& db) {
  std::cout << "flock shell. End statements with ';'. Commands: .tables  .plan <select>  .quit\n";
  std::string buffer;
  std::string line;
  while (true) {
    std::cout << (buffer.empty() ? "flock> " : "   ...> ") << std::flush;
    if (!std::getline(std::cin, line)) break;
    if (buffer.empty() && !line.empty() && line[0] == '.') {
      try {
        if (line == ".quit" || line == ".exit") break;
        if (line == ".tables") {
          for (const auto& name : db.table_names()) std::cout << name << "\n";
        } else if (line.rfind(".plan ", 0) == 0) {
          std::cout << explain_text(db.plan(line.substr(6)));
        } else {
          std::cout << "unknown command " << line << "\n";
        }
      } catch (const std::exception& e) {
        print_error(e);
      }
      continue;
    }
    buffer += line + "\n";
    if (!statement_complete(buffer)) continue;
    try {
      for (const auto& r : db.execute_script(buffer)) print_result(r, false);
    } catch (const std::exception& e) {
      print_error(e);
    }
    buffer.clear();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic SQL engine with LLM functions"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("-w,--workspace", g.workspace, "Workspace directory (catalog and cache live here)");
  app.add_option("--providers", g.providers, "Provider registry file");
  app.add_flag("--mock", g.mock, "Serve every provider from the deterministic mock");
  app.add_flag("--no-cache", g.no_cache, "Keep predictions in memory only");

  auto* repl_cmd = app.add_subcommand("repl", "Interactive SQL shell");
  std::string repl_data;
  repl_cmd->add_option("--data", repl_data, "Directory of CSV files to load; also the base for relative paths");

  auto* run_cmd = app.add_subcommand("run", "Execute a SQL script");
  std::string script;
  bool explain = false;
  std::string run_data;
  run_cmd->add_option("file", script, "SQL file")->required();
  run_cmd->add_flag("--explain", explain, "Print the annotated plan after each query");
  run_cmd->add_option("--data", run_data, "Directory of CSV files to load; also the base for relative paths");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP API and inspector UI");
  int port = std::atoi(env_or("FLOCK_PORT", "8080").c_str());
  std::string host = "127.0.0.1";
  std::string serve_data;
  std::string ui_dir = FLOCK_DEFAULT_UI_DIR;
  std::string init_sql;
  serve_cmd->add_option("--port", port, "Port to listen on");
  serve_cmd->add_option("--host", host, "Address to bind");
  serve_cmd->add_option("--data", serve_data, "Directory of CSV files to load; also the base for relative paths");
  serve_cmd->add_option("--ui", ui_dir, "Directory with the UI assets");
  serve_cmd->add_option("--init", init_sql, "SQL script to run before serving");

  auto* cache_cmd = app.add_subcommand("cache", "Prediction cache maintenance");
  cache_cmd->require_subcommand(1);
  auto* cache_clear = cache_cmd->add_subcommand("clear", "Delete all cached predictions");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string data_dir = *repl_cmd ? repl_data : *run_cmd ? run_data : *serve_cmd ? serve_data : "";
    Database db(make_options(g, data_dir));
    if (*repl_cmd) {
      load_data_dir(db, repl_data);
      return repl(db);
    }
    if (*run_cmd) {
      load_data_dir(db, run_data);
      return run_file(db, script, explain);
    }
    if (*serve_cmd) {
      load_data_dir(db, serve_data);
      if (!init_sql.empty()) run_file(db, init_sql, false);
      Service service(db, ServiceOptions{ui_dir, 100});
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      if (!service.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
      return 0;
    }
    if (*cache_clear) {
      std::size_t n = db.cache().size();
      db.cache().clear();
      std::cout << "cleared " << n << " cached predictions from " << db.cache().file().string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    print_error(e);
    return 1;
  }
  return 0;
}
