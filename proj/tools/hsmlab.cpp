// hsmlab command-line runner.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 falsified
// invariant, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <string>

#include "hsmlab/config.hpp"
#include "hsmlab/experiment.hpp"
#include "hsmlab/parallel.hpp"
#include "hsmlab/report.hpp"
#include "hsmlab/version.hpp"

namespace {

using hsmlab::ReportDocument;

std::string cell_text(const ReportDocument& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  return v.dump();
}

void print_table(std::ostream& out, const ReportDocument& table, const std::vector<std::string>& only = {}) {
  std::vector<std::string> header = only;
  if (header.empty())
    for (const auto& row : table)
      for (auto it = row.begin(); it != row.end(); ++it)
        if (std::find(header.begin(), header.end(), it.key()) == header.end()) header.push_back(it.key());
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(header.size());
  for (std::size_t k = 0; k < header.size(); ++k) width[k] = header[k].size();
  for (const auto& row : table) {
    std::vector<std::string> line;
    for (std::size_t k = 0; k < header.size(); ++k) {
      line.push_back(row.contains(header[k]) ? cell_text(row[header[k]]) : "");
      width[k] = std::max(width[k], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t k = 0; k < line.size(); ++k)
      out << (k ? "  " : "") << std::string(width[k] - line[k].size(), ' ') << line[k];
    out << "\n";
  };
  emit(header);
  for (const auto& line : cells) emit(line);
}

int run(const std::string& path, const std::string& json_out, const std::string& csv_out) {
  auto config = hsmlab::load_config(path);
  if (!json_out.empty()) config.output_json = json_out;
  if (!csv_out.empty()) config.output_csv = csv_out;
  const auto doc = hsmlab::run_experiment(config);
  hsmlab::write_outputs(doc, config);
  std::cout << hsmlab::to_string(config.kind) << ": " << config.output_json.string() << "\n";
  print_table(std::cout, doc["rows"]);
  return 0;
}

int validate(const std::string& path) {
  const auto config = hsmlab::load_config(path);
  std::cout << hsmlab::to_json_text(hsmlab::describe(config));
  return 0;
}

int report(const std::string& path, bool csv, const std::string& table_name) {
  const auto doc = hsmlab::read_report(path);
  const ReportDocument* table = nullptr;
  for (const auto& [name, t] : hsmlab::report_tables(doc))
    if (name == table_name) table = t;
  if (!table) throw hsmlab::ConfigError("report has no table '" + table_name + "'");
  if (csv) {
    std::cout << hsmlab::to_csv_text(*table);
  } else if (table_name == "probe") {
    print_table(std::cout, *table, {"side", "infimum"});
  } else {
    print_table(std::cout, *table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hsmlab: Hardy-Sobolev-Maz'ya numerical experiments"};
  app.set_version_flag("--version", std::string("hsmlab ") + hsmlab::kVersion);
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (overrides HSMLAB_THREADS)")->check(CLI::NonNegativeNumber);

  std::string config_path, json_out, csv_out, report_path, table_name = "rows";
  bool csv = false;
  auto* run_cmd = app.add_subcommand("run", "run the experiment described by a config file");
  run_cmd->add_option("config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--json", json_out, "JSON report path (overrides [output] json)");
  run_cmd->add_option("--csv", csv_out, "CSV table path (overrides [output] csv)");
  auto* validate_cmd = app.add_subcommand("validate", "parse a config and print it fully resolved");
  validate_cmd->add_option("config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  auto* report_cmd = app.add_subcommand("report", "render a table of a JSON report");
  report_cmd->add_option("report", report_path, "JSON report")->required()->check(CLI::ExistingFile);
  report_cmd->add_flag("--csv", csv, "write CSV instead of an aligned text table");
  report_cmd->add_option("--table", table_name, "table name (rows, curve, probe, ...)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (threads > 0) hsmlab::parallel::set_thread_count(threads);

  try {
    if (*run_cmd) return run(config_path, json_out, csv_out);
    if (*validate_cmd) return validate(config_path);
    return report(report_path, csv, table_name);
  } catch (const std::exception& e) {
    const int code = hsmlab::exit_code(e);
    std::cerr << (code == 1 ? "configuration error: " : code == 2 ? "falsified: " : "error: ") << e.what() << "\n";
    return code;
  }
}
