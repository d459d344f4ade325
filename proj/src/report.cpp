#include "hsmlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hsmlab {

namespace {

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string scalar_text(const ReportDocument& v) {
  switch (v.type()) {
    case nlohmann::json::value_t::number_float: return format_double(v.get<double>());
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
    case nlohmann::json::value_t::boolean:
    case nlohmann::json::value_t::null:
    case nlohmann::json::value_t::string: return v.dump();
    default: return {};
  }
}

void write_value(std::ostream& out, const ReportDocument& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  if (v.is_object()) {
    if (v.empty()) {
      out << "{}";
      return;
    }
    out << "{\n";
    bool first = true;
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (!first) out << ",\n";
      first = false;
      out << pad << ReportDocument(it.key()).dump() << ": ";
      write_value(out, it.value(), indent + 2);
    }
    out << "\n" << close << "}";
  } else if (v.is_array()) {
    if (v.empty()) {
      out << "[]";
      return;
    }
    bool flat = true;
    for (const auto& e : v) flat = flat && e.is_primitive();
    if (flat) {
      out << "[";
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << scalar_text(v[i]);
      out << "]";
      return;
    }
    out << "[\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ",\n";
      out << pad;
      write_value(out, v[i], indent + 2);
    }
    out << "\n" << close << "]";
  } else {
    out << scalar_text(v);
  }
}

void write_compact(std::ostream& out, const ReportDocument& v) {
  if (v.is_object()) {
    out << "{";
    bool first = true;
    for (auto it = v.begin(); it != v.end(); ++it) {
      out << (first ? "" : ",") << ReportDocument(it.key()).dump() << ":";
      first = false;
      write_compact(out, it.value());
    }
    out << "}";
  } else if (v.is_array()) {
    out << "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << (i ? "," : "");
      write_compact(out, v[i]);
    }
    out << "]";
  } else {
    out << scalar_text(v);
  }
}

std::string csv_cell(const ReportDocument& v) {
  std::string s;
  if (v.is_string()) {
    s = v.get<std::string>();
  } else if (v.is_null()) {
    return "";
  } else if (v.is_primitive()) {
    return scalar_text(v);
  } else {
    std::ostringstream o;
    write_compact(o, v);
    s = o.str();
  }
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string to_json_text(const ReportDocument& doc) {
  std::ostringstream out;
  write_value(out, doc, 0);
  out << "\n";
  return out.str();
}

std::string to_csv_text(const ReportDocument& table) {
  if (!table.is_array()) throw std::invalid_argument("a CSV table must be an array of objects");
  std::vector<std::string> header;
  for (const auto& row : table) {
    if (!row.is_object()) throw std::invalid_argument("a CSV table must be an array of objects");
    for (auto it = row.begin(); it != row.end(); ++it)
      if (std::find(header.begin(), header.end(), it.key()) == header.end()) header.push_back(it.key());
  }
  std::string out;
  for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + csv_cell(header[k]);
  out += "\n";
  for (const auto& row : table) {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (k) out += ",";
      if (row.contains(header[k])) out += csv_cell(row[header[k]]);
    }
    out += "\n";
  }
  return out;
}

std::vector<std::pair<std::string, const ReportDocument*>> report_tables(const ReportDocument& doc) {
  std::vector<std::pair<std::string, const ReportDocument*>> out;
  if (doc.contains("rows")) out.emplace_back("rows", &doc["rows"]);
  if (doc.contains("tables"))
    for (auto it = doc["tables"].begin(); it != doc["tables"].end(); ++it) out.emplace_back(it.key(), &it.value());
  return out;
}

void emit_report(const ReportDocument& doc, ReportFormat format, const std::filesystem::path& path) {
  if (format == ReportFormat::json) {
    write_file(path, to_json_text(doc));
    return;
  }
  for (const auto& [name, table] : report_tables(doc)) {
    auto target = path;
    if (name != "rows") target.replace_filename(path.stem().string() + "." + name + ".csv");
    write_file(target, to_csv_text(*table));
  }
}

ReportDocument read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report '" + path.string() + "'");
  try {
    return ReportDocument::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("'" + path.string() + "' is not a JSON report: " + e.what());
  }
}

}  // namespace hsmlab
