#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

/// Report serialization. Output is a pure function of the document: keys keep
/// insertion order, floats are printed with 17 significant digits and
/// non-finite values become null.
namespace hsmlab {

using ReportDocument = nlohmann::ordered_json;

enum class ReportFormat { json, csv };

/// Two-space indented JSON with a trailing newline.
std::string to_json_text(const ReportDocument& doc);

/// A table (array of flat objects) as CSV. The header is the union of keys
/// in first-seen order; missing cells are empty, nested values are written
/// as compact JSON in a quoted cell.
std::string to_csv_text(const ReportDocument& table);

/// The tables of a report: "rows" plus every entry of "tables", by name.
std::vector<std::pair<std::string, const ReportDocument*>> report_tables(const ReportDocument& doc);

/// Writes the JSON text, or one CSV per table: the rows table to `path` and
/// table T to <stem>.T.csv next to it.
void emit_report(const ReportDocument& doc, ReportFormat format, const std::filesystem::path& path);

/// Parses a report written by emit_report. Throws std::runtime_error.
ReportDocument read_report(const std::filesystem::path& path);

}  // namespace hsmlab
