#include "motorfm/report.hpp"

#include <cmath>
#include <cstdio>

#include "motorfm/dataio.hpp"
#include "motorfm/error.hpp"

namespace motorfm {

bool Table::has_failures() const {
  for (const auto& row : rows) {
    for (const auto& cell : row) {
      if (std::holds_alternative<FailedCell>(cell)) return true;
    }
  }
  return false;
}

namespace {

std::string fixed4(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json cell_json(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(v)) return fixed4(v);
          return std::stod(fixed4(v));
        } else if constexpr (std::is_same_v<T, FailedCell>) {
          return "FAIL:" + v.stage;
        } else {
          return v;
        }
      },
      cell);
}

}  // namespace

std::string render_cell(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, double>) {
          return fixed4(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, FailedCell>) {
          return "FAIL:" + v.stage;
        } else {
          return v;
        }
      },
      cell);
}

std::string render_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += csv_field(table.columns[c]);
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw DomainError("report: row width does not match header");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += csv_field(render_cell(row[c]));
    }
    out += '\n';
  }
  return out;
}

nlohmann::json render_json(const Table& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw DomainError("report: row width does not match header");
    nlohmann::json r = nlohmann::json::array();
    for (const auto& cell : row) r.push_back(cell_json(cell));
    rows.push_back(std::move(r));
  }
  nlohmann::json j{{"config", table.config}, {"columns", table.columns}, {"rows", std::move(rows)}};
  if (!table.details.is_null()) j["details"] = table.details;
  return j;
}

RenderedPaths report_render(const Table& table, const std::filesystem::path& dir,
                            const std::string& stem) {
  if (table.rows.empty()) throw DomainError("report: no results to render");
  const std::string csv = render_csv(table);
  const std::string json = render_json(table).dump(2) + "\n";
  if (!dir.empty()) std::filesystem::create_directories(dir);
  RenderedPaths paths{dir / (stem + ".csv"), dir / (stem + ".json")};
  write_file_atomic(paths.csv, csv);
  write_file_atomic(paths.json, json);
  return paths;
}

}  // namespace motorfm
