#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace motorfm {

/// A cell whose computation failed in the named stage; rendered "FAIL:<stage>".
struct FailedCell {
  std::string stage;
  bool operator==(const FailedCell&) const = default;
};

using Cell = std::variant<std::monostate, double, std::int64_t, std::string, FailedCell>;

/// Column-stable result table. `config` and `details` are embedded verbatim
/// in the JSON artifact.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json details;

  [[nodiscard]] bool has_failures() const;
};

/// Reals use 4 decimals; empty cells render as "".
std::string render_cell(const Cell& cell);
std::string render_csv(const Table& table);
nlohmann::json render_json(const Table& table);

struct RenderedPaths {
  std::filesystem::path csv;
  std::filesystem::path json;
};

/// Writes <dir>/<stem>.csv and <dir>/<stem>.json atomically.
/// Throws DomainError for a table without rows.
RenderedPaths report_render(const Table& table, const std::filesystem::path& dir,
                            const std::string& stem);

}  // namespace motorfm
