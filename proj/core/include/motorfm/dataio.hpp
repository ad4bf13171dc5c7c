#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "motorfm/record.hpp"

namespace motorfm {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of a byte stream.
Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& digest);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// An n x D feature matrix with aligned class labels and provenance.
struct FeatureBundle {
  Eigen::MatrixXd features;            // n x D
  std::vector<std::uint32_t> labels;   // n entries in [0, num_classes)
  std::uint64_t num_classes = 0;
  std::string extractor_id;
  Digest source_hash{};

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws FormatError on label/row mismatch, out-of-range labels or non-finite features.
  void validate() const;

  bool operator==(const FeatureBundle& other) const;
};

inline constexpr std::uint8_t kBundleVersion = 1;

/// Exact FBND file size for the given dimensions.
std::uint64_t bundle_file_size(std::uint64_t n, std::uint64_t dim, std::uint64_t id_length);

// FBND v1 layout (little-endian):
//   "FBND", u8 version=1, u64 n, u64 D, u64 K,
//   u64 id length + UTF-8 extractor id, 32-byte source hash,
//   n*D f64 row-major features, n u32 labels.
std::vector<std::uint8_t> encode_bundle(const FeatureBundle& bundle);
FeatureBundle decode_bundle(std::span<const std::uint8_t> bytes);
void write_bundle(const FeatureBundle& bundle, const std::filesystem::path& path);
FeatureBundle read_bundle(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// CSV ingestion

struct ChannelColumn {
  std::string column;
  double rate_hz = 0.0;
};

/// JSON form: {"channels":[{"column":..,"rate_hz":..}],
///             "label":{"power_kw":..,"fault_kind":..,"fault_ratio":..}}
struct IngestConfig {
  std::vector<ChannelColumn> channels;
  LabelMeta label;

  static IngestConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Loads one SignalRecord per file, channels in configured order.
std::vector<SignalRecord> ingest_csv(const IngestConfig& config,
                                     std::span<const std::filesystem::path> paths);
SignalRecord parse_csv_record(const IngestConfig& config, std::string_view text,
                              std::string_view source_name = "<csv>");

// ---------------------------------------------------------------------------
// Dataset manifest

/// Maps label metadata to a class id. An entry with no power rating matches
/// every power level, which lets all healthy recordings share one class.
struct ClassMapEntry {
  std::optional<double> power_kw;
  FaultKind fault_kind = FaultKind::normal;
  double fault_ratio = 0.0;
  std::uint32_t class_id = 0;
};

class ClassMap {
 public:
  ClassMap() = default;
  explicit ClassMap(std::vector<ClassMapEntry> entries);

  /// Throws ConfigError unless exactly one entry matches.
  [[nodiscard]] std::uint32_t resolve(const LabelMeta& meta) const;
  [[nodiscard]] std::size_t num_classes() const { return num_classes_; }
  [[nodiscard]] const std::vector<ClassMapEntry>& entries() const { return entries_; }

 private:
  std::vector<ClassMapEntry> entries_;
  std::size_t num_classes_ = 0;
};

struct ManifestRecord {
  std::filesystem::path path;
  std::string format = "srec";                // "srec" or "csv"
  std::vector<ChannelColumn> channels;        // column names used by the csv format
  LabelMeta label;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  ClassMap class_map;

  /// Checks that every record resolves to exactly one class.
  void validate() const;

  static DatasetManifest from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Reads every record named by the manifest (paths relative to `base_dir`)
/// and assigns class labels through the class map.
std::vector<SignalRecord> load_records(const DatasetManifest& manifest,
                                       const std::filesystem::path& base_dir);

}  // namespace motorfm
