#include "motorfm/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "byte_io.hpp"
#include "motorfm/error.hpp"

namespace motorfm {

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("sha256 failed");
  }
  return out;
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// FBND

void FeatureBundle::validate() const {
  if (labels.size() != size()) {
    throw FormatError("bundle: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(size()) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw FormatError("bundle: label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!features.allFinite()) {
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      if (!features.row(i).allFinite()) {
        throw FormatError("bundle: non-finite feature in row " + std::to_string(i));
      }
    }
  }
}

bool FeatureBundle::operator==(const FeatureBundle& other) const {
  return features.rows() == other.features.rows() && features.cols() == other.features.cols() &&
         features == other.features && labels == other.labels &&
         num_classes == other.num_classes && extractor_id == other.extractor_id &&
         source_hash == other.source_hash;
}

std::uint64_t bundle_file_size(std::uint64_t n, std::uint64_t dim, std::uint64_t id_length) {
  return 4 + 1 + 3 * 8 + 8 + id_length + 32 + 8 * n * dim + 4 * n;
}

std::vector<std::uint8_t> encode_bundle(const FeatureBundle& bundle) {
  bundle.validate();
  const auto n = bundle.size();
  const auto d = bundle.dim();
  detail::ByteWriter w;
  w.reserve(static_cast<std::size_t>(bundle_file_size(n, d, bundle.extractor_id.size())));
  w.put_tag("FBND");
  w.put_u8(kBundleVersion);
  w.put_u64(n);
  w.put_u64(d);
  w.put_u64(bundle.num_classes);
  w.put_string(bundle.extractor_id);
  w.put_bytes(bundle.source_hash);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      w.put_f64(bundle.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  for (auto label : bundle.labels) w.put_u32(label);
  return std::move(w.bytes());
}

FeatureBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "FBND");
  r.expect_tag("FBND");
  if (const auto version = r.u8(); version != kBundleVersion) {
    throw FormatError("FBND: unsupported version " + std::to_string(version));
  }
  const auto n = r.u64();
  const auto d = r.u64();
  FeatureBundle b;
  b.num_classes = r.u64();
  b.extractor_id = r.string();
  auto hash = r.take(32);
  std::copy(hash.begin(), hash.end(), b.source_hash.begin());

  // Guard the size arithmetic before trusting n and d.
  if (d != 0 && n > (UINT64_MAX / 16) / d) throw FormatError("FBND: implausible dimensions");
  const auto expected = bundle_file_size(n, d, b.extractor_id.size());
  if (bytes.size() < expected) {
    throw FormatError("FBND: truncated, expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("FBND: " + std::to_string(bytes.size() - expected) + " trailing bytes");
  }
  b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < b.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.features.cols(); ++j) b.features(i, j) = r.f64();
  }
  b.labels.resize(static_cast<std::size_t>(n));
  for (auto& label : b.labels) label = r.u32();
  b.validate();
  return b;
}

void write_bundle(const FeatureBundle& bundle, const std::filesystem::path& path) {
  write_file_atomic(path, encode_bundle(bundle));
}

FeatureBundle read_bundle(const std::filesystem::path& path) {
  return decode_bundle(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

LabelMeta label_from_json(const nlohmann::json& j) {
  LabelMeta meta;
  meta.power_kw = j.value("power_kw", 1.0);
  meta.fault_kind = parse_fault_kind(j.value("fault_kind", std::string("normal")));
  meta.fault_ratio = j.value("fault_ratio", 0.0);
  return meta;
}

nlohmann::json label_to_json(const LabelMeta& meta) {
  return {{"power_kw", meta.power_kw},
          {"fault_kind", std::string(to_string(meta.fault_kind))},
          {"fault_ratio", meta.fault_ratio}};
}

std::vector<ChannelColumn> channels_from_json(const nlohmann::json& j) {
  std::vector<ChannelColumn> out;
  for (const auto& c : j) {
    ChannelColumn col;
    col.column = c.value("column", std::string());
    col.rate_hz = c.at("rate_hz").get<double>();
    if (!(col.rate_hz > 0.0)) throw ConfigError("channel rate must be positive");
    out.push_back(std::move(col));
  }
  return out;
}

nlohmann::json channels_to_json(const std::vector<ChannelColumn>& channels) {
  auto arr = nlohmann::json::array();
  for (const auto& c : channels) arr.push_back({{"column", c.column}, {"rate_hz", c.rate_hz}});
  return arr;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

IngestConfig IngestConfig::from_json(const nlohmann::json& j) {
  IngestConfig cfg;
  cfg.channels = channels_from_json(j.at("channels"));
  if (cfg.channels.empty()) throw ConfigError("ingest config names no channels");
  if (j.contains("label")) cfg.label = label_from_json(j.at("label"));
  return cfg;
}

nlohmann::json IngestConfig::to_json() const {
  return {{"channels", channels_to_json(channels)}, {"label", label_to_json(label)}};
}

SignalRecord parse_csv_record(const IngestConfig& config, std::string_view text,
                              std::string_view source_name) {
  const std::string src(source_name);
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!trim(line).empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (lines.empty()) throw FormatError(src + ": empty CSV");

  const auto header = split_row(lines.front());
  std::vector<std::size_t> column_index;
  for (const auto& ch : config.channels) {
    auto it = std::find(header.begin(), header.end(), std::string_view(ch.column));
    if (it == header.end()) throw ConfigError(src + ": missing column \"" + ch.column + "\"");
    column_index.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  SignalRecord rec;
  rec.meta = config.label;
  for (const auto& ch : config.channels) {
    rec.channels.push_back(Channel{ch.column, ch.rate_hz, {}});
    rec.channels.back().samples.reserve(lines.size() - 1);
  }
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto cells = split_row(lines[row]);
    if (cells.size() != header.size()) {
      throw FormatError(src + ": row " + std::to_string(row + 1) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < column_index.size(); ++c) {
      const auto cell = cells[column_index[c]];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
        throw FormatError(src + ": non-numeric cell \"" + std::string(cell) + "\" at row " +
                          std::to_string(row + 1) + ", column \"" + config.channels[c].column + "\"");
      }
      rec.channels[c].samples.push_back(v);
    }
  }
  rec.validate();
  return rec;
}

std::vector<SignalRecord> ingest_csv(const IngestConfig& config,
                                     std::span<const std::filesystem::path> paths) {
  std::vector<SignalRecord> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    const auto bytes = read_file_bytes(p);
    out.push_back(parse_csv_record(
        config, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
        p.string()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(b)); }

}  // namespace

ClassMap::ClassMap(std::vector<ClassMapEntry> entries) : entries_(std::move(entries)) {
  std::vector<bool> seen;
  for (const auto& e : entries_) {
    if (e.class_id >= seen.size()) seen.resize(e.class_id + 1, false);
    seen[e.class_id] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw ConfigError("class map ids are not contiguous: missing " + std::to_string(c));
  }
  num_classes_ = seen.size();
}

std::uint32_t ClassMap::resolve(const LabelMeta& meta) const {
  std::optional<std::uint32_t> found;
  std::size_t matches = 0;
  for (const auto& e : entries_) {
    if (e.fault_kind != meta.fault_kind || !same_value(meta.fault_ratio, e.fault_ratio)) continue;
    if (e.power_kw && !same_value(meta.power_kw, *e.power_kw)) continue;
    ++matches;
    found = e.class_id;
  }
  if (matches != 1) {
    std::ostringstream os;
    os << "label (" << meta.power_kw << " kW, " << to_string(meta.fault_kind) << ", "
       << meta.fault_ratio << "%) matches " << matches << " class map entries";
    throw ConfigError(os.str());
  }
  return *found;
}

void DatasetManifest::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      (void)class_map.resolve(records[i].label);
    } catch (const ConfigError& e) {
      throw ConfigError("manifest record " + std::to_string(i) + ": " + e.what());
    }
    if (records[i].format != "srec" && records[i].format != "csv") {
      throw ConfigError("manifest record " + std::to_string(i) + ": unknown format " +
                        records[i].format);
    }
  }
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  std::vector<ClassMapEntry> entries;
  for (const auto& e : j.at("class_map")) {
    ClassMapEntry entry;
    if (e.contains("power_kw") && !e.at("power_kw").is_null()) {
      entry.power_kw = e.at("power_kw").get<double>();
    }
    entry.fault_kind = parse_fault_kind(e.value("fault_kind", std::string("normal")));
    entry.fault_ratio = e.value("fault_ratio", 0.0);
    entry.class_id = e.at("class_id").get<std::uint32_t>();
    entries.push_back(entry);
  }
  m.class_map = ClassMap(std::move(entries));
  for (const auto& r : j.at("records")) {
    ManifestRecord rec;
    rec.path = r.at("path").get<std::string>();
    rec.format = r.value("format", std::string("srec"));
    if (r.contains("channels")) rec.channels = channels_from_json(r.at("channels"));
    rec.label = label_from_json(r.at("label"));
    m.records.push_back(std::move(rec));
  }
  m.validate();
  return m;
}

nlohmann::json DatasetManifest::to_json() const {
  auto cm = nlohmann::json::array();
  for (const auto& e : class_map.entries()) {
    nlohmann::json entry = {{"fault_kind", std::string(to_string(e.fault_kind))},
                            {"fault_ratio", e.fault_ratio},
                            {"class_id", e.class_id}};
    entry["power_kw"] = e.power_kw ? nlohmann::json(*e.power_kw) : nlohmann::json(nullptr);
    cm.push_back(std::move(entry));
  }
  auto recs = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json jr = {{"path", r.path.generic_string()},
                         {"format", r.format},
                         {"label", label_to_json(r.label)}};
    if (!r.channels.empty()) jr["channels"] = channels_to_json(r.channels);
    recs.push_back(std::move(jr));
  }
  return {{"class_map", cm}, {"records", recs}};
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return DatasetManifest::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, manifest.to_json().dump(2) + "\n");
}

std::vector<SignalRecord> load_records(const DatasetManifest& manifest,
                                       const std::filesystem::path& base_dir) {
  std::vector<SignalRecord> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    const auto path = r.path.is_absolute() ? r.path : base_dir / r.path;
    SignalRecord rec;
    if (r.format == "csv") {
      IngestConfig cfg{r.channels, r.label};
      const std::filesystem::path paths[] = {path};
      rec = std::move(ingest_csv(cfg, paths).front());
    } else {
      rec = read_record(path);
    }
    rec.meta = r.label;
    rec.label = manifest.class_map.resolve(r.label);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace motorfm
