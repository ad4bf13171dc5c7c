#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "motorfm/dataio.hpp"
#include "motorfm/error.hpp"
#include "motorfm/record.hpp"
#include "oracles.hpp"

using namespace motorfm;

namespace {

FeatureBundle small_bundle() {
  FeatureBundle b;
  b.features.resize(2, 3);
  b.features << 1.0, -2.5, 3.25, 0.0, 1e-300, -7.0;
  b.labels = {0, 1};
  b.num_classes = 2;
  b.extractor_id = "stat";
  for (std::size_t i = 0; i < b.source_hash.size(); ++i) b.source_hash[i] = static_cast<std::uint8_t>(i);
  return b;
}

FeatureBundle random_bundle(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const auto n = static_cast<Eigen::Index>(1 + gen() % 40);
  const auto d = static_cast<Eigen::Index>(1 + gen() % 12);
  FeatureBundle b;
  b.features = oracle::gaussian(n, d, gen, 3.0);
  b.num_classes = 1 + gen() % 6;
  for (Eigen::Index i = 0; i < n; ++i) b.labels.push_back(static_cast<std::uint32_t>(gen() % b.num_classes));
  b.extractor_id = "randproj:" + std::to_string(seed);
  for (auto& byte : b.source_hash) byte = static_cast<std::uint8_t>(gen());
  return b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("bundle file size follows the header layout") {
  oracle::TempDir dir("fbnd");
  const auto b = small_bundle();
  write_bundle(b, dir / "b.fbnd");
  const auto expected = 4 + 1 + 24 + 8 + b.extractor_id.size() + 32 + 48 + 8;
  CHECK(std::filesystem::file_size(dir / "b.fbnd") == expected);
  CHECK(bundle_file_size(2, 3, b.extractor_id.size()) == expected);
}

TEST_CASE("bundle header bytes") {
  const auto bytes = encode_bundle(small_bundle());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FBND");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);   // n, little-endian
  CHECK(bytes[13] == 3);  // D
  CHECK(bytes[21] == 2);  // K
}

TEST_CASE("bundle round trip is bit-identical") {
  oracle::TempDir dir("fbnd");
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto b = random_bundle(seed);
    write_bundle(b, dir / "r.fbnd");
    const auto back = read_bundle(dir / "r.fbnd");
    CHECK(back == b);
    CHECK(encode_bundle(back) == read_file_bytes(dir / "r.fbnd"));
  }
}

TEST_CASE("bundle with NaN is refused") {
  oracle::TempDir dir("fbnd");
  auto b = small_bundle();
  b.features(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(write_bundle(b, dir / "nan.fbnd"), FormatError);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.fbnd"));
}

TEST_CASE("bundle decode rejects corrupt input") {
  auto bytes = encode_bundle(small_bundle());

  SUBCASE("bad magic") {
    std::copy_n("XXXX", 4, bytes.begin());
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("bad version") {
    bytes[4] = 2;
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("truncated mid-matrix") {
    bytes.resize(bytes.size() - 8 - 20);
    CHECK_THROWS_WITH_AS(decode_bundle(bytes), doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("label out of range") {
    bytes[bytes.size() - 4] = 7;
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
}

TEST_CASE("sha256 matches the FIPS 180-2 vectors") {
  const std::string abc = "abc";
  CHECK(to_hex(sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()})) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(to_hex(sha256({})) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("signal record round trip") {
  oracle::TempDir dir("srec");
  SignalRecord r;
  r.label = 3;
  r.meta = {2.2, FaultKind::inter_coil, 25.0};
  r.channels = {{"ia", 2000.0, {1.0, 2.0, 3.0}}, {"vib", 512.0, {-0.5}}};
  write_record(r, dir / "r.srec");
  CHECK(read_record(dir / "r.srec") == r);

  auto bytes = encode_record(r);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_record(bytes), FormatError);
}

TEST_CASE("csv ingestion") {
  oracle::TempDir dir("csv");
  const auto cfg = IngestConfig::from_json(nlohmann::json::parse(R"({
    "channels": [{"column": "vib", "rate_hz": 512}, {"column": "ia", "rate_hz": 2000},
                 {"column": "ib", "rate_hz": 2000}, {"column": "ic", "rate_hz": 2000}],
    "label": {"power_kw": 1.5, "fault_kind": "inter_turn", "fault_ratio": 10}
  })"));

  auto make_csv = [](std::size_t rows) {
    std::string text = "time,ia,ib,ic,vib\n";
    for (std::size_t i = 0; i < rows; ++i) {
      text += std::to_string(i) + "," + std::to_string(i * 0.5) + ",1,2," + std::to_string(-1.0 * i) + "\n";
    }
    return text;
  };

  SUBCASE("4 channels x 1000 rows in configured order") {
    write_text(dir / "a.csv", make_csv(1000));
    const std::vector<std::filesystem::path> paths{dir / "a.csv"};
    const auto recs = ingest_csv(cfg, paths);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].channels.size() == 4);
    for (const auto& ch : recs[0].channels) CHECK(ch.samples.size() == 1000);
    CHECK(recs[0].channels[0].name == "vib");
    CHECK(recs[0].channels[0].rate_hz == 512.0);
    CHECK(recs[0].channels[0].samples[10] == -10.0);
    CHECK(recs[0].channels[1].samples[10] == 5.0);
    CHECK(recs[0].meta.fault_kind == FaultKind::inter_turn);
  }
  SUBCASE("files of different lengths") {
    write_text(dir / "a.csv", make_csv(100));
    write_text(dir / "b.csv", make_csv(37));
    const std::vector<std::filesystem::path> paths{dir / "a.csv", dir / "b.csv"};
    const auto recs = ingest_csv(cfg, paths);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].channels[0].samples.size() == 100);
    CHECK(recs[1].channels[0].samples.size() == 37);
  }
  SUBCASE("absent column") {
    write_text(dir / "a.csv", "time,ia,ib,ic\n0,1,2,3\n");
    const std::vector<std::filesystem::path> paths{dir / "a.csv"};
    CHECK_THROWS_WITH_AS(ingest_csv(cfg, paths), doctest::Contains("vib"), ConfigError);
  }
  SUBCASE("non-numeric cell") {
    CHECK_THROWS_AS(parse_csv_record(cfg, "time,ia,ib,ic,vib\n0,1,2,x,4\n"), FormatError);
  }
  SUBCASE("ragged rows") {
    CHECK_THROWS_AS(parse_csv_record(cfg, "time,ia,ib,ic,vib\n0,1,2,3,4\n1,2,3\n"), FormatError);
  }
}

TEST_CASE("class map resolution") {
  const ClassMap map({{std::nullopt, FaultKind::normal, 0.0, 0},
                      {1.0, FaultKind::inter_turn, 10.0, 1},
                      {2.0, FaultKind::inter_turn, 10.0, 2}});
  CHECK(map.num_classes() == 3);
  CHECK(map.resolve({3.0, FaultKind::normal, 0.0}) == 0);
  CHECK(map.resolve({2.0, FaultKind::inter_turn, 10.0}) == 2);
  CHECK_THROWS_AS((void)map.resolve({3.0, FaultKind::inter_turn, 10.0}), ConfigError);

  CHECK_THROWS_AS(ClassMap({{std::nullopt, FaultKind::normal, 0.0, 0},
                            {std::nullopt, FaultKind::inter_coil, 50.0, 2}}),
                  ConfigError);
  const ClassMap ambiguous({{std::nullopt, FaultKind::normal, 0.0, 0},
                            {1.0, FaultKind::normal, 0.0, 1}});
  CHECK_THROWS_AS((void)ambiguous.resolve({1.0, FaultKind::normal, 0.0}), ConfigError);
}

TEST_CASE("manifest json round trip and record loading") {
  oracle::TempDir dir("manifest");
  SignalRecord r;
  r.meta = {1.0, FaultKind::inter_coil, 50.0};
  r.channels = {{"ia", 2000.0, {0.1, 0.2}}};
  write_record(r, dir / "rec.srec");

  DatasetManifest m;
  m.class_map = ClassMap({{std::nullopt, FaultKind::normal, 0.0, 0},
                          {std::nullopt, FaultKind::inter_coil, 50.0, 1}});
  m.records.push_back({"rec.srec", "srec", {}, r.meta});
  save_manifest(m, dir / "manifest.json");

  const auto back = load_manifest(dir / "manifest.json");
  CHECK(back.to_json() == m.to_json());
  const auto recs = load_records(back, dir.path());
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].label == 1);
  CHECK(recs[0].channels == r.channels);

  write_text(dir / "bad.json", R"({"class_map":[{"fault_kind":"normal","class_id":0}],
    "records":[{"path":"x","label":{"fault_kind":"inter_turn","fault_ratio":10}}]})");
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), ConfigError);
}
