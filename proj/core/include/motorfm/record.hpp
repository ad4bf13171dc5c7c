#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace motorfm {

enum class FaultKind { normal, inter_turn, inter_coil };

std::string_view to_string(FaultKind kind);
FaultKind parse_fault_kind(std::string_view text);

/// Operating point and fault description of one recording.
struct LabelMeta {
  double power_kw = 1.0;
  FaultKind fault_kind = FaultKind::normal;
  double fault_ratio = 0.0;  // percent

  bool operator==(const LabelMeta&) const = default;
};

struct Channel {
  std::string name;
  double rate_hz = 0.0;
  std::vector<double> samples;

  bool operator==(const Channel&) const = default;
};

/// One multichannel recording. Channels may be sampled at different rates.
struct SignalRecord {
  std::vector<Channel> channels;
  std::uint32_t label = 0;
  LabelMeta meta;

  /// Throws ConfigError if any channel is empty or has a non-positive rate.
  void validate() const;

  bool operator==(const SignalRecord&) const = default;
};

// Per-record binary channel container ("SREC" v1):
//   magic "SREC", u8 version, u32 label, f64 power_kw, u8 fault kind,
//   f64 fault ratio, u64 channel count, then per channel:
//   length-prefixed name, f64 rate, u64 length, length f64 samples.
// All integers and reals little-endian.
std::vector<std::uint8_t> encode_record(const SignalRecord& record);
SignalRecord decode_record(std::span<const std::uint8_t> bytes);
void write_record(const SignalRecord& record, const std::filesystem::path& path);
SignalRecord read_record(const std::filesystem::path& path);

}  // namespace motorfm
