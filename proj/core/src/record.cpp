#include "motorfm/record.hpp"

#include "byte_io.hpp"
#include "motorfm/dataio.hpp"
#include "motorfm/error.hpp"

namespace motorfm {

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::normal:
      return "normal";
    case FaultKind::inter_turn:
      return "inter-turn";
    case FaultKind::inter_coil:
      return "inter-coil";
  }
  return "normal";
}

FaultKind parse_fault_kind(std::string_view text) {
  if (text == "normal") return FaultKind::normal;
  if (text == "inter-turn" || text == "inter_turn") return FaultKind::inter_turn;
  if (text == "inter-coil" || text == "inter_coil") return FaultKind::inter_coil;
  throw ConfigError("unknown fault kind \"" + std::string(text) + "\"");
}

void SignalRecord::validate() const {
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].samples.empty()) {
      throw ConfigError("channel " + std::to_string(c) + " is empty");
    }
    if (!(channels[c].rate_hz > 0.0)) {
      throw ConfigError("channel " + std::to_string(c) + " has non-positive rate");
    }
  }
}

std::vector<std::uint8_t> encode_record(const SignalRecord& record) {
  detail::ByteWriter w;
  w.put_tag("SREC");
  w.put_u8(1);
  w.put_u32(record.label);
  w.put_f64(record.meta.power_kw);
  w.put_u8(static_cast<std::uint8_t>(record.meta.fault_kind));
  w.put_f64(record.meta.fault_ratio);
  w.put_u64(record.channels.size());
  for (const auto& ch : record.channels) {
    w.put_string(ch.name);
    w.put_f64(ch.rate_hz);
    w.put_u64(ch.samples.size());
    for (double v : ch.samples) w.put_f64(v);
  }
  return std::move(w.bytes());
}

SignalRecord decode_record(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "SREC");
  r.expect_tag("SREC");
  if (const auto version = r.u8(); version != 1) {
    throw FormatError("SREC: unsupported version " + std::to_string(version));
  }
  SignalRecord rec;
  rec.label = r.u32();
  rec.meta.power_kw = r.f64();
  const auto kind = r.u8();
  if (kind > 2) throw FormatError("SREC: bad fault kind " + std::to_string(kind));
  rec.meta.fault_kind = static_cast<FaultKind>(kind);
  rec.meta.fault_ratio = r.f64();
  const auto n_channels = r.u64();
  for (std::uint64_t c = 0; c < n_channels; ++c) {
    Channel ch;
    ch.name = r.string();
    ch.rate_hz = r.f64();
    const auto len = r.u64();
    if (len > r.remaining() / 8) throw FormatError("SREC: truncated channel data");
    ch.samples.resize(static_cast<std::size_t>(len));
    for (auto& v : ch.samples) v = r.f64();
    rec.channels.push_back(std::move(ch));
  }
  if (r.remaining() != 0) throw FormatError("SREC: trailing bytes");
  return rec;
}

void write_record(const SignalRecord& record, const std::filesystem::path& path) {
  write_file_atomic(path, encode_record(record));
}

SignalRecord read_record(const std::filesystem::path& path) {
  return decode_record(read_file_bytes(path));
}

}  // namespace motorfm
