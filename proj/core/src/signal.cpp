#include "motorfm/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "byte_io.hpp"
#include "hashing.hpp"
#include "motorfm/error.hpp"
#include "motorfm/rng.hpp"

namespace motorfm {

double fault_ratio(double stator_ohm, double bypass_ohm) {
  if (!(stator_ohm > 0.0)) throw DomainError("fault_ratio: stator resistance must be positive");
  if (!(bypass_ohm >= 0.0)) throw DomainError("fault_ratio: bypass resistance must be non-negative");
  return stator_ohm / (stator_ohm + bypass_ohm) * 100.0;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

std::uint64_t to_millihertz(double rate_hz) {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw DomainError("resample: sample rates must be positive and finite");
  }
  return static_cast<std::uint64_t>(std::llround(rate_hz * 1000.0));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::size_t reflect_index(std::ptrdiff_t m, std::size_t len) {
  if (len == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
  m %= period;
  if (m < 0) m += period;
  const auto last = static_cast<std::ptrdiff_t>(len - 1);
  return static_cast<std::size_t>(m <= last ? m : period - m);
}

}  // namespace

Resampler::Resampler(double src_rate_hz, double dst_rate_hz) {
  const auto src = to_millihertz(src_rate_hz);
  const auto dst = to_millihertz(dst_rate_hz);
  const auto g = std::gcd(src, dst);
  up_ = static_cast<std::size_t>(dst / g);
  down_ = static_cast<std::size_t>(src / g);
  if (up_ == down_) return;

  const std::size_t slow = std::max(up_, down_);
  half_ = kTapsPerPhase / 2 * slow;
  const double cutoff = 0.5 / static_cast<double>(slow);  // cycles per upsampled sample
  const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
  const auto half = static_cast<std::ptrdiff_t>(half_);
  const auto up = static_cast<std::ptrdiff_t>(up_);

  auto prototype = [&](std::ptrdiff_t n) {
    const double r = static_cast<double>(n) / static_cast<double>(half);
    const double w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    return 2.0 * cutoff * sinc(2.0 * cutoff * static_cast<double>(n)) * w;
  };

  // Output j sits at upsampled position u = j*down = q*up + ph and reads
  // x[q - i] through tap h(ph + i*up) for every i with |ph + i*up| <= half.
  phases_.resize(up_);
  for (std::ptrdiff_t ph = 0; ph < up; ++ph) {
    auto& phase = phases_[static_cast<std::size_t>(ph)];
    const auto lo = -half - ph;
    const auto hi = half - ph;
    const std::ptrdiff_t i_min = lo >= 0 ? (lo + up - 1) / up : -((-lo) / up);
    const std::ptrdiff_t i_max = hi >= 0 ? hi / up : -((-hi + up - 1) / up);
    phase.first_offset = i_min;
    for (auto i = i_min; i <= i_max; ++i) phase.taps.push_back(prototype(ph + i * up));
    const double sum = std::accumulate(phase.taps.begin(), phase.taps.end(), 0.0);
    for (auto& t : phase.taps) t /= sum;
  }
}

__extension__ using Wide = unsigned __int128;

std::size_t Resampler::output_length(std::size_t input_length) const {
  return static_cast<std::size_t>(static_cast<Wide>(input_length) * up_ / down_);
}

std::size_t Resampler::edge_samples() const {
  if (up_ == down_) return 0;
  return (half_ + down_ - 1) / down_;
}

std::vector<double> Resampler::operator()(std::span<const double> input) const {
  if (input.empty()) throw DomainError("resample: empty input");
  if (up_ == down_) return {input.begin(), input.end()};

  const std::size_t out_len = output_length(input.size());
  std::vector<double> out(out_len);
  const auto len = input.size();
  for (std::size_t j = 0; j < out_len; ++j) {
    const auto u = static_cast<Wide>(j) * down_;
    const auto q = static_cast<std::ptrdiff_t>(u / up_);
    const auto& phase = phases_[static_cast<std::size_t>(u % up_)];
    double acc = 0.0;
    const auto n_taps = static_cast<std::ptrdiff_t>(phase.taps.size());
    const auto m_hi = q - phase.first_offset;  // index paired with taps[0]
    if (m_hi - (n_taps - 1) >= 0 && m_hi < static_cast<std::ptrdiff_t>(len)) {
      const double* x = input.data() + m_hi;
      for (std::ptrdiff_t k = 0; k < n_taps; ++k) acc += phase.taps[static_cast<std::size_t>(k)] * x[-k];
    } else {
      for (std::ptrdiff_t k = 0; k < n_taps; ++k) {
        acc += phase.taps[static_cast<std::size_t>(k)] * input[reflect_index(m_hi - k, len)];
      }
    }
    out[j] = acc;
  }
  return out;
}

std::vector<double> resample(std::span<const double> channel, double src_rate_hz,
                             double dst_rate_hz) {
  return Resampler(src_rate_hz, dst_rate_hz)(channel);
}

SignalRecord align_and_stack(const SignalRecord& record, double dst_rate_hz,
                             std::size_t expected_channels) {
  if (record.channels.size() != expected_channels) {
    throw ConfigError("record has " + std::to_string(record.channels.size()) +
                      " channels, configuration expects " + std::to_string(expected_channels));
  }
  record.validate();
  SignalRecord out;
  out.label = record.label;
  out.meta = record.meta;
  std::size_t shortest = SIZE_MAX;
  for (const auto& ch : record.channels) {
    Channel aligned{ch.name, dst_rate_hz, resample(ch.samples, ch.rate_hz, dst_rate_hz)};
    shortest = std::min(shortest, aligned.samples.size());
    out.channels.push_back(std::move(aligned));
  }
  for (auto& ch : out.channels) ch.samples.resize(shortest);
  return out;
}

// ---------------------------------------------------------------------------
// Windowed datasets

SampleView WindowedDataset::sample(std::size_t i) const {
  return SampleView(values.data() + i * sample_stride(), static_cast<Eigen::Index>(channels),
                    static_cast<Eigen::Index>(length));
}

void WindowedDataset::append_from(const WindowedDataset& other, std::size_t i) {
  const auto stride = other.sample_stride();
  values.insert(values.end(), other.values.begin() + static_cast<std::ptrdiff_t>(i * stride),
                other.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
  labels.push_back(other.labels[i]);
  ids.push_back(other.ids[i]);
}

WindowedDataset WindowedDataset::empty_like() const {
  WindowedDataset out;
  out.channels = channels;
  out.length = length;
  out.num_classes = num_classes;
  out.lineage = lineage;
  return out;
}

std::vector<std::size_t> WindowedDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (auto label : labels) {
    if (label >= counts.size()) counts.resize(label + 1, 0);
    ++counts[label];
  }
  return counts;
}

std::size_t window_count(std::size_t record_length, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0) throw DomainError("window: length and stride must be positive");
  return record_length < length ? 0 : (record_length - length) / stride + 1;
}

WindowedDataset window(const SignalRecord& record, std::size_t length, std::size_t stride,
                       std::uint64_t num_classes, std::uint64_t first_id) {
  WindowedDataset ds;
  ds.channels = record.channels.size();
  ds.length = length;
  ds.num_classes = num_classes;
  std::size_t shortest = record.channels.empty() ? 0 : SIZE_MAX;
  for (const auto& ch : record.channels) shortest = std::min(shortest, ch.samples.size());
  const auto count = window_count(shortest, length, stride);
  ds.values.reserve(count * ds.sample_stride());
  for (std::size_t w = 0; w < count; ++w) {
    const auto start = w * stride;
    for (const auto& ch : record.channels) {
      ds.values.insert(ds.values.end(), ch.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       ch.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
    }
    ds.labels.push_back(record.label);
    ds.ids.push_back(first_id + w);
  }
  return ds;
}

WindowedDataset window_records(std::span<const SignalRecord> records, std::size_t length,
                               std::size_t stride, std::uint64_t num_classes) {
  WindowedDataset all;
  all.length = length;
  all.num_classes = num_classes;
  std::uint64_t next_id = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto part = window(records[r], length, stride, num_classes, next_id);
    if (r == 0) {
      all.channels = part.channels;
    } else if (part.channels != all.channels) {
      throw ConfigError("record " + std::to_string(r) + " has " + std::to_string(part.channels) +
                        " channels, expected " + std::to_string(all.channels));
    }
    next_id += part.size();
    all.values.insert(all.values.end(), part.values.begin(), part.values.end());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    all.ids.insert(all.ids.end(), part.ids.begin(), part.ids.end());
  }
  return all;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const WindowedDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_counts().size());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

}  // namespace

std::vector<WindowedDataset> partition(const WindowedDataset& dataset,
                                       std::span<const double> fractions, std::uint64_t seed,
                                       std::span<const std::string> names) {
  const auto parts = fractions.size();
  if (parts == 0 || names.size() != parts) throw DomainError("partition: need one name per fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw DomainError("partition: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("partition: fractions sum to " + std::to_string(total) + ", not 1");
  }

  const auto by_class = indices_by_class(dataset);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty() && by_class[c].size() < parts) {
      throw DomainError("partition: class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " samples, fewer than " +
                        std::to_string(parts) + " partitions");
    }
  }

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> members(parts);
  for (auto idx : by_class) {
    if (idx.empty()) continue;
    const auto n = idx.size();
    std::vector<std::size_t> counts(parts);
    std::vector<double> remainders(parts);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      const double quota = static_cast<double>(n) * fractions[p];
      counts[p] = static_cast<std::size_t>(std::floor(quota));
      remainders[p] = quota - static_cast<double>(counts[p]);
      assigned += counts[p];
    }
    std::vector<std::size_t> order(parts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % parts]];

    rng.shuffle(std::span(idx));
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      members[p].insert(members[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[p]));
      pos += counts[p];
    }
  }

  std::vector<WindowedDataset> out;
  for (std::size_t p = 0; p < parts; ++p) {
    std::sort(members[p].begin(), members[p].end());
    auto ds = dataset.empty_like();
    ds.lineage = Lineage{names[p], dataset.lineage.ratio, seed};
    ds.values.reserve(members[p].size() * dataset.sample_stride());
    for (auto i : members[p]) ds.append_from(dataset, i);
    out.push_back(std::move(ds));
  }
  return out;
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset,
                                                  double train_fraction, double test_fraction,
                                                  std::uint64_t seed) {
  const double fractions[] = {train_fraction, test_fraction};
  const std::string names[] = {"train", "test"};
  auto parts = partition(dataset, fractions, seed, names);
  return {std::move(parts[0]), std::move(parts[1])};
}

WindowedDataset subset(const WindowedDataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("subset: ratio must lie in (0, 1]");
  if (dataset.empty()) throw DomainError("subset: empty dataset");
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (auto idx : indices_by_class(dataset)) {
    if (idx.empty()) continue;
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * ratio)));
    rng.shuffle(std::span(idx));
    chosen.insert(chosen.end(), idx.begin(),
                  idx.begin() + static_cast<std::ptrdiff_t>(std::min(want, idx.size())));
  }
  rng.shuffle(std::span(chosen));
  auto out = dataset.empty_like();
  out.lineage = Lineage{dataset.lineage.split, ratio, seed};
  out.values.reserve(chosen.size() * dataset.sample_stride());
  for (auto i : chosen) out.append_from(dataset, i);
  return out;
}

Digest dataset_hash(const WindowedDataset& dataset) {
  detail::Sha256Stream hasher;
  detail::ByteWriter header;
  header.put_u64(dataset.channels);
  header.put_u64(dataset.length);
  header.put_u64(dataset.size());
  hasher.update(header.bytes());
  detail::ByteWriter chunk;
  constexpr std::size_t kChunk = 1 << 14;
  for (std::size_t i = 0; i < dataset.values.size(); ++i) {
    chunk.put_f64(dataset.values[i]);
    if (chunk.bytes().size() >= kChunk * 8) {
      hasher.update(chunk.bytes());
      chunk.bytes().clear();
    }
  }
  for (auto label : dataset.labels) chunk.put_u32(label);
  hasher.update(chunk.bytes());
  return hasher.finish();
}

std::string membership_csv(const WindowedDataset& dataset) {
  std::ostringstream os;
  os << "id,label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) os << dataset.ids[i] << ',' << dataset.labels[i] << '\n';
  return os.str();
}

std::vector<std::uint8_t> encode_dataset(const WindowedDataset& ds) {
  if (ds.values.size() != ds.size() * ds.sample_stride() || ds.ids.size() != ds.size()) {
    throw FormatError("WNDS: inconsistent dataset shape");
  }
  detail::ByteWriter w;
  w.reserve(64 + ds.values.size() * 8 + ds.size() * 12);
  w.put_tag("WNDS");
  w.put_u8(1);
  w.put_u64(ds.size());
  w.put_u64(ds.channels);
  w.put_u64(ds.length);
  w.put_u64(ds.num_classes);
  w.put_string(ds.lineage.split);
  w.put_f64(ds.lineage.ratio);
  w.put_u64(ds.lineage.seed);
  for (double v : ds.values) w.put_f64(v);
  for (auto label : ds.labels) w.put_u32(label);
  for (auto id : ds.ids) w.put_u64(id);
  return std::move(w.bytes());
}

WindowedDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "WNDS");
  r.expect_tag("WNDS");
  if (const auto version = r.u8(); version != 1) {
    throw FormatError("WNDS: unsupported version " + std::to_string(version));
  }
  WindowedDataset ds;
  const auto n = r.u64();
  ds.channels = static_cast<std::size_t>(r.u64());
  ds.length = static_cast<std::size_t>(r.u64());
  ds.num_classes = r.u64();
  ds.lineage.split = r.string();
  ds.lineage.ratio = r.f64();
  ds.lineage.seed = r.u64();
  const auto stride = static_cast<std::uint64_t>(ds.channels) * ds.length;
  if (stride != 0 && n > r.remaining() / (stride * 8)) throw FormatError("WNDS: truncated sample data");
  if (r.remaining() != n * stride * 8 + n * 12) {
    throw FormatError("WNDS: payload size mismatch (truncated or trailing bytes)");
  }
  ds.values.resize(static_cast<std::size_t>(n * stride));
  for (auto& v : ds.values) v = r.f64();
  ds.labels.resize(static_cast<std::size_t>(n));
  for (auto& label : ds.labels) {
    label = r.u32();
    if (label >= ds.num_classes) throw FormatError("WNDS: label out of range");
  }
  ds.ids.resize(static_cast<std::size_t>(n));
  for (auto& id : ds.ids) id = r.u64();
  return ds;
}

void write_dataset(const WindowedDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(dataset));
}

WindowedDataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

}  // namespace motorfm
