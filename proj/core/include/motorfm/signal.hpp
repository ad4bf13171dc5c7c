#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "motorfm/dataio.hpp"
#include "motorfm/record.hpp"

namespace motorfm {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SampleView = Eigen::Map<const RowMatrixXd>;

/// Fault severity in percent: R / (R + R_bypass) * 100.
double fault_ratio(double stator_ohm, double bypass_ohm);

/// Rational polyphase resampler with a Kaiser-windowed sinc low-pass.
///
/// The rate ratio is reduced to up/down (2000 -> 512 Hz gives 32/125). The
/// prototype filter spans 64 samples at the slower of the two rates, cuts off
/// at half the slower Nyquist band and uses beta = 8.6. Each polyphase branch
/// is normalized to unit DC gain. The input is reflect-padded, so the first
/// and last `edge_samples()` outputs see mirrored data.
class Resampler {
 public:
  static constexpr double kKaiserBeta = 8.6;
  static constexpr std::size_t kTapsPerPhase = 64;

  Resampler(double src_rate_hz, double dst_rate_hz);

  [[nodiscard]] std::vector<double> operator()(std::span<const double> input) const;

  [[nodiscard]] std::size_t up() const { return up_; }
  [[nodiscard]] std::size_t down() const { return down_; }
  [[nodiscard]] std::size_t output_length(std::size_t input_length) const;
  /// Output samples at each end whose filter support reaches the padding.
  [[nodiscard]] std::size_t edge_samples() const;

 private:
  struct Phase {
    std::ptrdiff_t first_offset = 0;  // lowest i in x[q - i]
    std::vector<double> taps;
  };

  std::size_t up_ = 1;
  std::size_t down_ = 1;
  std::size_t half_ = 0;
  std::vector<Phase> phases_;
};

/// Convenience wrapper around Resampler. Identity when the rates match.
std::vector<double> resample(std::span<const double> channel, double src_rate_hz,
                             double dst_rate_hz);

/// Resamples every channel to `dst_rate_hz` and truncates to the shortest.
SignalRecord align_and_stack(const SignalRecord& record, double dst_rate_hz,
                             std::size_t expected_channels);

struct Lineage {
  std::string split = "all";
  double ratio = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const Lineage&) const = default;
};

/// Fixed-shape multichannel windows with labels and stable sample ids.
struct WindowedDataset {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::uint64_t num_classes = 0;
  std::vector<double> values;          // n * channels * length, sample-major
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;      // identity of each window across splits/subsets
  Lineage lineage;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] bool empty() const { return labels.empty(); }
  [[nodiscard]] std::size_t sample_stride() const { return channels * length; }
  [[nodiscard]] SampleView sample(std::size_t i) const;

  /// Appends sample `i` of `other` (shapes must match).
  void append_from(const WindowedDataset& other, std::size_t i);
  /// Empty dataset with the same shape, class count and lineage.
  [[nodiscard]] WindowedDataset empty_like() const;
  /// Per-class sample counts, indexed by class id.
  [[nodiscard]] std::vector<std::size_t> class_counts() const;

  bool operator==(const WindowedDataset&) const = default;
};

/// Windows start at 0, stride, 2*stride, ...; a trailing remainder shorter
/// than `length` is dropped. Every channel must have at least the window length
/// for a window to be produced; the shortest channel bounds the count.
WindowedDataset window(const SignalRecord& record, std::size_t length, std::size_t stride,
                       std::uint64_t num_classes, std::uint64_t first_id = 0);

/// Windows several records, numbering ids consecutively in record order.
WindowedDataset window_records(std::span<const SignalRecord> records, std::size_t length,
                               std::size_t stride, std::uint64_t num_classes);

/// floor((len - L)/stride) + 1 for len >= L, else 0.
std::size_t window_count(std::size_t record_length, std::size_t length, std::size_t stride);

/// Stratified partition with largest-remainder rounding per class. Partition
/// members keep their original relative order.
std::vector<WindowedDataset> partition(const WindowedDataset& dataset,
                                       std::span<const double> fractions, std::uint64_t seed,
                                       std::span<const std::string> names);

/// Two-way stratified split into ("train", "test").
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset,
                                                  double train_fraction, double test_fraction,
                                                  std::uint64_t seed);

/// Per-class draw of max(1, round(count * ratio)) samples, returned in a
/// seeded permuted order.
WindowedDataset subset(const WindowedDataset& dataset, double ratio, std::uint64_t seed);

/// SHA-256 over (C, L, n, values, labels) in the WNDS byte order.
Digest dataset_hash(const WindowedDataset& dataset);

/// "id,label" rows, one per sample, in dataset order.
std::string membership_csv(const WindowedDataset& dataset);

// WNDS v1 layout (little-endian):
//   "WNDS", u8 version=1, u64 n, u64 C, u64 L, u64 K,
//   u64 split-name length + name, f64 ratio, u64 seed,
//   n*C*L f64 values, n u32 labels, n u64 ids.
std::vector<std::uint8_t> encode_dataset(const WindowedDataset& dataset);
WindowedDataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const WindowedDataset& dataset, const std::filesystem::path& path);
WindowedDataset read_dataset(const std::filesystem::path& path);

}  // namespace motorfm
