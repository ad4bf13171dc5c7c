#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "motorfm/dataio.hpp"
#include "motorfm/signal.hpp"

namespace motorfm {

/// Deterministic map from a C x L window to a feature vector.
class Extractor {
 public:
  virtual ~Extractor() = default;

  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual std::size_t dim(std::size_t channels, std::size_t length) const = 0;
  /// `out` must hold dim(channels, length) values.
  virtual void transform(const SampleView& sample, std::span<double> out) const = 0;

  [[nodiscard]] Eigen::VectorXd operator()(const SampleView& sample) const;
};

/// Row-major flattening, no scaling.
class RawFlatten final : public Extractor {
 public:
  [[nodiscard]] std::string id() const override { return "raw"; }
  [[nodiscard]] std::size_t dim(std::size_t channels, std::size_t length) const override {
    return channels * length;
  }
  void transform(const SampleView& sample, std::span<double> out) const override;
};

/// Eight summary statistics per channel, channel-major:
/// mean, std, RMS, skewness, excess kurtosis, crest factor,
/// dominant DFT bin, fraction of spectral energy above bin L/4.
///
/// A constant channel has skewness and kurtosis 0 and crest factor 1.
class StatFeatures final : public Extractor {
 public:
  static constexpr std::size_t kPerChannel = 8;

  [[nodiscard]] std::string id() const override { return "stat"; }
  [[nodiscard]] std::size_t dim(std::size_t channels, std::size_t) const override {
    return kPerChannel * channels;
  }
  void transform(const SampleView& sample, std::span<double> out) const override;
};

/// Fixed Gaussian projection P (D x C*L, entries N(0, 1/(C*L))) drawn once per
/// input shape from the seed.
class RandomProjection final : public Extractor {
 public:
  RandomProjection(std::size_t output_dim, std::uint64_t seed);

  [[nodiscard]] std::string id() const override;
  [[nodiscard]] std::size_t dim(std::size_t, std::size_t) const override { return output_dim_; }
  void transform(const SampleView& sample, std::span<double> out) const override;

  [[nodiscard]] Eigen::MatrixXd projection(std::size_t channels, std::size_t length) const;

 private:
  const Eigen::MatrixXd& cached_projection(std::size_t input_dim) const;

  std::size_t output_dim_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  mutable Eigen::MatrixXd cache_;
};

Eigen::VectorXd raw_flatten(const SampleView& sample);
Eigen::VectorXd stat_features(const SampleView& sample);
Eigen::VectorXd random_projection(const SampleView& sample, std::size_t output_dim,
                                  std::uint64_t seed);

/// Parses "raw", "stat" or "randproj:<D>:<seed>".
std::unique_ptr<Extractor> make_extractor(std::string_view spec);

/// Applies the extractor to every window. Throws FormatError naming the first
/// sample that produced a non-finite feature.
FeatureBundle extract_all(const Extractor& extractor, const WindowedDataset& dataset);

}  // namespace motorfm
