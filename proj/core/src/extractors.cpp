#include "motorfm/extractors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "motorfm/error.hpp"
#include "motorfm/rng.hpp"

namespace motorfm {

Eigen::VectorXd Extractor::operator()(const SampleView& sample) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(
      dim(static_cast<std::size_t>(sample.rows()), static_cast<std::size_t>(sample.cols()))));
  transform(sample, std::span(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

void RawFlatten::transform(const SampleView& sample, std::span<double> out) const {
  std::copy(sample.data(), sample.data() + sample.size(), out.begin());
}

void StatFeatures::transform(const SampleView& sample, std::span<double> out) const {
  const auto length = static_cast<std::size_t>(sample.cols());
  if (length < 2) throw DomainError("stat_features: window length must be at least 2");
  thread_local Eigen::FFT<double> fft;
  std::vector<double> row(length);
  std::vector<std::complex<double>> spectrum;
  const double n = static_cast<double>(length);

  for (Eigen::Index c = 0; c < sample.rows(); ++c) {
    for (std::size_t i = 0; i < length; ++i) row[i] = sample(c, static_cast<Eigen::Index>(i));

    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, sum_sq = 0.0, peak = 0.0;
    for (double v : row) {
      const double d = v - mean;
      const double d2 = d * d;
      m2 += d2;
      m3 += d2 * d;
      m4 += d2 * d2;
      sum_sq += v * v;
      peak = std::max(peak, std::abs(v));
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double rms = std::sqrt(sum_sq / n);
    const double scale = std::max(1.0, std::abs(mean));
    const bool constant = m2 <= 1e-24 * scale * scale;

    fft.fwd(spectrum, row);
    const std::size_t nyquist = length / 2;
    std::size_t dominant = 0;
    double best = -1.0, total = 0.0, high = 0.0;
    for (std::size_t b = 0; b <= nyquist; ++b) {
      const double power = std::norm(spectrum[b]);
      if (power > best) {
        best = power;
        dominant = b;
      }
      total += power;
      if (b > length / 4) high += power;
    }

    auto* f = out.data() + static_cast<std::size_t>(c) * kPerChannel;
    f[0] = mean;
    f[1] = std::sqrt(m2);
    f[2] = rms;
    f[3] = constant ? 0.0 : m3 / std::pow(m2, 1.5);
    f[4] = constant ? 0.0 : m4 / (m2 * m2) - 3.0;
    f[5] = rms > 0.0 ? peak / rms : 1.0;
    f[6] = static_cast<double>(dominant);
    f[7] = total > 0.0 ? high / total : 0.0;
  }
}

RandomProjection::RandomProjection(std::size_t output_dim, std::uint64_t seed)
    : output_dim_(output_dim), seed_(seed) {
  if (output_dim == 0) throw DomainError("random_projection: output dimension must be >= 1");
}

std::string RandomProjection::id() const {
  return "randproj:" + std::to_string(output_dim_) + ":" + std::to_string(seed_);
}

Eigen::MatrixXd RandomProjection::projection(std::size_t channels, std::size_t length) const {
  const auto input_dim = channels * length;
  Rng rng(seed_);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(input_dim));
  Eigen::MatrixXd p(static_cast<Eigen::Index>(output_dim_), static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = stddev * rng.normal();
  }
  return p;
}

const Eigen::MatrixXd& RandomProjection::cached_projection(std::size_t input_dim) const {
  std::lock_guard lock(mutex_);
  if (static_cast<std::size_t>(cache_.cols()) != input_dim) cache_ = projection(1, input_dim);
  return cache_;
}

void RandomProjection::transform(const SampleView& sample, std::span<double> out) const {
  const auto input_dim = static_cast<std::size_t>(sample.size());
  const auto& p = cached_projection(input_dim);
  Eigen::Map<const Eigen::VectorXd> x(sample.data(), sample.size());
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())).noalias() = p * x;
}

Eigen::VectorXd raw_flatten(const SampleView& sample) { return RawFlatten{}(sample); }
Eigen::VectorXd stat_features(const SampleView& sample) { return StatFeatures{}(sample); }
Eigen::VectorXd random_projection(const SampleView& sample, std::size_t output_dim,
                                  std::uint64_t seed) {
  return RandomProjection(output_dim, seed)(sample);
}

namespace {

std::uint64_t parse_u64(std::string_view text, std::string_view spec) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("bad extractor spec \"" + std::string(spec) + "\"");
  }
  return v;
}

}  // namespace

std::unique_ptr<Extractor> make_extractor(std::string_view spec) {
  if (spec == "raw") return std::make_unique<RawFlatten>();
  if (spec == "stat") return std::make_unique<StatFeatures>();
  if (spec.starts_with("randproj:")) {
    auto rest = spec.substr(9);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("extractor spec must be randproj:<D>:<seed>, got \"" + std::string(spec) + "\"");
    }
    return std::make_unique<RandomProjection>(
        static_cast<std::size_t>(parse_u64(rest.substr(0, colon), spec)),
        parse_u64(rest.substr(colon + 1), spec));
  }
  throw ConfigError("unknown extractor \"" + std::string(spec) + "\" (raw|stat|randproj:<D>:<seed>)");
}

FeatureBundle extract_all(const Extractor& extractor, const WindowedDataset& dataset) {
  FeatureBundle bundle;
  const auto d = extractor.dim(dataset.channels, dataset.length);
  bundle.features.resize(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(d));
  std::vector<double> row(d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    extractor.transform(dataset.sample(i), row);
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::isfinite(row[j])) {
        throw FormatError(extractor.id() + ": non-finite feature " + std::to_string(j) +
                          " for sample " + std::to_string(i));
      }
      bundle.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  bundle.labels = dataset.labels;
  bundle.num_classes = dataset.num_classes;
  bundle.extractor_id = extractor.id();
  bundle.source_hash = dataset_hash(dataset);
  return bundle;
}

}  // namespace motorfm
