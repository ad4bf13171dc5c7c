#include "motorfm/lora.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "motorfm/error.hpp"
#include "motorfm/rng.hpp"

namespace motorfm {

LoraAdapter::LoraAdapter(Eigen::MatrixXd base, Eigen::MatrixXd a, Eigen::MatrixXd b)
    : base_(std::move(base)), a_(std::move(a)), b_(std::move(b)) {
  if (a_.cols() != base_.cols() || b_.rows() != base_.rows() || a_.rows() != b_.cols()) {
    throw DomainError("lora: factor shapes do not match the base matrix");
  }
  if (a_.rows() > std::min(base_.rows(), base_.cols())) {
    throw DomainError("lora: rank exceeds min(d, k)");
  }
}

Eigen::VectorXd LoraAdapter::forward(const Eigen::VectorXd& x) const {
  if (x.size() != in_dim()) throw DomainError("lora: input has dimension " + std::to_string(x.size()) +
                                              ", expected " + std::to_string(in_dim()));
  Eigen::VectorXd out = base_ * x;
  out.noalias() += b_ * (a_ * x);
  return out;
}

Eigen::MatrixXd LoraAdapter::forward_rows(const Eigen::MatrixXd& x) const {
  if (x.cols() != in_dim()) throw DomainError("lora: input dimension mismatch");
  Eigen::MatrixXd out = x * base_.transpose();
  out.noalias() += (x * a_.transpose()) * b_.transpose();
  return out;
}

Eigen::MatrixXd LoraAdapter::merge() const { return base_ + b_ * a_; }

LoraAdapter lora_init(Eigen::MatrixXd base, std::size_t rank, std::uint64_t seed) {
  const auto limit = static_cast<std::size_t>(std::min(base.rows(), base.cols()));
  if (rank > limit) {
    throw DomainError("lora: rank " + std::to_string(rank) + " exceeds min(d, k) = " + std::to_string(limit));
  }
  const auto r = static_cast<Eigen::Index>(rank);
  Rng rng(seed);
  const double stddev = rank > 0 ? 1.0 / std::sqrt(static_cast<double>(rank)) : 0.0;
  Eigen::MatrixXd a(r, base.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = stddev * rng.normal();
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(base.rows(), r);
  return LoraAdapter(std::move(base), std::move(a), std::move(b));
}

ParamCounts param_counts(std::uint64_t d, std::uint64_t k, std::uint64_t r) {
  if (d == 0 || k == 0) throw DomainError("param_counts: dimensions must be positive");
  return {r * (d + k), d * k};
}

TuneMode TuneMode::parse(std::string_view text) {
  if (text == "frozen") return {Kind::frozen, 0};
  if (text == "full") return {Kind::full, 0};
  if (text.starts_with("lora:")) {
    const auto digits = text.substr(5);
    std::size_t r = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), r);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && r > 0) return {Kind::lora, r};
  }
  throw ConfigError("unknown fine-tuning mode \"" + std::string(text) + "\" (lora:<r>|full|frozen)");
}

std::string TuneMode::str() const {
  switch (kind) {
    case Kind::frozen:
      return "frozen";
    case Kind::full:
      return "full";
    case Kind::lora:
      return "lora:" + std::to_string(rank);
  }
  return "frozen";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning rate must be a finite non-negative number");
  }
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (hidden == 0) throw ConfigError("train: hidden width must be positive");
}

// ---------------------------------------------------------------------------

AdaptedClassifier AdaptedClassifier::create(std::size_t in_dim, std::size_t hidden,
                                            std::size_t num_classes, TuneMode mode,
                                            std::uint64_t seed) {
  if (in_dim == 0 || hidden == 0 || num_classes == 0) {
    throw DomainError("classifier: dimensions must be positive");
  }
  AdaptedClassifier m;
  m.mode_ = mode;
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(hidden);
  const auto k = static_cast<Eigen::Index>(in_dim);
  const auto classes = static_cast<Eigen::Index>(num_classes);
  m.base_.resize(d, k);
  const double w_std = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m.base_(i, j) = w_std * rng.normal();
  }
  m.head_.resize(classes, d);
  const double h_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < classes; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m.head_(i, j) = h_std * rng.normal();
  }
  m.bias_ = Eigen::VectorXd::Zero(classes);
  if (mode.kind == TuneMode::Kind::lora) {
    m.adapter_.emplace(lora_init(m.base_, mode.rank, seed ^ 0x9e3779b97f4a7c15ULL));
  }
  m.mean_ = Eigen::RowVectorXd::Zero(k);
  m.scale_ = Eigen::RowVectorXd::Ones(k);
  return m;
}

Eigen::MatrixXd AdaptedClassifier::hidden(const Eigen::MatrixXd& x) const {
  if (adapter_) return adapter_->forward_rows(x);
  if (x.cols() != base_.cols()) throw DomainError("classifier: input dimension mismatch");
  return x * base_.transpose();
}

Eigen::MatrixXd AdaptedClassifier::logits(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = hidden(x) * head_.transpose();
  z.rowwise() += bias_.transpose();
  return z;
}

namespace {

// Row-wise softmax in place; returns the mean negative log-likelihood.
double softmax_nll(Eigen::MatrixXd& z, std::span<const std::uint32_t> y) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double top = z.row(i).maxCoeff();
    z.row(i).array() -= top;
    const double log_norm = std::log(z.row(i).array().exp().sum());
    nll -= z(i, y[static_cast<std::size_t>(i)]) - log_norm;
    z.row(i) = (z.row(i).array() - log_norm).exp().matrix();
  }
  return nll / static_cast<double>(z.rows());
}

}  // namespace

double AdaptedClassifier::loss(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y) const {
  Eigen::MatrixXd z = logits(x);
  return softmax_nll(z, y);
}

AdaptedClassifier::Gradients AdaptedClassifier::loss_and_gradients(
    const Eigen::MatrixXd& x, std::span<const std::uint32_t> y) const {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DomainError("classifier: label count mismatch");
  const Eigen::MatrixXd h = hidden(x);
  Eigen::MatrixXd p = h * head_.transpose();
  p.rowwise() += bias_.transpose();

  Gradients g;
  g.loss = softmax_nll(p, y);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  p *= inv_n;  // d loss / d logits

  g.head = p.transpose() * h;
  g.bias = p.colwise().sum().transpose();
  const Eigen::MatrixXd dh = p * head_;  // n x d
  switch (mode_.kind) {
    case TuneMode::Kind::lora: {
      const auto& ad = *adapter_;
      g.b = dh.transpose() * (x * ad.a().transpose());
      g.a = (dh * ad.b()).transpose() * x;
      break;
    }
    case TuneMode::Kind::full:
      g.weight = dh.transpose() * x;
      break;
    case TuneMode::Kind::frozen:
      break;
  }
  return g;
}

void AdaptedClassifier::apply(const Gradients& grads, double learning_rate) {
  head_ -= learning_rate * grads.head;
  bias_ -= learning_rate * grads.bias;
  switch (mode_.kind) {
    case TuneMode::Kind::lora:
      adapter_->a() -= learning_rate * grads.a;
      adapter_->b() -= learning_rate * grads.b;
      break;
    case TuneMode::Kind::full:
      base_ -= learning_rate * grads.weight;
      break;
    case TuneMode::Kind::frozen:
      break;
  }
}

void AdaptedClassifier::set_standardization(Eigen::RowVectorXd mean, Eigen::RowVectorXd scale) {
  if (mean.size() != base_.cols() || scale.size() != base_.cols()) {
    throw DomainError("classifier: standardization size mismatch");
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

Eigen::MatrixXd AdaptedClassifier::prepare(const Eigen::MatrixXd& raw_features) const {
  if (raw_features.cols() != base_.cols()) throw DomainError("classifier: input dimension mismatch");
  Eigen::MatrixXd x = raw_features.rowwise() - mean_;
  return x.array().rowwise() / scale_.array();
}

Labels AdaptedClassifier::predict(const Eigen::MatrixXd& raw_features) const {
  return argmax_rows(logits(prepare(raw_features)), 0.0);
}

std::uint64_t AdaptedClassifier::adapter_trainable() const {
  const auto counts = param_counts(hidden_dim(), in_dim(), mode_.rank);
  switch (mode_.kind) {
    case TuneMode::Kind::lora:
      return counts.lora;
    case TuneMode::Kind::full:
      return counts.full;
    case TuneMode::Kind::frozen:
      return 0;
  }
  return 0;
}

std::uint64_t AdaptedClassifier::head_trainable() const {
  return static_cast<std::uint64_t>(head_.size() + bias_.size());
}

Eigen::MatrixXd AdaptedClassifier::feature_map() const {
  return adapter_ ? adapter_->merge() : base_;
}

// ---------------------------------------------------------------------------

TrainResult train_classifier(const FeatureBundle& features, const TrainConfig& config) {
  config.validate();
  features.validate();
  const auto n = features.size();
  if (n == 0) throw DomainError("train: empty feature bundle");
  std::size_t num_classes = static_cast<std::size_t>(features.num_classes);
  for (auto label : features.labels) num_classes = std::max<std::size_t>(num_classes, label + 1);

  auto model = AdaptedClassifier::create(features.dim(), config.hidden, num_classes, config.mode,
                                         config.seed);
  if (config.standardize) {
    const Eigen::RowVectorXd mean = features.features.colwise().mean();
    Eigen::RowVectorXd scale =
        ((features.features.rowwise() - mean).array().square().colwise().sum() /
         static_cast<double>(n)).sqrt().matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
      if (!(scale(j) > 0.0)) scale(j) = 1.0;
    }
    model.set_standardization(mean, scale);
  }
  const Eigen::MatrixXd x = model.prepare(features.features);

  TrainResult result{model, {}, model.loss(x, features.labels)};
  auto& m = result.model;
  Rng schedule(config.seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd batch;
  std::vector<std::uint32_t> batch_labels;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    schedule.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const auto stop = std::min(n, start + config.batch_size);
      batch.resize(static_cast<Eigen::Index>(stop - start), x.cols());
      batch_labels.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
        batch_labels[i - start] = features.labels[order[i]];
      }
      const auto grads = m.loss_and_gradients(batch, batch_labels);
      if (!std::isfinite(grads.loss)) {
        throw TrainingDiverged("train: non-finite loss in epoch " + std::to_string(epoch) +
                               " (learning rate " + std::to_string(config.learning_rate) + ")");
      }
      m.apply(grads, config.learning_rate);
    }
    const double epoch_loss = m.loss(x, features.labels);
    if (!std::isfinite(epoch_loss)) {
      throw TrainingDiverged("train: non-finite loss after epoch " + std::to_string(epoch) +
                             " (learning rate " + std::to_string(config.learning_rate) + ")");
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

}  // namespace motorfm
