#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "motorfm/dataio.hpp"
#include "motorfm/probes.hpp"

namespace motorfm {

/// Frozen base W0 (d x k) with a trainable low-rank pair B (d x r), A (r x k).
/// The adapted map is W0 + B A; W0 cannot be modified after construction.
class LoraAdapter {
 public:
  LoraAdapter(Eigen::MatrixXd base, Eigen::MatrixXd a, Eigen::MatrixXd b);

  [[nodiscard]] Eigen::Index out_dim() const { return base_.rows(); }
  [[nodiscard]] Eigen::Index in_dim() const { return base_.cols(); }
  [[nodiscard]] Eigen::Index rank() const { return a_.rows(); }

  [[nodiscard]] const Eigen::MatrixXd& base() const { return base_; }
  [[nodiscard]] const Eigen::MatrixXd& a() const { return a_; }
  [[nodiscard]] const Eigen::MatrixXd& b() const { return b_; }
  Eigen::MatrixXd& a() { return a_; }
  Eigen::MatrixXd& b() { return b_; }

  /// W0 x + B (A x), never forming B A.
  [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Row-batch version: X is n x k, result n x d.
  [[nodiscard]] Eigen::MatrixXd forward_rows(const Eigen::MatrixXd& x) const;
  /// W0 + B A as a plain matrix.
  [[nodiscard]] Eigen::MatrixXd merge() const;

 private:
  Eigen::MatrixXd base_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
};

/// A ~ N(0, 1/r) from the seed, B = 0. Throws DomainError if r > min(d, k).
LoraAdapter lora_init(Eigen::MatrixXd base, std::size_t rank, std::uint64_t seed);

struct ParamCounts {
  std::uint64_t lora = 0;  // r (d + k)
  std::uint64_t full = 0;  // d k
};

ParamCounts param_counts(std::uint64_t d, std::uint64_t k, std::uint64_t r);

struct TuneMode {
  enum class Kind { frozen, lora, full };
  Kind kind = Kind::frozen;
  std::size_t rank = 0;

  /// "frozen", "full" or "lora:<r>".
  static TuneMode parse(std::string_view text);
  [[nodiscard]] std::string str() const;
  bool operator==(const TuneMode&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  TuneMode mode;
  std::size_t hidden = 8;     // d, width of the frozen feature map
  bool standardize = true;    // z-score inputs with training statistics

  void validate() const;
};

/// Frozen random linear feature map (optionally LoRA-adapted or fully
/// trainable) followed by a trainable softmax head.
///
///   h = W x            (W = W0, W0 + B A, or a trainable copy of W0)
///   logits = H h + b
///
/// W0 has entries N(0, 1/k) and H entries N(0, 1/d) drawn from the seed, so
/// all modes with the same seed start from the same function.
class AdaptedClassifier {
 public:
  static AdaptedClassifier create(std::size_t in_dim, std::size_t hidden, std::size_t num_classes,
                                  TuneMode mode, std::uint64_t seed);

  struct Gradients {
    double loss = 0.0;
    Eigen::MatrixXd head;    // K x d
    Eigen::VectorXd bias;    // K
    Eigen::MatrixXd a;       // lora only
    Eigen::MatrixXd b;       // lora only
    Eigen::MatrixXd weight;  // full only
  };

  /// Mean softmax cross-entropy over the rows of x (already standardized)
  /// and its gradients with respect to every parameter of the model.
  [[nodiscard]] Gradients loss_and_gradients(const Eigen::MatrixXd& x,
                                             std::span<const std::uint32_t> y) const;
  [[nodiscard]] double loss(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y) const;
  /// Gradient step on the parameters the mode trains.
  void apply(const Gradients& grads, double learning_rate);

  [[nodiscard]] Eigen::MatrixXd hidden(const Eigen::MatrixXd& x) const;
  [[nodiscard]] Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  /// Applies the stored input standardization, then predicts.
  [[nodiscard]] Labels predict(const Eigen::MatrixXd& raw_features) const;
  [[nodiscard]] Eigen::MatrixXd prepare(const Eigen::MatrixXd& raw_features) const;

  void set_standardization(Eigen::RowVectorXd mean, Eigen::RowVectorXd scale);

  [[nodiscard]] const TuneMode& mode() const { return mode_; }
  [[nodiscard]] std::size_t in_dim() const { return static_cast<std::size_t>(base_.cols()); }
  [[nodiscard]] std::size_t hidden_dim() const { return static_cast<std::size_t>(base_.rows()); }
  [[nodiscard]] std::size_t num_classes() const { return static_cast<std::size_t>(head_.rows()); }

  /// Trainable parameters in the feature map: r(d+k), d k, or 0.
  [[nodiscard]] std::uint64_t adapter_trainable() const;
  /// Head parameters K d + K.
  [[nodiscard]] std::uint64_t head_trainable() const;

  /// Effective feature map (merged for LoRA).
  [[nodiscard]] Eigen::MatrixXd feature_map() const;

  Eigen::MatrixXd& head() { return head_; }
  Eigen::VectorXd& bias() { return bias_; }
  [[nodiscard]] const Eigen::MatrixXd& head() const { return head_; }
  [[nodiscard]] const Eigen::VectorXd& bias() const { return bias_; }
  /// Present only in lora mode.
  std::optional<LoraAdapter>& adapter() { return adapter_; }
  [[nodiscard]] const std::optional<LoraAdapter>& adapter() const { return adapter_; }
  /// W0 in frozen/lora mode, the trained copy in full mode.
  Eigen::MatrixXd& weight() { return base_; }
  [[nodiscard]] const Eigen::MatrixXd& weight() const { return base_; }

 private:
  TuneMode mode_;
  Eigen::MatrixXd base_;
  std::optional<LoraAdapter> adapter_;
  Eigen::MatrixXd head_;
  Eigen::VectorXd bias_;
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
};

struct TrainResult {
  AdaptedClassifier model;
  /// Full-training-set loss after each epoch.
  std::vector<double> loss_history;
  double initial_loss = 0.0;
};

/// Mini-batch gradient descent with a seeded shuffle schedule shared by all
/// modes. Throws TrainingDiverged on a non-finite loss.
TrainResult train_classifier(const FeatureBundle& features, const TrainConfig& config);

}  // namespace motorfm
