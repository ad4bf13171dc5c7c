#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "motorfm/dataio.hpp"

namespace motorfm {

using Labels = std::vector<std::uint32_t>;

// ---------------------------------------------------------------------------
// k-nearest neighbours

/// Euclidean k-NN. Distance ties go to the lower training index, vote ties to
/// the smallest class id.
Labels knn_predict(const Eigen::MatrixXd& train, std::span<const std::uint32_t> train_labels,
                   const Eigen::MatrixXd& test, std::size_t k);
Labels knn_fit_predict(const FeatureBundle& train, const FeatureBundle& test, std::size_t k);

// ---------------------------------------------------------------------------
// Decision tree

struct TreeParams {
  std::optional<std::size_t> max_depth;  // nullopt = unbounded
  std::size_t min_leaf = 1;
};

/// CART classifier with Gini impurity and axis-aligned splits at midpoints of
/// consecutive distinct values. Features are scanned in ascending index and
/// thresholds in ascending value; a candidate replaces the incumbent only if
/// it is strictly better.
class DecisionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 for leaves
    double threshold = 0.0;     // go left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t label = 0;    // majority class of training samples at the node
    double impurity = 0.0;      // Gini
    std::size_t count = 0;
  };

  /// Candidate features for one split; must return ascending indices.
  using FeatureSampler = std::function<std::vector<std::size_t>(std::size_t dim)>;

  void fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, std::size_t num_classes,
           const TreeParams& params);
  /// Used by forests: restrict each split to `sampler(D)` features and train
  /// on the given (possibly repeated) row indices.
  void fit_rows(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                std::size_t num_classes, const TreeParams& params,
                std::vector<std::size_t> rows, FeatureSampler sampler);

  [[nodiscard]] std::uint32_t predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  [[nodiscard]] Labels predict(const Eigen::MatrixXd& x) const;

  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
  [[nodiscard]] std::size_t depth() const;

 private:
  std::int32_t build(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                     std::vector<std::size_t>& rows, std::size_t depth);

  std::vector<Node> nodes_;
  std::size_t num_classes_ = 0;
  TreeParams params_;
  FeatureSampler sampler_;
};

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  std::size_t n_trees = 25;
  std::optional<std::size_t> max_depth;
  std::size_t min_leaf = 1;
  std::size_t mtry = 1;
  std::uint64_t seed = 0;
  bool bootstrap = true;
};

/// Bagged trees; tree t draws its bootstrap sample and split features from
/// Rng(seed + t). Majority vote with smallest-id tie break.
class RandomForest {
 public:
  void fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, std::size_t num_classes,
           const ForestParams& params);
  [[nodiscard]] Labels predict(const Eigen::MatrixXd& x) const;
  [[nodiscard]] const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t num_classes_ = 0;
};

// ---------------------------------------------------------------------------
// Linear probe

/// One-vs-rest ridge regression on one-hot targets,
/// W = (F^T F + lambda I)^-1 F^T Y, solved through the thin SVD of F.
/// Scores within kScoreTieTolerance of the maximum count as tied and resolve
/// to the smallest class id.
class LinearProbe {
 public:
  static constexpr double kScoreTieTolerance = 1e-9;

  void fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, std::size_t num_classes,
           double lambda);
  [[nodiscard]] Eigen::MatrixXd scores(const Eigen::MatrixXd& x) const;
  [[nodiscard]] Labels predict(const Eigen::MatrixXd& x) const;
  [[nodiscard]] const Eigen::MatrixXd& weights() const { return weights_; }

 private:
  Eigen::MatrixXd weights_;  // D x K
};

Labels argmax_rows(const Eigen::MatrixXd& scores, double tie_tolerance);
Labels linear_probe_fit_predict(const FeatureBundle& train, const FeatureBundle& test, double lambda);

// ---------------------------------------------------------------------------
// Metrics and model selection

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Accuracy and macro F1 over classes [0, num_classes). num_classes = 0 means
/// one past the largest label seen. Classes with P + R = 0 contribute F1 = 0.
Metrics evaluate(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth,
                 std::size_t num_classes = 0);

enum class ProbeKind { knn, tree, forest, linear };

std::string_view to_string(ProbeKind kind);
ProbeKind parse_probe_kind(std::string_view text);

/// Ordered hyperparameter assignment, e.g. {"k": 5}. Depth 0 means unbounded.
using HyperParams = std::map<std::string, double>;
/// Named axes of a grid; expanded as a cartesian product with the last axis
/// varying fastest.
using GridAxes = std::vector<std::pair<std::string, std::vector<double>>>;

std::vector<HyperParams> expand_grid(const GridAxes& axes);
GridAxes default_grid(ProbeKind kind, std::size_t dim);
/// Single mid-grid configuration used when no validation split is available.
HyperParams default_params(ProbeKind kind, std::size_t dim);

std::string describe(const HyperParams& params);

/// Fits `kind` with `params` on train and predicts test.
Labels fit_predict(ProbeKind kind, const HyperParams& params, const FeatureBundle& train,
                   const Eigen::MatrixXd& test);

struct GridSearchResult {
  HyperParams best;
  double val_accuracy = 0.0;
  std::vector<std::pair<HyperParams, double>> trials;
};

/// Exhaustive search; best validation accuracy wins, ties to the earliest
/// configuration. The validation set never enters fitting.
GridSearchResult grid_search(ProbeKind kind, const std::vector<HyperParams>& grid,
                             const FeatureBundle& train, const FeatureBundle& val);

}  // namespace motorfm
