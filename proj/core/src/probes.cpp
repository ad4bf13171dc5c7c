#include "motorfm/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/SVD>

#include "motorfm/error.hpp"
#include "motorfm/rng.hpp"

namespace motorfm {

namespace {

std::uint32_t majority(std::span<const std::size_t> counts) {
  std::uint32_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = static_cast<std::uint32_t>(c);
  }
  return best;
}

void check_labels(std::span<const std::uint32_t> y, std::size_t num_classes, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(y.size()) != rows) throw DomainError("probe: label count does not match rows");
  for (auto label : y) {
    if (label >= num_classes) throw DomainError("probe: label outside [0, num_classes)");
  }
}

std::size_t class_count_of(const FeatureBundle& b) {
  std::size_t k = static_cast<std::size_t>(b.num_classes);
  for (auto label : b.labels) k = std::max<std::size_t>(k, label + 1);
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// k-NN

Labels knn_predict(const Eigen::MatrixXd& train, std::span<const std::uint32_t> train_labels,
                   const Eigen::MatrixXd& test, std::size_t k) {
  const auto n = static_cast<std::size_t>(train.rows());
  if (k == 0) throw DomainError("knn: k must be at least 1");
  if (n == 0) throw DomainError("knn: empty training set");
  if (k > n) throw DomainError("knn: k = " + std::to_string(k) + " exceeds training size " + std::to_string(n));
  if (train.cols() != test.cols()) throw DomainError("knn: feature dimensions differ");
  if (train_labels.size() != n) throw DomainError("knn: label count does not match rows");

  const std::uint32_t num_classes =
      train_labels.empty() ? 0 : *std::max_element(train_labels.begin(), train_labels.end()) + 1;
  Labels out(static_cast<std::size_t>(test.rows()));
  std::vector<std::pair<double, std::size_t>> dist(n);
  std::vector<std::size_t> votes(num_classes);
  for (Eigen::Index q = 0; q < test.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = {(train.row(static_cast<Eigen::Index>(i)) - test.row(q)).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t j = 0; j < k; ++j) ++votes[train_labels[dist[j].second]];
    out[static_cast<std::size_t>(q)] = majority(votes);
  }
  return out;
}

Labels knn_fit_predict(const FeatureBundle& train, const FeatureBundle& test, std::size_t k) {
  return knn_predict(train.features, train.labels, test.features, k);
}

// ---------------------------------------------------------------------------
// Decision tree

void DecisionTree::fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                       std::size_t num_classes, const TreeParams& params) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  fit_rows(x, y, num_classes, params, std::move(rows), nullptr);
}

void DecisionTree::fit_rows(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                            std::size_t num_classes, const TreeParams& params,
                            std::vector<std::size_t> rows, FeatureSampler sampler) {
  check_labels(y, num_classes, x.rows());
  if (rows.empty()) throw DomainError("tree: empty training set");
  if (params.min_leaf == 0) throw DomainError("tree: min_leaf must be at least 1");
  nodes_.clear();
  num_classes_ = num_classes;
  params_ = params;
  sampler_ = std::move(sampler);
  build(x, y, rows, 0);
  sampler_ = nullptr;
}

std::int32_t DecisionTree::build(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                                 std::vector<std::size_t>& rows, std::size_t depth) {
  const auto n = rows.size();
  std::vector<std::size_t> counts(num_classes_, 0);
  for (auto r : rows) ++counts[y[r]];
  double sumsq = 0.0;
  for (auto c : counts) sumsq += static_cast<double>(c) * static_cast<double>(c);
  const double nd = static_cast<double>(n);

  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{-1, 0.0, -1, -1, majority(counts), 1.0 - sumsq / (nd * nd), n});

  const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
  const bool depth_reached = params_.max_depth && depth >= *params_.max_depth;
  if (pure || depth_reached || n < 2 * params_.min_leaf) return index;

  std::vector<std::size_t> features;
  if (sampler_) {
    features = sampler_(static_cast<std::size_t>(x.cols()));
  } else {
    features.resize(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
  }

  const double parent = nodes_[static_cast<std::size_t>(index)].impurity;
  double best_gain = -std::numeric_limits<double>::infinity();
  std::int32_t best_feature = -1;
  double best_threshold = 0.0;

  std::vector<std::pair<double, std::uint32_t>> column(n);
  std::vector<std::size_t> left(num_classes_);
  for (auto f : features) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {x(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(f)), y[rows[i]]};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::fill(left.begin(), left.end(), 0);
    double left_sq = 0.0, right_sq = sumsq;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto label = column[i].second;
      const double cl = static_cast<double>(left[label]);
      const double cr = static_cast<double>(counts[label] - left[label]);
      left_sq += 2.0 * cl + 1.0;
      right_sq -= 2.0 * cr - 1.0;
      ++left[label];
      if (!(column[i].first < column[i + 1].first)) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
      const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
      const double child = (dl * (1.0 - left_sq / (dl * dl)) + dr * (1.0 - right_sq / (dr * dr))) / nd;
      const double gain = parent - child;
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_feature = static_cast<std::int32_t>(f);
        best_threshold = 0.5 * (column[i].first + column[i + 1].first);
      }
    }
  }
  if (best_feature < 0) return index;

  std::vector<std::size_t> left_rows, right_rows;
  for (auto r : rows) {
    (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
  }
  rows.clear();
  rows.shrink_to_fit();
  const auto l = build(x, y, left_rows, depth + 1);
  const auto r = build(x, y, right_rows, depth + 1);
  auto& node = nodes_[static_cast<std::size_t>(index)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = l;
  node.right = r;
  return index;
}

std::uint32_t DecisionTree::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (nodes_.empty()) throw DomainError("tree: predict before fit");
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    i = static_cast<std::size_t>(x(nodes_[i].feature) <= nodes_[i].threshold ? nodes_[i].left
                                                                            : nodes_[i].right);
  }
  return nodes_[i].label;
}

Labels DecisionTree::predict(const Eigen::MatrixXd& x) const {
  Labels out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = predict_one(x.row(i));
  return out;
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.feature >= 0) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random forest

void RandomForest::fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                       std::size_t num_classes, const ForestParams& params) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto dim = static_cast<std::size_t>(x.cols());
  if (params.n_trees == 0) throw DomainError("forest: n_trees must be at least 1");
  if (params.mtry == 0 || params.mtry > dim) throw DomainError("forest: mtry must lie in [1, D]");
  if (n == 0) throw DomainError("forest: empty training set");
  num_classes_ = num_classes;
  trees_.assign(params.n_trees, DecisionTree{});
  const TreeParams tree_params{params.max_depth, params.min_leaf};

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(params.seed + t);
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      for (auto& r : rows) r = rng.index(n);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    std::vector<std::size_t> pool(dim);
    auto sampler = [&rng, &pool, mtry = params.mtry](std::size_t d) {
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < mtry; ++i) std::swap(pool[i], pool[i + rng.index(d - i)]);
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(mtry));
      std::sort(chosen.begin(), chosen.end());
      return chosen;
    };
    trees_[t].fit_rows(x, y, num_classes, tree_params, std::move(rows), sampler);
  }
}

Labels RandomForest::predict(const Eigen::MatrixXd& x) const {
  if (trees_.empty()) throw DomainError("forest: predict before fit");
  Labels out(static_cast<std::size_t>(x.rows()));
  std::vector<std::size_t> votes(num_classes_);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& tree : trees_) ++votes[tree.predict_one(x.row(i))];
    out[static_cast<std::size_t>(i)] = majority(votes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe

void LinearProbe::fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                      std::size_t num_classes, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("linear probe: lambda must be positive");
  check_labels(y, num_classes, x.rows());
  if (x.rows() == 0) throw DomainError("linear probe: empty training set");
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < y.size(); ++i) onehot(static_cast<Eigen::Index>(i), y[i]) = 1.0;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::VectorXd shrink = (s.array() / (s.array().square() + lambda)).matrix();
  weights_ = svd.matrixV() * shrink.asDiagonal() * (svd.matrixU().transpose() * onehot);
}

Eigen::MatrixXd LinearProbe::scores(const Eigen::MatrixXd& x) const {
  if (x.cols() != weights_.rows()) throw DomainError("linear probe: feature dimension mismatch");
  return x * weights_;
}

Labels LinearProbe::predict(const Eigen::MatrixXd& x) const {
  return argmax_rows(scores(x), kScoreTieTolerance);
}

Labels argmax_rows(const Eigen::MatrixXd& scores, double tie_tolerance) {
  Labels out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    Eigen::Index c = 0;
    while (scores(i, c) < top - tie_tolerance) ++c;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(c);
  }
  return out;
}

Labels linear_probe_fit_predict(const FeatureBundle& train, const FeatureBundle& test,
                                double lambda) {
  LinearProbe probe;
  probe.fit(train.features, train.labels, class_count_of(train), lambda);
  return probe.predict(test.features);
}

// ---------------------------------------------------------------------------
// Metrics

Metrics evaluate(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth,
                 std::size_t num_classes) {
  if (predicted.size() != truth.size()) {
    throw DomainError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                      std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw DomainError("evaluate: no samples");
  std::size_t k = num_classes;
  if (k == 0) {
    for (std::size_t i = 0; i < truth.size(); ++i) k = std::max<std::size_t>({k, truth[i] + 1u, predicted[i] + 1u});
  }
  std::vector<std::size_t> tp(k, 0), pred_count(k, 0), true_count(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) throw DomainError("evaluate: label outside [0, num_classes)");
    ++pred_count[predicted[i]];
    ++true_count[truth[i]];
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
      ++correct;
    }
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double p = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
    const double r = true_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_count[c]) : 0.0;
    f1_sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return {static_cast<double>(correct) / static_cast<double>(truth.size()), f1_sum / static_cast<double>(k)};
}

// ---------------------------------------------------------------------------
// Grid search

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::knn:
      return "knn";
    case ProbeKind::tree:
      return "tree";
    case ProbeKind::forest:
      return "forest";
    case ProbeKind::linear:
      return "linear";
  }
  return "linear";
}

ProbeKind parse_probe_kind(std::string_view text) {
  if (text == "knn") return ProbeKind::knn;
  if (text == "tree") return ProbeKind::tree;
  if (text == "forest") return ProbeKind::forest;
  if (text == "linear") return ProbeKind::linear;
  throw ConfigError("unknown probe kind \"" + std::string(text) + "\" (knn|tree|forest|linear)");
}

std::vector<HyperParams> expand_grid(const GridAxes& axes) {
  std::vector<HyperParams> out{HyperParams{}};
  for (const auto& [name, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis \"" + name + "\" is empty");
    std::vector<HyperParams> next;
    for (const auto& partial : out) {
      for (double v : values) {
        auto p = partial;
        p[name] = v;
        next.push_back(std::move(p));
      }
    }
    out = std::move(next);
  }
  return out;
}

namespace {

double sqrt_dim(std::size_t dim) {
  return std::max(1.0, std::floor(std::sqrt(static_cast<double>(dim))));
}
double third_dim(std::size_t dim) {
  return std::max(1.0, std::floor(static_cast<double>(dim) / 3.0));
}

double param(const HyperParams& p, const std::string& name, double fallback) {
  auto it = p.find(name);
  return it == p.end() ? fallback : it->second;
}

std::optional<std::size_t> depth_param(const HyperParams& p, double fallback) {
  const double d = param(p, "max_depth", fallback);
  if (d <= 0.0) return std::nullopt;
  return static_cast<std::size_t>(d);
}

}  // namespace

GridAxes default_grid(ProbeKind kind, std::size_t dim) {
  switch (kind) {
    case ProbeKind::knn:
      return {{"k", {1, 3, 5, 9, 15}}};
    case ProbeKind::tree:
      return {{"max_depth", {4, 8, 16, 0}}};
    case ProbeKind::forest: {
      std::vector<double> mtry{sqrt_dim(dim)};
      if (third_dim(dim) != mtry.front()) mtry.push_back(third_dim(dim));
      return {{"n_trees", {25, 100}}, {"mtry", mtry}};
    }
    case ProbeKind::linear:
      return {{"lambda", {1e-4, 1e-2, 1.0, 1e2}}};
  }
  return {};
}

HyperParams default_params(ProbeKind kind, std::size_t dim) {
  switch (kind) {
    case ProbeKind::knn:
      return {{"k", 1}};
    case ProbeKind::tree:
      return {{"max_depth", 8}};
    case ProbeKind::forest:
      return {{"n_trees", 25}, {"mtry", sqrt_dim(dim)}};
    case ProbeKind::linear:
      return {{"lambda", 1.0}};
  }
  return {};
}

std::string describe(const HyperParams& params) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : params) {
    if (!first) os << ';';
    first = false;
    os << k << '=' << v;
  }
  return os.str();
}

Labels fit_predict(ProbeKind kind, const HyperParams& params, const FeatureBundle& train,
                   const Eigen::MatrixXd& test) {
  const auto k = class_count_of(train);
  switch (kind) {
    case ProbeKind::knn:
      return knn_predict(train.features, train.labels, test,
                         static_cast<std::size_t>(param(params, "k", 5)));
    case ProbeKind::tree: {
      DecisionTree tree;
      tree.fit(train.features, train.labels, k,
               TreeParams{depth_param(params, 0), static_cast<std::size_t>(param(params, "min_leaf", 1))});
      return tree.predict(test);
    }
    case ProbeKind::forest: {
      RandomForest forest;
      ForestParams fp;
      fp.n_trees = static_cast<std::size_t>(param(params, "n_trees", 25));
      fp.mtry = static_cast<std::size_t>(param(params, "mtry", sqrt_dim(train.dim())));
      fp.max_depth = depth_param(params, 0);
      fp.min_leaf = static_cast<std::size_t>(param(params, "min_leaf", 1));
      fp.seed = static_cast<std::uint64_t>(param(params, "seed", 0));
      forest.fit(train.features, train.labels, k, fp);
      return forest.predict(test);
    }
    case ProbeKind::linear: {
      LinearProbe probe;
      probe.fit(train.features, train.labels, k, param(params, "lambda", 1.0));
      return probe.predict(test);
    }
  }
  return {};
}

GridSearchResult grid_search(ProbeKind kind, const std::vector<HyperParams>& grid,
                             const FeatureBundle& train, const FeatureBundle& val) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  if (val.size() == 0) throw ConfigError("grid_search: empty validation set");
  GridSearchResult result;
  bool any = false;
  for (const auto& params : grid) {
    double acc = std::numeric_limits<double>::quiet_NaN();
    try {
      acc = evaluate(fit_predict(kind, params, train, val.features), val.labels).accuracy;
    } catch (const DomainError&) {
      // Infeasible at this training size (e.g. k > n); recorded as NaN and skipped.
    }
    result.trials.emplace_back(params, acc);
    if (!std::isnan(acc) && (!any || acc > result.val_accuracy)) {
      result.best = params;
      result.val_accuracy = acc;
      any = true;
    }
  }
  if (!any) throw DomainError("grid_search: no configuration could be fitted");
  return result;
}

}  // namespace motorfm
