#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "motorfm/error.hpp"
#include "motorfm/probes.hpp"
#include "oracles.hpp"

using namespace motorfm;

namespace {

FeatureBundle blobs(std::size_t n, std::size_t classes, double sd, double spread, std::mt19937_64& gen,
                    Eigen::Index dim = 2) {
  const Eigen::MatrixXd centers = spread * oracle::gaussian(static_cast<Eigen::Index>(classes), dim, gen);
  FeatureBundle b;
  b.num_classes = classes;
  b.features.resize(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(i % classes);
    b.labels.push_back(c);
    b.features.row(static_cast<Eigen::Index>(i)) = centers.row(c) + oracle::gaussian(1, dim, gen, sd);
  }
  return b;
}

// Two classes at (0, 0) and (4, 0), sd 0.5.
std::pair<FeatureBundle, FeatureBundle> two_blobs(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto make = [&](std::size_t n) {
    FeatureBundle b;
    b.num_classes = 2;
    b.features = oracle::gaussian(static_cast<Eigen::Index>(n), 2, gen, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      b.labels.push_back(static_cast<std::uint32_t>(i % 2));
      if (i % 2) b.features(static_cast<Eigen::Index>(i), 0) += 4.0;
    }
    return b;
  };
  auto train = make(200);
  auto test = make(200);
  return {train, test};
}

double accuracy(const Labels& pred, const Labels& truth) { return evaluate(pred, truth).accuracy; }

}  // namespace

TEST_CASE("knn basics") {
  Eigen::MatrixXd train(3, 1);
  train << 0.0, 1.0, 5.0;
  const Labels y{2, 0, 1};

  Eigen::MatrixXd q(1, 1);
  q << 5.0;
  CHECK(knn_predict(train, y, q, 1) == Labels{1});

  q << 0.5;  // equidistant from labels 2 and 0
  CHECK(knn_predict(train, y, q, 2) == Labels{0});
  CHECK(knn_predict(train, y, q, 1) == Labels{2});  // lower training index wins the distance tie

  CHECK_THROWS_AS(knn_predict(train, y, q, 4), DomainError);
  CHECK_THROWS_AS(knn_predict(train, y, q, 0), DomainError);
}

TEST_CASE("knn agrees with an exhaustive distance oracle") {
  const auto [train, test] = two_blobs(0);
  const auto pred = knn_fit_predict(train, test, 5);
  CHECK(pred == oracle::brute_knn(train.features, train.labels, test.features, 5, 2));
  CHECK(accuracy(pred, test.labels) > 0.95);

  std::mt19937_64 gen(9);
  const auto multi = blobs(150, 4, 1.0, 1.5, gen, 3);
  const auto query = blobs(60, 4, 1.0, 1.5, gen, 3);
  for (std::size_t k : {1, 2, 3, 7, 15}) {
    CHECK(knn_predict(multi.features, multi.labels, query.features, k) ==
          oracle::brute_knn(multi.features, multi.labels, query.features, k, 4));
  }
}

TEST_CASE("1-nn memorizes distinct training points") {
  std::mt19937_64 gen(1);
  const auto b = blobs(80, 5, 1.0, 1.0, gen);
  CHECK(accuracy(knn_predict(b.features, b.labels, b.features, 1), b.labels) == 1.0);
}

TEST_CASE("tree examples") {
  SUBCASE("pure training set gives a single leaf") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 3, 4, 5, 6;
    DecisionTree t;
    t.fit(x, Labels{2, 2, 2}, 3, {});
    CHECK(t.nodes().size() == 1);
    CHECK(t.predict(x) == Labels{2, 2, 2});
  }
  SUBCASE("1-D split at 1.5") {
    Eigen::MatrixXd x(4, 1);
    x << 0, 1, 2, 3;
    DecisionTree t;
    t.fit(x, Labels{0, 0, 1, 1}, 2, {});
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.nodes()[0].feature == 0);
    CHECK(t.nodes()[0].threshold == 1.5);
    CHECK(t.depth() == 1);
  }
  SUBCASE("unbounded depth memorizes distinct rows") {
    std::mt19937_64 gen(2);
    const auto b = blobs(120, 4, 2.0, 1.0, gen, 3);
    DecisionTree t;
    t.fit(b.features, b.labels, 4, {});
    CHECK(accuracy(t.predict(b.features), b.labels) == 1.0);
  }
  SUBCASE("depth limit is respected") {
    std::mt19937_64 gen(3);
    const auto b = blobs(200, 3, 2.0, 1.0, gen);
    DecisionTree t;
    t.fit(b.features, b.labels, 3, {2, 1});
    CHECK(t.depth() <= 2);
  }
  SUBCASE("feature ties go to the lower index") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 1, 2, 2, 3, 3;
    DecisionTree t;
    t.fit(x, Labels{0, 0, 1, 1}, 2, {});
    CHECK(t.nodes()[0].feature == 0);
  }
}

TEST_CASE("tree splits never increase the weighted impurity") {
  std::mt19937_64 gen(4);
  const auto b = blobs(300, 4, 1.5, 1.0, gen, 3);
  DecisionTree t;
  t.fit(b.features, b.labels, 4, {});
  for (const auto& node : t.nodes()) {
    if (node.feature < 0) continue;
    const auto& l = t.nodes()[static_cast<std::size_t>(node.left)];
    const auto& r = t.nodes()[static_cast<std::size_t>(node.right)];
    CHECK(l.count + r.count == node.count);
    const double weighted = (static_cast<double>(l.count) * l.impurity + static_cast<double>(r.count) * r.impurity) /
                            static_cast<double>(node.count);
    CHECK(weighted <= node.impurity + 1e-12);
  }
}

TEST_CASE("forest reduces to a tree without bagging") {
  std::mt19937_64 gen(5);
  const auto b = blobs(150, 3, 1.2, 1.0, gen, 4);
  const auto q = blobs(80, 3, 1.2, 1.0, gen, 4);
  DecisionTree tree;
  tree.fit(b.features, b.labels, 3, {});
  RandomForest forest;
  ForestParams fp;
  fp.n_trees = 1;
  fp.mtry = 4;
  fp.bootstrap = false;
  forest.fit(b.features, b.labels, 3, fp);
  CHECK(forest.predict(q.features) == tree.predict(q.features));
  CHECK(forest.trees()[0].nodes().size() == tree.nodes().size());
}

TEST_CASE("forest determinism and quality") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [train, test] = two_blobs(100 + seed);
    ForestParams fp;
    fp.n_trees = 25;
    fp.mtry = 1;
    fp.seed = seed;
    RandomForest a, b;
    a.fit(train.features, train.labels, 2, fp);
    b.fit(train.features, train.labels, 2, fp);
    const auto pred = a.predict(test.features);
    CHECK(pred == b.predict(test.features));

    DecisionTree tree;
    tree.fit(train.features, train.labels, 2, {});
    CHECK(accuracy(pred, test.labels) >= accuracy(tree.predict(test.features), test.labels) - 0.02);
  }
  RandomForest f;
  ForestParams bad;
  bad.mtry = 3;
  CHECK_THROWS_AS(f.fit(Eigen::MatrixXd::Zero(4, 2), Labels{0, 1, 0, 1}, 2, bad), DomainError);
}

TEST_CASE("linear probe") {
  SUBCASE("one-hot features are fit exactly") {
    const Labels y{0, 1, 2, 1, 0, 2, 2};
    const Eigen::MatrixXd f = oracle::one_hot(y, 3);
    LinearProbe p;
    p.fit(f, y, 3, 1e-6);
    CHECK(p.predict(f) == y);
  }
  SUBCASE("huge lambda ties every score") {
    std::mt19937_64 gen(6);
    const auto b = blobs(40, 3, 0.5, 1.0, gen);
    LinearProbe p;
    p.fit(b.features, b.labels, 3, 1e12);
    CHECK(p.scores(b.features).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(p.predict(b.features) == Labels(40, 0));
  }
  SUBCASE("matches the normal equations") {
    std::mt19937_64 gen(7);
    const auto train = blobs(90, 3, 0.4, 2.0, gen, 4);
    const auto test = blobs(60, 3, 0.4, 2.0, gen, 4);
    for (double lambda : {1e-4, 1e-2, 1.0, 100.0}) {
      LinearProbe p;
      p.fit(train.features, train.labels, 3, lambda);
      const Eigen::MatrixXd w = oracle::ridge_normal_equations(train.features, oracle::one_hot(train.labels, 3), lambda);
      CHECK((p.weights() - w).cwiseAbs().maxCoeff() < 1e-9);
      Labels expected;
      const Eigen::MatrixXd s = test.features * w;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Eigen::Index arg = 0;
        s.row(i).maxCoeff(&arg);
        expected.push_back(static_cast<std::uint32_t>(arg));
      }
      CHECK(p.predict(test.features) == expected);
    }
  }
  SUBCASE("rotation invariance of scores") {
    std::mt19937_64 gen(8);
    const auto train = blobs(70, 4, 1.0, 1.0, gen, 5);
    const auto test = blobs(30, 4, 1.0, 1.0, gen, 5);
    const Eigen::MatrixXd q = oracle::random_orthogonal(5, gen);
    LinearProbe a, b;
    a.fit(train.features, train.labels, 4, 0.1);
    b.fit(train.features * q, train.labels, 4, 0.1);
    CHECK((a.scores(test.features) - b.scores(test.features * q)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(a.predict(test.features) == b.predict(test.features * q));
  }
  SUBCASE("lambda must be positive") {
    LinearProbe p;
    CHECK_THROWS_AS(p.fit(Eigen::MatrixXd::Ones(2, 1), Labels{0, 1}, 2, 0.0), DomainError);
  }
}

TEST_CASE("evaluate") {
  const Labels truth{0, 0, 1, 1};
  auto m = evaluate(truth, truth);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);

  m = evaluate(Labels{0, 0, 0, 0}, truth);
  CHECK(m.accuracy == 0.5);
  CHECK(m.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  m = evaluate(truth, truth, 3);
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(evaluate(Labels{0}, truth), DomainError);

  std::mt19937_64 gen(9);
  Labels balanced, pred;
  for (int i = 0; i < 60; ++i) {
    balanced.push_back(static_cast<std::uint32_t>(i % 3));
    pred.push_back(static_cast<std::uint32_t>(gen() % 3));
  }
  double recall = 0.0;
  for (std::uint32_t c = 0; c < 3; ++c) {
    int hit = 0;
    for (int i = 0; i < 60; ++i) hit += balanced[i] == c && pred[i] == c;
    recall += hit / 20.0 / 3.0;
  }
  CHECK(std::abs(evaluate(pred, balanced).accuracy - recall) <= 1e-12);
}

TEST_CASE("grid expansion") {
  const auto g = expand_grid({{"a", {1, 2}}, {"b", {10, 20, 30}}});
  REQUIRE(g.size() == 6);
  CHECK(g[0] == HyperParams{{"a", 1}, {"b", 10}});
  CHECK(g[1] == HyperParams{{"a", 1}, {"b", 20}});
  CHECK(g[5] == HyperParams{{"a", 2}, {"b", 30}});
  CHECK(expand_grid(default_grid(ProbeKind::knn, 4)).size() == 5);
  CHECK(expand_grid(default_grid(ProbeKind::tree, 4)).size() == 4);
  CHECK(expand_grid(default_grid(ProbeKind::forest, 16)).size() == 4);
  CHECK(expand_grid(default_grid(ProbeKind::linear, 4)).size() == 4);
  CHECK(parse_probe_kind(to_string(ProbeKind::forest)) == ProbeKind::forest);
  CHECK_THROWS_AS(parse_probe_kind("svm"), ConfigError);
}

TEST_CASE("grid search") {
  std::mt19937_64 gen(10);
  const auto train = blobs(120, 3, 1.6, 1.0, gen);
  const auto val = blobs(90, 3, 1.6, 1.0, gen);

  const std::vector<HyperParams> single{{{"k", 3}}};
  CHECK(grid_search(ProbeKind::knn, single, train, val).best == single[0]);

  const auto grid = expand_grid({{"k", {1, 3, 5, 9, 15, 25}}});
  const auto result = grid_search(ProbeKind::knn, grid, train, val);
  double best = -1.0;
  HyperParams expected;
  for (const auto& hp : grid) {
    const auto k = static_cast<std::size_t>(hp.at("k"));
    const double acc = accuracy(oracle::brute_knn(train.features, train.labels, val.features, k, 3), val.labels);
    if (acc > best) {
      best = acc;
      expected = hp;
    }
  }
  CHECK(result.best == expected);
  CHECK(result.val_accuracy == best);
  CHECK(result.trials.size() == grid.size());
  CHECK(grid_search(ProbeKind::knn, grid, train, val).best == result.best);
}
