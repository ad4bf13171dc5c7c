#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "desk.hpp"
#include "motorfm/error.hpp"
#include "motorfm/extractors.hpp"
#include "motorfm/logme.hpp"
#include "oracles.hpp"

using namespace motorfm;

namespace {

FeatureBundle noisy_one_hot(std::size_t n, std::size_t k, double sd, std::mt19937_64& gen) {
  FeatureBundle b;
  b.num_classes = k;
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<std::uint32_t>(gen() % k));
  b.features = oracle::one_hot(b.labels, k) +
               oracle::gaussian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k), gen, sd);
  b.extractor_id = "onehot";
  return b;
}

FeatureBundle permute_rows(const FeatureBundle& b, const std::vector<std::size_t>& perm) {
  FeatureBundle out = b;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = b.features.row(static_cast<Eigen::Index>(perm[i]));
    out.labels[i] = b.labels[perm[i]];
  }
  return out;
}

}  // namespace

TEST_CASE("fixed point matches the dense grid oracle") {
  std::mt19937_64 gen(0);
  const Eigen::MatrixXd f = oracle::gaussian(100, 8, gen);
  const Eigen::VectorXd w = oracle::gaussian(8, 1, gen);
  const Eigen::VectorXd t = f * w + 0.1 * oracle::gaussian(100, 1, gen);
  const auto res = evidence_fixed_point(f, t);
  const auto grid = oracle::grid_max_evidence(f, t);
  CHECK(res.converged);
  CHECK(res.log_evidence_per_sample >= grid.value - 1e-3);
  CHECK(res.log_evidence_per_sample <= grid.value + 1e-6);
  CHECK(std::abs(res.log_evidence_per_sample - grid.value) < 1e-3);
}

TEST_CASE("SVD evidence equals the dense formula") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + gen() % 30);
    const auto d = static_cast<Eigen::Index>(1 + gen() % 8);
    Eigen::MatrixXd f = oracle::gaussian(n, d, gen);
    if (trial % 4 == 0 && d > 1) f.col(d - 1) = 2.0 * f.col(0);  // rank deficient
    const Eigen::VectorXd t = oracle::gaussian(n, 1, gen);
    const double alpha = std::pow(10.0, -3.0 + 6.0 * static_cast<double>(gen() % 1000) / 1000.0);
    const double beta = std::pow(10.0, -3.0 + 6.0 * static_cast<double>(gen() % 1000) / 1000.0);
    const SpectralFactors factors(f);
    const double svd = log_evidence(factors, project_target(factors, t), alpha, beta) / static_cast<double>(n);
    const double dense = oracle::dense_log_evidence(f, t, alpha, beta) / static_cast<double>(n);
    CHECK(std::abs(svd - dense) <= 1e-8 * std::max(1.0, std::abs(dense)));
  }
}

TEST_CASE("noiseless target hits the beta cap") {
  std::mt19937_64 gen(2);
  const Eigen::MatrixXd f = oracle::gaussian(50, 6, gen);
  const Eigen::VectorXd t = f.col(0);
  const auto res = evidence_fixed_point(f, t);
  CHECK(res.converged);
  CHECK(res.beta == 1e10);

  const double n = static_cast<double>(f.rows());
  const Eigen::MatrixXd a = res.beta * f.transpose() * f + res.alpha * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::VectorXd m = res.beta * a.ldlt().solve(f.transpose() * t);
  CHECK((f * m - t).squaredNorm() / n < 1e-8);

  double previous = -INFINITY;
  for (double beta : {1e6, 1e7, 1e8, 1e9, 1e10}) {
    const double l = oracle::dense_log_evidence(f, t, res.alpha, beta);
    CHECK(l > previous);
    previous = l;
  }
}

TEST_CASE("degenerate targets") {
  std::mt19937_64 gen(3);
  const Eigen::MatrixXd f = oracle::gaussian(20, 3, gen);
  CHECK_THROWS_AS(evidence_fixed_point(f, Eigen::VectorXd::Constant(20, 1.5)), DegenerateTargetError);

  FeatureBundle zero;
  zero.features = Eigen::MatrixXd::Zero(6, 2);
  zero.labels = {0, 1, 0, 1, 0, 1};
  zero.num_classes = 2;
  try {
    (void)logme_score(zero);
    FAIL("expected a degenerate target");
  } catch (const DegenerateTargetError& e) {
    CHECK(e.class_id().has_value());
  }

  FeatureBundle single = zero;
  single.num_classes = 1;
  single.labels.assign(6, 0);
  CHECK_THROWS_AS((void)logme_score(single), DomainError);
}

TEST_CASE("iteration budget exhaustion is reported") {
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd f = oracle::gaussian(80, 5, gen);
  const Eigen::VectorXd t = f.col(1) + 0.3 * oracle::gaussian(80, 1, gen);
  EvidenceOptions opts;
  opts.max_iter = 1;
  opts.alpha0 = 1e-6;
  opts.beta0 = 1e4;
  const auto res = evidence_fixed_point(f, t, opts);
  CHECK_FALSE(res.converged);
  CHECK(std::isfinite(res.log_evidence_per_sample));
  CHECK(res.alpha > 0.0);
  CHECK(res.beta > 0.0);
}

TEST_CASE("score is the mean of per-class evidences") {
  std::mt19937_64 gen(5);
  const auto b = noisy_one_hot(120, 3, 0.3, gen);
  const auto r = logme_score(b);
  REQUIRE(r.per_class.size() == 3);
  double mean = 0.0;
  for (const auto& pc : r.per_class) mean += pc.log_evidence_per_sample / 3.0;
  CHECK(r.score == doctest::Approx(mean).epsilon(1e-15));
  CHECK(r.n == 120);
  CHECK(r.dim == 3);
  CHECK(r.singular_values.size() == 3);
}

TEST_CASE("separable features outscore permuted labels") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(seed);
    const auto b = noisy_one_hot(200, 4, 0.01, gen);
    auto shuffled = b;
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), gen);
    CHECK(logme_score(b).score > logme_score(shuffled).score);
  }
}

TEST_CASE("invariance to row permutation and right rotation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(100 + seed);
    auto b = noisy_one_hot(90, 3, 0.5, gen);
    b.features.conservativeResize(Eigen::NoChange, 6);
    b.features.rightCols(3) = oracle::gaussian(90, 3, gen);
    const double base = logme_score(b).score;

    std::vector<std::size_t> perm(90);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    CHECK(std::abs(logme_score(permute_rows(b, perm)).score - base) <= 1e-12);

    auto rotated = b;
    rotated.features = b.features * oracle::random_orthogonal(6, gen);
    CHECK(std::abs(logme_score(rotated).score - base) <= 1e-9);
  }
}

TEST_CASE("improvement rate") {
  CHECK(std::abs(improvement_rate(0.6274, 0.8765) - 39.7) <= 0.05);
  CHECK(std::abs(improvement_rate(0.6459, 0.9086) - 40.7) <= 0.05);
  CHECK(improvement_rate(0.42, 0.42) == 0.0);
  CHECK_THROWS_AS(improvement_rate(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(improvement_rate(-0.5, 1.0), DomainError);
}

TEST_CASE("ranking rules") {
  std::mt19937_64 gen(6);
  auto good = noisy_one_hot(60, 3, 0.05, gen);
  good.extractor_id = "good";
  auto bad = good;
  bad.features = oracle::gaussian(60, 3, gen);
  bad.extractor_id = "bad";

  const std::vector<FeatureBundle> both{bad, good};
  const auto ranking = rank_extractors(both);
  REQUIRE(ranking.size() == 2);
  CHECK(ranking[0].extractor_id == "good");
  CHECK(ranking[0].score > ranking[1].score);

  const std::vector<FeatureBundle> one{bad};
  CHECK(rank_extractors(one).size() == 1);

  auto twin = good;
  twin.extractor_id = "alpha";
  const std::vector<FeatureBundle> tied{good, twin};
  CHECK(rank_extractors(tied)[0].extractor_id == "alpha");

  auto other = bad;
  other.source_hash[0] ^= 1;
  const std::vector<FeatureBundle> mixed{good, other};
  CHECK_THROWS_AS(rank_extractors(mixed), ConfigError);

  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  const std::vector<FeatureBundle> permuted{permute_rows(bad, perm), permute_rows(good, perm)};
  CHECK(rank_extractors(permuted)[0].extractor_id == ranking[0].extractor_id);
}

TEST_CASE("stat features rank first on the synthetic task") {
  int held = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = desk::prepare(seed);
    std::vector<FeatureBundle> bundles;
    for (const auto* spec : {"stat", "raw", "randproj:16:0"}) {
      bundles.push_back(extract_all(*make_extractor(spec), data.train));
    }
    if (rank_extractors(bundles)[0].extractor_id == "stat") ++held;
  }
  CHECK(held >= 9);
}

TEST_CASE("standardize columns") {
  Eigen::MatrixXd f(4, 2);
  f << 1, 7, 2, 7, 3, 7, 4, 7;
  const auto z = standardize_columns(f);
  CHECK(std::abs(z.col(0).mean()) < 1e-15);
  CHECK(z.col(0).squaredNorm() / 4.0 == doctest::Approx(1.0));
  CHECK(z.col(1).isZero(0.0));
}
