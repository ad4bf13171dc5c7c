#include "motorfm/logme.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "motorfm/error.hpp"

namespace motorfm {

SpectralFactors::SpectralFactors(const Eigen::MatrixXd& features, double rank_tol)
    : samples_(features.rows()), dim_(features.cols()) {
  if (samples_ == 0 || dim_ == 0) {
    all_sigma_.resize(0);
    sigma_.resize(0);
    u_.resize(samples_, 0);
    return;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(features, Eigen::ComputeThinU);
  all_sigma_ = svd.singularValues();
  const double cutoff = rank_tol * (all_sigma_.size() > 0 ? all_sigma_(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < all_sigma_.size() && all_sigma_(rank) > cutoff) ++rank;
  sigma_ = all_sigma_.head(rank);
  u_ = svd.matrixU().leftCols(rank);
}

TargetProjection project_target(const SpectralFactors& factors, const Eigen::VectorXd& target) {
  TargetProjection p;
  p.z = factors.left().transpose() * target;
  p.residual_perp = (target - factors.left() * p.z).squaredNorm();
  return p;
}

namespace {

struct Moments {
  double gamma = 0.0;     // effective number of well-determined parameters
  double mtm = 0.0;       // m^T m
  double residual = 0.0;  // ||F m - t||^2
  double logdet = 0.0;    // log|A|
};

Moments moments(const SpectralFactors& f, const TargetProjection& t, double alpha, double beta) {
  Moments m;
  const auto& s = f.sigma();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double s2 = s(i) * s(i);
    const double denom = alpha + beta * s2;
    const double zi = t.z(i);
    m.gamma += beta * s2 / denom;
    const double w = beta * s(i) * zi / denom;
    m.mtm += w * w;
    const double r = alpha * zi / denom;
    m.residual += r * r;
    m.logdet += std::log(denom);
  }
  m.residual += t.residual_perp;
  m.logdet += static_cast<double>(f.dim() - f.rank()) * std::log(alpha);
  return m;
}

double evidence_from(const SpectralFactors& f, const Moments& m, double alpha, double beta) {
  const double n = static_cast<double>(f.samples());
  const double d = static_cast<double>(f.dim());
  return 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) -
         0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * beta * m.residual -
         0.5 * alpha * m.mtm - 0.5 * m.logdet;
}

}  // namespace

double log_evidence(const SpectralFactors& factors, const TargetProjection& target, double alpha,
                    double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("log_evidence: alpha and beta must be positive");
  return evidence_from(factors, moments(factors, target, alpha, beta), alpha, beta);
}

EvidenceResult evidence_fixed_point(const SpectralFactors& factors, const Eigen::VectorXd& target,
                                    const EvidenceOptions& options) {
  const auto n = factors.samples();
  if (n < 2) throw DomainError("evidence: need at least 2 samples");
  if (factors.dim() < 1) throw DomainError("evidence: need at least 1 feature");
  if (target.size() != n) throw DomainError("evidence: target length does not match feature rows");
  if (!target.allFinite()) throw DomainError("evidence: non-finite target");
  if (target.maxCoeff() == target.minCoeff()) throw DegenerateTargetError("constant target");

  const auto proj = project_target(factors, target);
  if (proj.z.squaredNorm() <= 1e-24 * target.squaredNorm()) {
    throw DegenerateTargetError("target is orthogonal to the feature range (m^T m = 0)");
  }

  const double nd = static_cast<double>(n);
  double alpha = options.alpha0;
  double beta = options.beta0;
  double previous = log_evidence(factors, proj, alpha, beta) / nd;
  EvidenceResult best{alpha, beta, previous, 0, false};

  for (int it = 1; it <= options.max_iter; ++it) {
    const auto m = moments(factors, proj, alpha, beta);
    if (!(m.mtm > 0.0)) throw DegenerateTargetError("m^T m vanished during iteration");
    alpha = std::clamp(m.gamma / m.mtm, options.alpha_min, options.alpha_max);
    const double noise_dof = nd - m.gamma;
    beta = (m.residual > 0.0 && noise_dof > 0.0) ? noise_dof / m.residual : options.beta_max;
    beta = std::clamp(beta, options.alpha_min, options.beta_max);

    const double current = log_evidence(factors, proj, alpha, beta) / nd;
    if (current >= best.log_evidence_per_sample || it == 1) {
      best = EvidenceResult{alpha, beta, current, it, false};
    }
    if (std::abs(current - previous) < options.tol) {
      return EvidenceResult{alpha, beta, current, it, true};
    }
    previous = current;
  }
  best.iterations = options.max_iter;
  return best;
}

EvidenceResult evidence_fixed_point(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                                    const EvidenceOptions& options) {
  return evidence_fixed_point(SpectralFactors(features, options.rank_tol), target, options);
}

LogMEReport logme_score(const FeatureBundle& bundle, const EvidenceOptions& options) {
  bundle.validate();
  if (bundle.num_classes < 2) throw DomainError("logme: need at least 2 classes");
  const SpectralFactors factors(bundle.features, options.rank_tol);

  LogMEReport report;
  report.extractor_id = bundle.extractor_id;
  report.n = bundle.size();
  report.dim = bundle.dim();
  report.num_classes = static_cast<std::size_t>(bundle.num_classes);
  report.singular_values = factors.all_singular_values();

  Eigen::VectorXd target(static_cast<Eigen::Index>(bundle.size()));
  double total = 0.0;
  for (std::uint32_t c = 0; c < bundle.num_classes; ++c) {
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      target(static_cast<Eigen::Index>(i)) = bundle.labels[i] == c ? 1.0 : 0.0;
    }
    try {
      report.per_class.push_back(evidence_fixed_point(factors, target, options));
    } catch (const DegenerateTargetError& e) {
      throw DegenerateTargetError(e.what(), c);
    }
    total += report.per_class.back().log_evidence_per_sample;
  }
  report.score = total / static_cast<double>(bundle.num_classes);
  return report;
}

double improvement_rate(double low, double high) {
  if (!(low > 0.0)) throw DomainError("improvement_rate: lower score must be positive");
  return (high - low) / low * 100.0;
}

std::vector<RankedExtractor> rank_reports(std::span<const LogMEReport> reports) {
  std::vector<RankedExtractor> ranked;
  ranked.reserve(reports.size());
  for (const auto& r : reports) ranked.push_back({r.extractor_id, r.score});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.extractor_id < b.extractor_id;
  });
  return ranked;
}

std::vector<RankedExtractor> rank_extractors(std::span<const FeatureBundle> bundles,
                                             const EvidenceOptions& options) {
  for (std::size_t i = 1; i < bundles.size(); ++i) {
    if (bundles[i].source_hash != bundles[0].source_hash) {
      throw ConfigError("cannot compare bundles: " + bundles[i].extractor_id + " and " +
                        bundles[0].extractor_id + " come from different datasets (source hash)");
    }
    if (bundles[i].labels != bundles[0].labels) {
      throw ConfigError("cannot compare bundles: labels of " + bundles[i].extractor_id +
                        " differ from " + bundles[0].extractor_id);
    }
  }
  std::vector<LogMEReport> reports;
  reports.reserve(bundles.size());
  for (const auto& b : bundles) reports.push_back(logme_score(b, options));
  return rank_reports(reports);
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out = features;
  if (features.rows() == 0) return out;
  const double n = static_cast<double>(features.rows());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double mean = out.col(j).mean();
    out.col(j).array() -= mean;
    const double sd = std::sqrt(out.col(j).squaredNorm() / n);
    if (sd > 0.0) out.col(j) /= sd;
  }
  return out;
}

}  // namespace motorfm
