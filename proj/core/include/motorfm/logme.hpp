#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "motorfm/dataio.hpp"

namespace motorfm {

/// Settings for evidence maximization.
struct EvidenceOptions {
  double tol = 1e-5;        // on |change of L/n| between iterations
  int max_iter = 100;
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double alpha_min = 1e-10;
  double alpha_max = 1e10;
  double beta_max = 1e10;
  /// Singular values below this fraction of the largest count as zero.
  double rank_tol = 1e-12;
};

struct EvidenceResult {
  double alpha = 0.0;
  double beta = 0.0;
  double log_evidence_per_sample = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Thin SVD of a feature matrix, F = U diag(sigma) V^T, truncated to its
/// numerical rank. Computed once and shared by every target.
class SpectralFactors {
 public:
  explicit SpectralFactors(const Eigen::MatrixXd& features, double rank_tol = 1e-12);

  [[nodiscard]] Eigen::Index samples() const { return samples_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] Eigen::Index rank() const { return sigma_.size(); }
  /// Singular values of the numerical range, descending.
  [[nodiscard]] const Eigen::VectorXd& sigma() const { return sigma_; }
  /// All min(n, D) singular values, including those treated as zero.
  [[nodiscard]] const Eigen::VectorXd& all_singular_values() const { return all_sigma_; }
  [[nodiscard]] const Eigen::MatrixXd& left() const { return u_; }

 private:
  Eigen::Index samples_ = 0;
  Eigen::Index dim_ = 0;
  Eigen::VectorXd sigma_;
  Eigen::VectorXd all_sigma_;
  Eigen::MatrixXd u_;
};

/// Projection of one target onto the factored range.
struct TargetProjection {
  Eigen::VectorXd z;          // U^T t
  double residual_perp = 0.0; // ||t - U z||^2, the part no weight vector can fit
};

TargetProjection project_target(const SpectralFactors& factors, const Eigen::VectorXd& target);

/// Log marginal likelihood L(alpha, beta) of a Bayesian linear model with
/// prior N(0, alpha^-1 I) and noise precision beta, evaluated through the SVD:
///   n/2 log beta + D/2 log alpha - n/2 log 2pi - beta/2 ||Fm - t||^2
///   - alpha/2 m^T m - 1/2 log|A|,
/// with A = beta F^T F + alpha I and m = beta A^-1 F^T t. Not divided by n.
double log_evidence(const SpectralFactors& factors, const TargetProjection& target, double alpha,
                    double beta);

/// Maximizes L(alpha, beta) by the MacKay fixed point
///   gamma = sum beta s^2 / (alpha + beta s^2),
///   alpha <- gamma / m^T m,  beta <- (n - gamma) / ||Fm - t||^2,
/// clamping alpha to [alpha_min, alpha_max] and beta to beta_max.
///
/// Throws DegenerateTargetError for a constant target or when m^T m = 0.
/// Non-convergence is reported through `converged`; the best iterate seen is
/// returned.
EvidenceResult evidence_fixed_point(const SpectralFactors& factors, const Eigen::VectorXd& target,
                                    const EvidenceOptions& options = {});
EvidenceResult evidence_fixed_point(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                                    const EvidenceOptions& options = {});

struct LogMEReport {
  std::string extractor_id;
  double score = 0.0;                     // mean of per-class L/n
  std::vector<EvidenceResult> per_class;
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  Eigen::VectorXd singular_values;
};

/// One-vs-rest LogME: each class c contributes the maximized evidence of the
/// indicator target (label == c); the score is the mean over classes.
/// Features are used as stored.
LogMEReport logme_score(const FeatureBundle& bundle, const EvidenceOptions& options = {});

/// (high - low) / low * 100. Requires low > 0.
double improvement_rate(double low, double high);

struct RankedExtractor {
  std::string extractor_id;
  double score = 0.0;
};

/// Scores every bundle and sorts by descending score, ties by extractor id.
/// All bundles must share labels and source hash.
std::vector<RankedExtractor> rank_extractors(std::span<const FeatureBundle> bundles,
                                             const EvidenceOptions& options = {});
std::vector<RankedExtractor> rank_reports(std::span<const LogMEReport> reports);

/// Column-wise z-scoring (zero-variance columns are only centered).
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& features);

}  // namespace motorfm
