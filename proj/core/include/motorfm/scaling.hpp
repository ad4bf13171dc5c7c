#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace motorfm {

/// C = 6 N D for N parameters and D processed tokens.
double compute_cost(double params, double tokens);
/// Same with D = batch * steps.
double compute_cost(double params, double batch, double steps);

struct ScalingPoint {
  double x = 0.0;
  double loss = 0.0;
};

/// L(x) = l_inf + (x0 / x)^alpha
struct ScalingFit {
  double l_inf = 0.0;
  double x0 = 1.0;
  double alpha = 1.0;
  double rss = 0.0;
  std::vector<ScalingPoint> points;
};

/// Residual sum of squares of the law at the given points.
double scaling_rss(std::span<const ScalingPoint> points, double l_inf, double x0, double alpha);

/// Grid over (l_inf, alpha) with closed-form x0, then Nelder-Mead polish.
/// Needs at least 4 points with distinct x > 0 and loss > 0.
ScalingFit fit_scaling_law(std::span<const ScalingPoint> points);

double predict_loss(const ScalingFit& fit, double x);

/// Two-column CSV with a header row; columns named x and loss (or L).
std::vector<ScalingPoint> read_scaling_points(const std::filesystem::path& path);

}  // namespace motorfm
