#include "motorfm/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "motorfm/error.hpp"

namespace motorfm {

double compute_cost(double params, double tokens) {
  if (!(params > 0.0) || !(tokens > 0.0)) {
    throw DomainError("compute_cost: parameter count and data volume must be positive");
  }
  return 6.0 * params * tokens;
}

double compute_cost(double params, double batch, double steps) {
  if (!(batch > 0.0) || !(steps > 0.0)) {
    throw DomainError("compute_cost: batch size and step count must be positive");
  }
  return compute_cost(params, batch * steps);
}

double scaling_rss(std::span<const ScalingPoint> points, double l_inf, double x0, double alpha) {
  double rss = 0.0;
  for (const auto& p : points) {
    const double r = p.loss - l_inf - std::pow(x0 / p.x, alpha);
    rss += r * r;
  }
  return rss;
}

namespace {

constexpr int kGridLevels = 64;

void check_points(std::span<const ScalingPoint> points) {
  if (points.size() < 4) {
    throw DomainError("fit_scaling_law: need at least 4 points, got " + std::to_string(points.size()));
  }
  std::vector<double> xs;
  for (const auto& p : points) {
    if (!(p.x > 0.0) || !std::isfinite(p.x)) throw DomainError("fit_scaling_law: x must be positive");
    if (!(p.loss > 0.0) || !std::isfinite(p.loss)) {
      throw DomainError("fit_scaling_law: loss must be positive");
    }
    xs.push_back(p.x);
  }
  std::sort(xs.begin(), xs.end());
  if (std::adjacent_find(xs.begin(), xs.end()) != xs.end()) {
    throw DomainError("fit_scaling_law: x values must be distinct");
  }
}

struct Problem {
  std::span<const ScalingPoint> points;
  double min_loss;
};

// v = (l_inf, log alpha, log x0)
double objective(const gsl_vector* v, void* params) {
  const auto& prob = *static_cast<const Problem*>(params);
  const double l_inf = gsl_vector_get(v, 0);
  if (!(l_inf >= 0.0) || !(l_inf < prob.min_loss)) return std::numeric_limits<double>::max();
  const double alpha = std::exp(gsl_vector_get(v, 1));
  const double x0 = std::exp(gsl_vector_get(v, 2));
  const double rss = scaling_rss(prob.points, l_inf, x0, alpha);
  return std::isfinite(rss) ? rss : std::numeric_limits<double>::max();
}

struct Candidate {
  double l_inf, alpha, x0, rss;
};

Candidate polish(const Problem& prob, Candidate start) {
  gsl_multimin_function fn{&objective, 3, const_cast<Problem*>(&prob)};
  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector* step = gsl_vector_alloc(3);
  auto* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);

  Candidate best = start;
  for (int restart = 0; restart < 8; ++restart) {
    gsl_vector_set(x, 0, best.l_inf);
    gsl_vector_set(x, 1, std::log(best.alpha));
    gsl_vector_set(x, 2, std::log(best.x0));
    const double room = std::min(best.l_inf, prob.min_loss - best.l_inf);
    gsl_vector_set(step, 0, std::max(0.25 * room, 1e-6 * prob.min_loss));
    gsl_vector_set(step, 1, 0.1);
    gsl_vector_set(step, 2, 0.1);
    gsl_multimin_fminimizer_set(solver, &fn, x, step);
    for (int it = 0; it < 20000; ++it) {
      if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-13) == GSL_SUCCESS) break;
    }
    const double rss = gsl_multimin_fminimizer_minimum(solver);
    if (!(rss < best.rss)) break;
    const gsl_vector* v = gsl_multimin_fminimizer_x(solver);
    const bool improved = rss < best.rss * (1.0 - 1e-12);
    best = {gsl_vector_get(v, 0), std::exp(gsl_vector_get(v, 1)), std::exp(gsl_vector_get(v, 2)), rss};
    if (!improved) break;
  }

  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return best;
}

}  // namespace

ScalingFit fit_scaling_law(std::span<const ScalingPoint> points) {
  check_points(points);
  double min_loss = points.front().loss;
  for (const auto& p : points) min_loss = std::min(min_loss, p.loss);
  const Problem prob{points, min_loss};

  Candidate best{0.0, 1.0, 1.0, std::numeric_limits<double>::infinity()};
  const double n = static_cast<double>(points.size());
  for (int i = 0; i < kGridLevels; ++i) {
    const double l_inf = min_loss * i / kGridLevels;
    for (int j = 0; j < kGridLevels; ++j) {
      const double alpha = std::pow(10.0, -2.0 + 3.0 * j / (kGridLevels - 1));
      double c = 0.0;
      for (const auto& p : points) c += std::log(p.loss - l_inf) + alpha * std::log(p.x);
      const double x0 = std::exp(c / n / alpha);
      const double rss = scaling_rss(points, l_inf, x0, alpha);
      if (std::isfinite(rss) && rss < best.rss) best = {l_inf, alpha, x0, rss};
    }
  }
  if (!std::isfinite(best.rss)) throw DomainError("fit_scaling_law: no finite grid candidate");

  const auto old_handler = gsl_set_error_handler_off();
  best = polish(prob, best);
  gsl_set_error_handler(old_handler);

  ScalingFit fit;
  fit.l_inf = best.l_inf;
  fit.alpha = best.alpha;
  fit.x0 = best.x0;
  fit.rss = scaling_rss(points, fit.l_inf, fit.x0, fit.alpha);
  fit.points.assign(points.begin(), points.end());
  return fit;
}

double predict_loss(const ScalingFit& fit, double x) {
  if (!(x > 0.0)) throw DomainError("predict_loss: x must be positive");
  return fit.l_inf + std::pow(fit.x0 / x, fit.alpha);
}

std::vector<ScalingPoint> read_scaling_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty points file");
  std::vector<ScalingPoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected two columns");
    }
    try {
      std::size_t used_x = 0, used_l = 0;
      const std::string xs = line.substr(0, comma), ls = line.substr(comma + 1);
      ScalingPoint p{std::stod(xs, &used_x), std::stod(ls, &used_l)};
      if (used_x != xs.size() || used_l != ls.size()) throw std::invalid_argument("trailing");
      points.push_back(p);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
  }
  return points;
}

}  // namespace motorfm
