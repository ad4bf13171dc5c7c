#include <doctest.h>

#include <cmath>
#include <numbers>

#include "motorfm/error.hpp"
#include "motorfm/extractors.hpp"
#include "motorfm/probes.hpp"
#include "motorfm/signal.hpp"
#include "motorfm/synthetic.hpp"
#include "oracles.hpp"

using namespace motorfm;

namespace {

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

SynthConfig one_class(FaultKind kind, double fr) {
  SynthConfig cfg;
  cfg.classes = {{kind, fr, 1.0}};
  cfg.per_class = 1;
  cfg.duration_s = 1.0;
  cfg.noise_sigma = 0.0;
  return cfg;
}

// RMS over one period of a*sin(th) + h*sin(2 th), integrated numerically.
double waveform_rms(double a, double h) {
  const double ms = oracle::simpson(
      [&](double th) {
        const double v = a * std::sin(th) + h * std::sin(2.0 * th);
        return v * v;
      },
      0.0, 2.0 * std::numbers::pi);
  return std::sqrt(ms / (2.0 * std::numbers::pi));
}

}  // namespace

TEST_CASE("generation is deterministic under seed") {
  auto cfg = SynthConfig::reference();
  cfg.per_class = 2;
  cfg.duration_s = 1.0;
  cfg.seed = 17;
  CHECK(generate(cfg) == generate(cfg));
  auto other = cfg;
  other.seed = 18;
  CHECK_FALSE(generate(other) == generate(cfg));
}

TEST_CASE("record layout") {
  auto cfg = SynthConfig::reference();
  cfg.per_class = 2;
  cfg.duration_s = 1.5;
  const auto recs = generate(cfg);
  REQUIRE(recs.size() == 14);
  CHECK(recs[0].label == 0);
  CHECK(recs[13].label == 6);
  CHECK(recs[13].meta.fault_kind == FaultKind::inter_coil);
  CHECK(recs[13].meta.fault_ratio == 50.0);
  for (const auto& r : recs) {
    REQUIRE(r.channels.size() == 4);
    CHECK(r.channels[0].samples.size() == 3000);
    CHECK(r.channels[3].samples.size() == 768);
  }
}

TEST_CASE("healthy currents have equal RMS") {
  const auto rec = generate(one_class(FaultKind::normal, 0.0)).front();
  const double r0 = rms(rec.channels[0].samples);
  CHECK(std::abs(rms(rec.channels[1].samples) - r0) <= 1e-12);
  CHECK(std::abs(rms(rec.channels[2].samples) - r0) <= 1e-12);
}

TEST_CASE("faulted phase RMS ratio at FR = 50") {
  for (auto [kind, partner] : {std::pair{FaultKind::inter_turn, 1}, {FaultKind::inter_coil, 2}}) {
    const auto rec = generate(one_class(kind, 50.0)).front();
    const double ratio = rms(rec.channels[0].samples) / rms(rec.channels[static_cast<std::size_t>(partner)].samples);
    // Faulted phase: amplitude 0.75 with harmonic 0.3*0.5*0.75; partner: 1 with 0.3*0.5.
    const double expected = waveform_rms(0.75, 0.1125) / waveform_rms(1.0, 0.15);
    CHECK(expected == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(std::abs(ratio - expected) <= 1e-6);
  }
}

TEST_CASE("faulted phase RMS decreases with severity") {
  double previous = INFINITY;
  for (double fr : {0.0, 5.0, 10.0, 25.0, 40.0, 50.0, 75.0, 100.0}) {
    const auto kind = fr == 0.0 ? FaultKind::normal : FaultKind::inter_turn;
    const double r = rms(generate(one_class(kind, fr)).front().channels[0].samples);
    CHECK(r < previous);
    previous = r;
  }
}

TEST_CASE("configuration errors") {
  SynthConfig cfg;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg = one_class(FaultKind::normal, 0.0);
  cfg.duration_s = 0.0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  CHECK_THROWS_AS(generate(one_class(FaultKind::normal, 10.0)), ConfigError);
  CHECK_THROWS_AS(generate(one_class(FaultKind::inter_coil, 101.0)), ConfigError);
}

TEST_CASE("json round trip") {
  auto cfg = SynthConfig::reference();
  cfg.seed = 99;
  cfg.noise_sigma = 0.02;
  const auto back = SynthConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("generator output passes the pipeline as 4 x 512 windows") {
  auto cfg = SynthConfig::reference();
  cfg.per_class = 1;
  cfg.duration_s = 2.0;
  std::vector<SignalRecord> aligned;
  for (const auto& r : generate(cfg)) aligned.push_back(align_and_stack(r, 512.0, 4));
  const auto ds = window_records(aligned, 512, 512, cfg.classes.size());
  CHECK(ds.channels == 4);
  CHECK(ds.length == 512);
  CHECK(ds.size() == 14);
}

TEST_CASE("three-class task is separable by a ridge probe on stat features") {
  SynthConfig cfg;
  cfg.classes = {{FaultKind::normal, 0.0, 1.0}, {FaultKind::inter_turn, 50.0, 1.0}, {FaultKind::inter_coil, 50.0, 1.0}};
  cfg.per_class = 50;
  cfg.duration_s = 2.0;
  cfg.noise_sigma = 0.05;
  std::vector<SignalRecord> aligned;
  for (const auto& r : generate(cfg)) aligned.push_back(align_and_stack(r, 512.0, 4));
  const auto [train, test] = split(window_records(aligned, 512, 512, 3), 0.8, 0.2, 0);

  const StatFeatures stat;
  auto tr = extract_all(stat, train);
  auto te = extract_all(stat, test);
  const Eigen::RowVectorXd mean = tr.features.colwise().mean();
  Eigen::RowVectorXd sd = ((tr.features.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) sd(j) = sd(j) > 0.0 ? sd(j) : 1.0;
  tr.features = (tr.features.rowwise() - mean).array().rowwise() / sd.array();
  te.features = (te.features.rowwise() - mean).array().rowwise() / sd.array();

  const auto pred = linear_probe_fit_predict(tr, te, 1.0);
  CHECK(evaluate(pred, te.labels, 3).accuracy > 0.9);
}
