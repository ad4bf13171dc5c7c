#include "motorfm/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "motorfm/error.hpp"
#include "motorfm/rng.hpp"

namespace motorfm {

void SynthConfig::validate() const {
  if (classes.empty()) throw ConfigError("synth: no classes configured");
  if (!(duration_s > 0.0)) throw ConfigError("synth: duration must be positive");
  if (!(fundamental_hz > 0.0)) throw ConfigError("synth: fundamental must be positive");
  if (per_class == 0) throw ConfigError("synth: per_class must be positive");
  if (rates_hz.size() != 4) throw ConfigError("synth: expected 4 channel rates (3 currents + vibration)");
  for (double r : rates_hz) {
    if (!(r > 0.0)) throw ConfigError("synth: channel rates must be positive");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be non-negative");
  for (const auto& c : classes) {
    if (!(c.fault_ratio >= 0.0 && c.fault_ratio <= 100.0)) {
      throw ConfigError("synth: fault ratio must lie in [0, 100]");
    }
    if (c.kind == FaultKind::normal && c.fault_ratio != 0.0) {
      throw ConfigError("synth: normal class must have fault ratio 0");
    }
    if (!(c.power_kw > 0.0)) throw ConfigError("synth: power must be positive");
  }
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig cfg;
  for (const auto& c : j.at("classes")) {
    SynthClass sc;
    sc.kind = parse_fault_kind(c.value("fault_kind", std::string("normal")));
    sc.fault_ratio = c.value("fault_ratio", 0.0);
    sc.power_kw = c.value("power_kw", 1.0);
    cfg.classes.push_back(sc);
  }
  cfg.per_class = j.value("per_class", cfg.per_class);
  cfg.duration_s = j.value("duration", cfg.duration_s);
  cfg.fundamental_hz = j.value("fundamental", cfg.fundamental_hz);
  if (j.contains("rates")) cfg.rates_hz = j.at("rates").get<std::vector<double>>();
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

nlohmann::json SynthConfig::to_json() const {
  auto cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"fault_kind", std::string(to_string(c.kind))},
                   {"fault_ratio", c.fault_ratio},
                   {"power_kw", c.power_kw}});
  }
  return {{"classes", cls},       {"per_class", per_class},     {"duration", duration_s},
          {"fundamental", fundamental_hz}, {"rates", rates_hz}, {"noise_sigma", noise_sigma},
          {"seed", seed}};
}

SynthConfig SynthConfig::reference() {
  SynthConfig cfg;
  cfg.classes.push_back({FaultKind::normal, 0.0, 1.0});
  for (auto kind : {FaultKind::inter_turn, FaultKind::inter_coil}) {
    for (double fr : {10.0, 25.0, 50.0}) cfg.classes.push_back({kind, fr, 1.0});
  }
  return cfg;
}

std::vector<SignalRecord> generate(const SynthConfig& config) {
  config.validate();
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double f = config.fundamental_hz;
  std::vector<SignalRecord> records;
  records.reserve(config.classes.size() * config.per_class);

  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& cls = config.classes[c];
    const double s = cls.fault_ratio / 100.0;
    const double power = cls.power_kw;
    // Faulted phase is U; the harmonic partner is V (inter-turn) or W (inter-coil).
    double amplitude[3] = {power, power, power};
    double harmonic[3] = {0.0, 0.0, 0.0};
    if (cls.kind != FaultKind::normal) {
      amplitude[0] = power * (1.0 - kFaultAmplitudeSlope * s);
      const int partner = cls.kind == FaultKind::inter_turn ? 1 : 2;
      harmonic[0] = kHarmonicSlope * s * amplitude[0];
      harmonic[partner] = kHarmonicSlope * s * amplitude[partner];
    }

    for (std::size_t k = 0; k < config.per_class; ++k) {
      const std::uint64_t index = c * config.per_class + k;
      Rng rng(config.seed ^ index);
      const double phi = kTwoPi * rng.uniform();
      const double chi = kTwoPi * rng.uniform();

      SignalRecord rec;
      rec.label = static_cast<std::uint32_t>(c);
      rec.meta = LabelMeta{power, cls.kind, cls.fault_ratio};
      static constexpr const char* kNames[] = {"current_u", "current_v", "current_w", "vibration"};
      for (std::size_t ch = 0; ch < 4; ++ch) {
        const double rate = config.rates_hz[ch];
        const auto n = static_cast<std::size_t>(std::llround(config.duration_s * rate));
        Channel out{kNames[ch], rate, std::vector<double>(n)};
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / rate;
          double v = 0.0;
          if (ch < 3) {
            const double theta = kTwoPi * f * t + phi - kTwoPi * static_cast<double>(ch) / 3.0;
            v = amplitude[ch] * std::sin(theta) + harmonic[ch] * std::sin(2.0 * theta);
          } else {
            const double psi = kTwoPi * f * t + phi;
            v = power * (std::sin(psi) + 0.5 * std::sin(2.0 * psi) + 0.2 * std::sin(5.0 * psi));
            const double side = kSidebandSlope * s * power;
            v += side * (std::sin(kTwoPi * (f - kSidebandOffsetHz) * t + chi) +
                         std::sin(kTwoPi * (f + kSidebandOffsetHz) * t + chi));
          }
          out.samples[i] = v;
        }
        if (config.noise_sigma > 0.0) {
          for (auto& v : out.samples) v += config.noise_sigma * power * rng.normal();
        }
        rec.channels.push_back(std::move(out));
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

DatasetManifest synth_manifest(const SynthConfig& config,
                               const std::vector<std::filesystem::path>& record_paths) {
  if (record_paths.size() != config.classes.size() * config.per_class) {
    throw ConfigError("synth_manifest: one path per generated record required");
  }
  std::vector<ClassMapEntry> entries;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& cls = config.classes[c];
    entries.push_back({cls.power_kw, cls.kind, cls.fault_ratio, static_cast<std::uint32_t>(c)});
  }
  DatasetManifest m;
  m.class_map = ClassMap(std::move(entries));
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& cls = config.classes[c];
    for (std::size_t k = 0; k < config.per_class; ++k) {
      m.records.push_back(ManifestRecord{record_paths[c * config.per_class + k], "srec", {},
                                         LabelMeta{cls.power_kw, cls.kind, cls.fault_ratio}});
    }
  }
  m.validate();
  return m;
}

}  // namespace motorfm
