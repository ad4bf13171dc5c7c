#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "motorfm/dataio.hpp"
#include "motorfm/record.hpp"

namespace motorfm {

struct SynthClass {
  FaultKind kind = FaultKind::normal;
  double fault_ratio = 0.0;  // percent
  double power_kw = 1.0;     // scales every channel's amplitude
};

/// PMSM-like three-phase current plus vibration generator settings.
///
/// Signal model, with theta_p = 2*pi*f*t + phi - 2*pi*p/3 and s = FR/100:
///  - phase p current: a_p*sin(theta_p) + h_p*sin(2*theta_p); healthy
///    phases have a_p = P, the faulted phase U has a_p = P*(1 - 0.5*s).
///  - the second harmonic h_p = 0.3*s*a_p sits on the pair (U, V) for
///    inter-turn faults and on (U, W) for inter-coil faults.
///  - vibration: P*[sin(psi) + 0.5*sin(2 psi) + 0.2*sin(5 psi)] plus
///    sidebands 0.5*s*P*sin(2*pi*(f -/+ 5)*t + chi).
///  - white Gaussian noise of std noise_sigma*P on every channel.
struct SynthConfig {
  std::vector<SynthClass> classes;
  std::size_t per_class = 10;         // records per class
  double duration_s = 10.0;
  double fundamental_hz = 50.0;
  std::vector<double> rates_hz{2000.0, 2000.0, 2000.0, 512.0};
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;

  static SynthConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;

  /// Healthy plus inter-turn and inter-coil faults at 10/25/50 % FR.
  static SynthConfig reference();
};

inline constexpr double kFaultAmplitudeSlope = 0.5;
inline constexpr double kHarmonicSlope = 0.3;
inline constexpr double kSidebandSlope = 0.5;
inline constexpr double kSidebandOffsetHz = 5.0;

/// Records in class-major order; record r uses seed ^ r. Labels are class indices.
std::vector<SignalRecord> generate(const SynthConfig& config);

/// Manifest with one class-map entry per configured class.
DatasetManifest synth_manifest(const SynthConfig& config,
                               const std::vector<std::filesystem::path>& record_paths);

}  // namespace motorfm
