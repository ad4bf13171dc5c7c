#pragma once

// The desk-scale synthetic task shared by the workflow and acceptance suites:
// healthy, inter-turn 50 % and inter-coil 50 %, ten 10 s records per class.

#include <cstdint>

#include "motorfm/synthetic.hpp"
#include "motorfm/workflow.hpp"

namespace desk {

inline motorfm::SynthConfig config(std::uint64_t seed) {
  using motorfm::FaultKind;
  motorfm::SynthConfig cfg;
  cfg.classes = {{FaultKind::normal, 0.0, 1.0},
                 {FaultKind::inter_turn, 50.0, 1.0},
                 {FaultKind::inter_coil, 50.0, 1.0}};
  cfg.per_class = 10;
  cfg.duration_s = 10.0;
  cfg.noise_sigma = 0.05;
  cfg.seed = seed;
  return cfg;
}

inline motorfm::PreparedData prepare(std::uint64_t seed) {
  motorfm::DataSource source;
  source.synth = config(seed);
  motorfm::PipelineConfig pipeline;
  pipeline.split_seed = seed;
  return motorfm::prepare_data(source, pipeline);
}

}  // namespace desk
