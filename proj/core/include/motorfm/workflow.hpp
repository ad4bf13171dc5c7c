#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "motorfm/logme.hpp"
#include "motorfm/lora.hpp"
#include "motorfm/probes.hpp"
#include "motorfm/report.hpp"
#include "motorfm/signal.hpp"
#include "motorfm/synthetic.hpp"

namespace motorfm {

/// Where records come from: a synthetic configuration or a manifest file.
struct DataSource {
  std::optional<SynthConfig> synth;
  std::optional<std::filesystem::path> manifest;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Resample -> window -> stratified train/test split.
struct PipelineConfig {
  double target_rate_hz = 512.0;
  std::size_t channels = 4;
  std::size_t window_length = 512;
  std::size_t stride = 512;
  double train_fraction = 0.8;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;

  void validate() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct PreparedData {
  WindowedDataset all;
  WindowedDataset train;
  WindowedDataset test;
};

/// Stage failures surface as StageError with stage "ingest", "resample",
/// "window" or "split".
PreparedData prepare_data(const DataSource& source, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Assessment

struct AssessColumn {
  double ratio = 1.0;
  std::vector<LogMEReport> reports;       // extractor order
  std::vector<RankedExtractor> ranking;   // best first
  /// improvement[i] = rate of ranking[i] over ranking[i + 1]; empty when the
  /// lower score is not positive.
  std::vector<std::optional<double>> improvement;
};

struct AssessReport {
  std::vector<std::string> extractors;
  std::vector<AssessColumn> columns;
  nlohmann::json config = nlohmann::json::object();
};

/// Scores bundles that share labels and source; ratio is informational.
AssessColumn assess_bundles(std::span<const FeatureBundle> bundles, const EvidenceOptions& options,
                            double ratio = 1.0);

/// For each ratio, subsets the training split with `seed`, extracts every
/// extractor and scores it, optionally z-scoring feature columns first.
/// Stage failures are StageError ("subset", "extract", "logme").
AssessReport run_assess(const PreparedData& data, std::span<const std::string> extractors,
                        std::span<const double> ratios, std::uint64_t seed,
                        const EvidenceOptions& options = {}, bool standardize = false);

/// Extractors x ratios table with LogME scores and, with more than one
/// extractor, the improvement over the next-ranked extractor per ratio.
Table assess_table(const AssessReport& report);
nlohmann::json assess_details(const AssessReport& report);

// ---------------------------------------------------------------------------
// Data-efficiency sweep

struct SweepSpec {
  std::vector<double> ratios{0.01, 0.05, 0.10, 0.20, 0.50, 0.80};
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> extractors{"stat"};
  std::vector<ProbeKind> probes{ProbeKind::linear};
  std::vector<TuneMode> finetune;
  /// Grid-search probe hyperparameters on an 80/20 split of each training
  /// subset; otherwise (or when a class has fewer than 2 samples) use
  /// default_params.
  bool grid = false;
  /// z-score probe inputs with statistics of the training subset.
  bool standardize = true;
  TrainConfig train;
  std::size_t jobs = 1;
  /// Record wall-clock training time; off gives byte-reproducible output.
  bool timing = true;

  void validate() const;
  static SweepSpec from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct SweepRow {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::string method;               // "<extractor>+<probe or mode>"
  std::optional<Metrics> metrics;   // empty when the cell failed
  double train_seconds = 0.0;
  std::string failed_stage;
  std::string error;
  std::vector<std::uint64_t> train_ids;
};

struct SweepResult {
  std::vector<SweepRow> rows;             // sorted by (ratio, seed, method)
  std::vector<std::uint64_t> test_ids;    // shared by every cell
  nlohmann::json config = nlohmann::json::object();

  [[nodiscard]] bool any_failed() const;
};

SweepResult run_sweep(const PreparedData& data, const SweepSpec& spec);

/// Long format: ratio,seed,method,accuracy,macro_f1,train_seconds.
Table sweep_table(const SweepResult& result);

/// Pulls the rows of `wanted_ids` (in that order) out of a bundle whose rows
/// carry `bundle_ids`. The result is tagged with `source_hash`, the hash of
/// the dataset those ids form.
FeatureBundle select_rows(const FeatureBundle& bundle, std::span<const std::uint64_t> bundle_ids,
                          std::span<const std::uint64_t> wanted_ids, const Digest& source_hash);

}  // namespace motorfm
