#include "motorfm/workflow.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>
#include <unordered_map>

#include "motorfm/error.hpp"
#include "motorfm/extractors.hpp"

namespace motorfm {

using nlohmann::json;

namespace {

template <typename F>
auto staged(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::string ratio_label(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", r);
  return buf;
}

}  // namespace

json DataSource::to_json() const {
  if (synth) return {{"synth", synth->to_json()}};
  if (manifest) return {{"manifest", manifest->generic_string()}};
  return json::object();
}

void PipelineConfig::validate() const {
  if (!(target_rate_hz > 0.0)) throw ConfigError("pipeline: target rate must be positive");
  if (channels == 0) throw ConfigError("pipeline: channel count must be positive");
  if (window_length == 0 || stride == 0) throw ConfigError("pipeline: window length and stride must be positive");
  if (!(train_fraction > 0.0) || !(test_fraction > 0.0) ||
      std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("pipeline: train and test fractions must be positive and sum to 1");
  }
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.target_rate_hz = j.value("target_rate_hz", c.target_rate_hz);
  c.channels = j.value("channels", c.channels);
  c.window_length = j.value("window_length", c.window_length);
  c.stride = j.value("stride", c.stride);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.validate();
  return c;
}

json PipelineConfig::to_json() const {
  return {{"target_rate_hz", target_rate_hz}, {"channels", channels},
          {"window_length", window_length},   {"stride", stride},
          {"train_fraction", train_fraction}, {"test_fraction", test_fraction},
          {"split_seed", split_seed}};
}

PreparedData prepare_data(const DataSource& source, const PipelineConfig& config) {
  config.validate();
  std::uint64_t num_classes = 0;
  auto records = staged("ingest", [&] {
    if (source.synth) {
      num_classes = source.synth->classes.size();
      return generate(*source.synth);
    }
    if (!source.manifest) throw ConfigError("no data source given");
    const auto manifest = load_manifest(*source.manifest);
    num_classes = manifest.class_map.num_classes();
    return load_records(manifest, source.manifest->parent_path());
  });
  staged("resample", [&] {
    for (auto& r : records) r = align_and_stack(r, config.target_rate_hz, config.channels);
    return 0;
  });
  PreparedData data;
  data.all = staged("window", [&] {
    auto ds = window_records(records, config.window_length, config.stride, num_classes);
    if (ds.empty()) throw DomainError("no record is long enough for one window");
    return ds;
  });
  auto [train, test] = staged("split", [&] {
    return split(data.all, config.train_fraction, config.test_fraction, config.split_seed);
  });
  data.train = std::move(train);
  data.test = std::move(test);
  return data;
}

// ---------------------------------------------------------------------------

AssessColumn assess_bundles(std::span<const FeatureBundle> bundles, const EvidenceOptions& options,
                            double ratio) {
  if (bundles.empty()) throw ConfigError("assess: no feature bundles");
  for (const auto& b : bundles) {
    if (b.labels != bundles.front().labels) {
      throw ConfigError("assess: bundle " + b.extractor_id + " has different labels from " +
                        bundles.front().extractor_id);
    }
    if (b.source_hash != bundles.front().source_hash) {
      throw ConfigError("assess: bundle " + b.extractor_id + " was extracted from a different dataset");
    }
  }
  AssessColumn col;
  col.ratio = ratio;
  for (const auto& b : bundles) col.reports.push_back(logme_score(b, options));
  col.ranking = rank_reports(col.reports);
  for (std::size_t i = 0; i + 1 < col.ranking.size(); ++i) {
    const double low = col.ranking[i + 1].score;
    col.improvement.push_back(low > 0.0 ? std::optional(improvement_rate(low, col.ranking[i].score))
                                        : std::nullopt);
  }
  return col;
}

AssessReport run_assess(const PreparedData& data, std::span<const std::string> extractors,
                        std::span<const double> ratios, std::uint64_t seed,
                        const EvidenceOptions& options, bool standardize) {
  if (extractors.empty()) throw ConfigError("assess: no extractors");
  if (ratios.empty()) throw ConfigError("assess: no ratios");
  std::vector<std::unique_ptr<Extractor>> made;
  for (const auto& spec : extractors) made.push_back(staged("extract", [&] { return make_extractor(spec); }));

  AssessReport report;
  for (const auto& e : made) report.extractors.push_back(e->id());
  for (double ratio : ratios) {
    const auto sub = staged("subset", [&] { return subset(data.train, ratio, seed); });
    std::vector<FeatureBundle> bundles;
    for (const auto& e : made) {
      bundles.push_back(staged("extract", [&] { return extract_all(*e, sub); }));
      if (standardize) bundles.back().features = standardize_columns(bundles.back().features);
    }
    report.columns.push_back(staged("logme", [&] { return assess_bundles(bundles, options, ratio); }));
  }
  report.config = {{"extractors", report.extractors},
                   {"ratios", std::vector<double>(ratios.begin(), ratios.end())},
                   {"seed", seed},
                   {"standardize", standardize},
                   {"tol", options.tol},
                   {"max_iter", options.max_iter}};
  return report;
}

Table assess_table(const AssessReport& report) {
  Table t;
  t.config = report.config;
  const bool with_rates = report.extractors.size() > 1;
  t.columns.emplace_back("extractor");
  for (const auto& col : report.columns) {
    t.columns.push_back("logme@" + ratio_label(col.ratio));
    if (with_rates) t.columns.push_back("improvement@" + ratio_label(col.ratio));
  }
  for (std::size_t e = 0; e < report.extractors.size(); ++e) {
    const auto& id = report.extractors[e];
    std::vector<Cell> row{id};
    for (const auto& col : report.columns) {
      row.emplace_back(col.reports[e].score);
      if (!with_rates) continue;
      Cell rate;
      for (std::size_t r = 0; r + 1 < col.ranking.size(); ++r) {
        if (col.ranking[r].extractor_id == id && col.improvement[r]) rate = *col.improvement[r];
      }
      row.push_back(rate);
    }
    t.rows.push_back(std::move(row));
  }
  t.details = assess_details(report);
  return t;
}

json assess_details(const AssessReport& report) {
  json columns = json::array();
  for (const auto& col : report.columns) {
    json extractors = json::array();
    for (const auto& r : col.reports) {
      json classes = json::array();
      for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& pc = r.per_class[c];
        classes.push_back({{"class", c},
                           {"alpha", pc.alpha},
                           {"beta", pc.beta},
                           {"log_evidence_per_sample", pc.log_evidence_per_sample},
                           {"iterations", pc.iterations},
                           {"converged", pc.converged}});
      }
      extractors.push_back({{"id", r.extractor_id},
                            {"score", r.score},
                            {"n", r.n},
                            {"dim", r.dim},
                            {"num_classes", r.num_classes},
                            {"per_class", std::move(classes)}});
    }
    json ranking = json::array();
    for (const auto& r : col.ranking) ranking.push_back({{"id", r.extractor_id}, {"score", r.score}});
    json rates = json::array();
    for (std::size_t i = 0; i < col.improvement.size(); ++i) {
      rates.push_back({{"higher", col.ranking[i].extractor_id},
                       {"lower", col.ranking[i + 1].extractor_id},
                       {"rate_percent", col.improvement[i] ? json(*col.improvement[i]) : json(nullptr)}});
    }
    columns.push_back({{"ratio", col.ratio},
                       {"extractors", std::move(extractors)},
                       {"ranking", std::move(ranking)},
                       {"improvement_rates", std::move(rates)}});
  }
  return {{"columns", std::move(columns)}};
}

// ---------------------------------------------------------------------------

void SweepSpec::validate() const {
  if (ratios.empty()) throw ConfigError("sweep: no ratios");
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] > 0.0 && ratios[i] <= 1.0)) throw ConfigError("sweep: ratios must lie in (0, 1]");
    if (i > 0 && !(ratios[i] > ratios[i - 1])) throw ConfigError("sweep: ratios must be strictly increasing");
  }
  if (seeds.empty()) throw ConfigError("sweep: no seeds");
  if (extractors.empty()) throw ConfigError("sweep: no extractors");
  for (const auto& e : extractors) (void)make_extractor(e);
  if (probes.empty() && finetune.empty()) throw ConfigError("sweep: no probe kinds or fine-tuning modes");
  if (jobs == 0) throw ConfigError("sweep: jobs must be positive");
  train.validate();
}

SweepSpec SweepSpec::from_json(const json& j) {
  SweepSpec s;
  s.ratios = j.value("ratios", s.ratios);
  s.seeds = j.value("seeds", s.seeds);
  s.extractors = j.value("extractors", s.extractors);
  if (j.contains("probes")) {
    s.probes.clear();
    for (const auto& p : j.at("probes")) s.probes.push_back(parse_probe_kind(p.get<std::string>()));
  }
  if (j.contains("finetune")) {
    s.finetune.clear();
    for (const auto& m : j.at("finetune")) s.finetune.push_back(TuneMode::parse(m.get<std::string>()));
  }
  s.grid = j.value("grid", s.grid);
  s.standardize = j.value("standardize", s.standardize);
  s.timing = j.value("timing", s.timing);
  s.jobs = j.value("jobs", s.jobs);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    s.train.learning_rate = t.value("lr", s.train.learning_rate);
    s.train.epochs = t.value("epochs", s.train.epochs);
    s.train.batch_size = t.value("batch", s.train.batch_size);
    s.train.hidden = t.value("hidden", s.train.hidden);
    s.train.standardize = t.value("standardize", s.train.standardize);
  }
  s.validate();
  return s;
}

json SweepSpec::to_json() const {
  json probe_names = json::array();
  for (auto p : probes) probe_names.push_back(std::string(to_string(p)));
  json modes = json::array();
  for (const auto& m : finetune) modes.push_back(m.str());
  return {{"ratios", ratios},
          {"seeds", seeds},
          {"extractors", extractors},
          {"probes", std::move(probe_names)},
          {"finetune", std::move(modes)},
          {"grid", grid},
          {"standardize", standardize},
          {"timing", timing},
          {"train",
           {{"lr", train.learning_rate},
            {"epochs", train.epochs},
            {"batch", train.batch_size},
            {"hidden", train.hidden},
            {"standardize", train.standardize}}}};
}

bool SweepResult::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.metrics; });
}

FeatureBundle select_rows(const FeatureBundle& bundle, std::span<const std::uint64_t> bundle_ids,
                          std::span<const std::uint64_t> wanted_ids, const Digest& source_hash) {
  if (bundle_ids.size() != bundle.size()) throw DomainError("select_rows: one id per bundle row required");
  std::unordered_map<std::uint64_t, Eigen::Index> row_of;
  row_of.reserve(bundle_ids.size());
  for (std::size_t i = 0; i < bundle_ids.size(); ++i) row_of.emplace(bundle_ids[i], static_cast<Eigen::Index>(i));
  FeatureBundle out;
  out.extractor_id = bundle.extractor_id;
  out.num_classes = bundle.num_classes;
  out.source_hash = source_hash;
  out.features.resize(static_cast<Eigen::Index>(wanted_ids.size()), bundle.features.cols());
  out.labels.reserve(wanted_ids.size());
  for (std::size_t i = 0; i < wanted_ids.size(); ++i) {
    const auto it = row_of.find(wanted_ids[i]);
    if (it == row_of.end()) throw DomainError("select_rows: unknown sample id " + std::to_string(wanted_ids[i]));
    out.features.row(static_cast<Eigen::Index>(i)) = bundle.features.row(it->second);
    out.labels.push_back(bundle.labels[static_cast<std::size_t>(it->second)]);
  }
  return out;
}

namespace {

struct ExtractedSplit {
  FeatureBundle train;
  FeatureBundle test;
  std::string error;
};

struct SubsetDraw {
  WindowedDataset data;
  Digest hash{};
  std::string error;
};

struct CellJob {
  std::size_t ratio_index;
  std::size_t seed_index;
  std::size_t extractor_index;
  std::optional<ProbeKind> probe;
  std::optional<TuneMode> mode;
};

void standardize_pair(FeatureBundle& train, FeatureBundle& test) {
  const Eigen::RowVectorXd mean = train.features.colwise().mean();
  Eigen::RowVectorXd scale =
      ((train.features.rowwise() - mean).array().square().colwise().sum() /
       static_cast<double>(train.size())).sqrt().matrix();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale(j) > 0.0)) scale(j) = 1.0;
  }
  train.features = ((train.features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  test.features = ((test.features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

HyperParams choose_params(ProbeKind kind, const FeatureBundle& train, const WindowedDataset& sub,
                          std::uint64_t seed) {
  const auto counts = sub.class_counts();
  const bool splittable = std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c == 0 || c >= 2; });
  if (!splittable) return default_params(kind, train.dim());
  const std::vector<double> fractions{0.8, 0.2};
  const std::vector<std::string> names{"fit", "val"};
  const auto parts = partition(sub, fractions, seed, names);
  const auto fit = select_rows(train, sub.ids, parts[0].ids, train.source_hash);
  const auto val = select_rows(train, sub.ids, parts[1].ids, train.source_hash);
  return grid_search(kind, expand_grid(default_grid(kind, train.dim())), fit, val).best;
}

}  // namespace

SweepResult run_sweep(const PreparedData& data, const SweepSpec& spec) {
  spec.validate();
  const auto num_classes = static_cast<std::size_t>(data.all.num_classes);

  std::vector<ExtractedSplit> extracted(spec.extractors.size());
  std::vector<std::string> extractor_ids;
  for (std::size_t e = 0; e < spec.extractors.size(); ++e) {
    const auto ex = make_extractor(spec.extractors[e]);
    extractor_ids.push_back(ex->id());
    try {
      extracted[e].train = extract_all(*ex, data.train);
      extracted[e].test = extract_all(*ex, data.test);
    } catch (const std::exception& err) {
      extracted[e].error = err.what();
    }
  }

  std::vector<SubsetDraw> draws(spec.ratios.size() * spec.seeds.size());
  for (std::size_t r = 0; r < spec.ratios.size(); ++r) {
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
      auto& d = draws[r * spec.seeds.size() + s];
      try {
        d.data = subset(data.train, spec.ratios[r], spec.seeds[s]);
        d.hash = dataset_hash(d.data);
      } catch (const std::exception& err) {
        d.error = err.what();
      }
    }
  }

  std::vector<CellJob> jobs;
  for (std::size_t r = 0; r < spec.ratios.size(); ++r) {
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
      for (std::size_t e = 0; e < spec.extractors.size(); ++e) {
        for (auto p : spec.probes) jobs.push_back({r, s, e, p, std::nullopt});
        for (const auto& m : spec.finetune) jobs.push_back({r, s, e, std::nullopt, m});
      }
    }
  }

  std::vector<SweepRow> rows(jobs.size());
  auto run_cell = [&](std::size_t index) {
    const auto& job = jobs[index];
    auto& row = rows[index];
    row.ratio = spec.ratios[job.ratio_index];
    row.seed = spec.seeds[job.seed_index];
    row.method = extractor_ids[job.extractor_index] + "+" +
                 (job.probe ? std::string(to_string(*job.probe)) : job.mode->str());
    const auto& draw = draws[job.ratio_index * spec.seeds.size() + job.seed_index];
    const auto& ex = extracted[job.extractor_index];
    if (!draw.error.empty()) {
      row.failed_stage = "subset";
      row.error = draw.error;
      return;
    }
    if (!ex.error.empty()) {
      row.failed_stage = "extract";
      row.error = ex.error;
      return;
    }
    row.train_ids = draw.data.ids;
    const char* stage = job.probe ? "probe" : "finetune";
    try {
      auto train = select_rows(ex.train, data.train.ids, draw.data.ids, draw.hash);
      auto test = ex.test;
      const auto start = std::chrono::steady_clock::now();
      Labels predicted;
      if (job.probe) {
        if (spec.standardize) standardize_pair(train, test);
        HyperParams params = default_params(*job.probe, train.dim());
        if (spec.grid) {
          stage = "grid";
          params = choose_params(*job.probe, train, draw.data, row.seed);
          stage = "probe";
        }
        if (*job.probe == ProbeKind::forest) params["seed"] = static_cast<double>(row.seed);
        predicted = fit_predict(*job.probe, params, train, test.features);
      } else {
        TrainConfig config = spec.train;
        config.mode = *job.mode;
        config.seed = row.seed;
        const auto trained = train_classifier(train, config);
        predicted = trained.model.predict(test.features);
      }
      const auto stop = std::chrono::steady_clock::now();
      row.metrics = evaluate(predicted, test.labels, num_classes);
      if (spec.timing) row.train_seconds = std::chrono::duration<double>(stop - start).count();
    } catch (const std::exception& err) {
      row.failed_stage = stage;
      row.error = err.what();
    }
  };

  const std::size_t workers = std::min(spec.jobs, std::max<std::size_t>(jobs.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) run_cell(i);
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.ratio != b.ratio) return a.ratio < b.ratio;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.method < b.method;
  });

  SweepResult result;
  result.rows = std::move(rows);
  result.test_ids = data.test.ids;
  result.config = spec.to_json();
  return result;
}

Table sweep_table(const SweepResult& result) {
  Table t;
  t.columns = {"ratio", "seed", "method", "accuracy", "macro_f1", "train_seconds"};
  t.config = result.config;
  json failures = json::array();
  for (const auto& r : result.rows) {
    std::vector<Cell> row{r.ratio, static_cast<std::int64_t>(r.seed), r.method};
    if (r.metrics) {
      row.emplace_back(r.metrics->accuracy);
      row.emplace_back(r.metrics->macro_f1);
      row.emplace_back(r.train_seconds);
    } else {
      for (int i = 0; i < 3; ++i) row.emplace_back(FailedCell{r.failed_stage});
      failures.push_back({{"ratio", r.ratio}, {"seed", r.seed}, {"method", r.method},
                          {"stage", r.failed_stage}, {"error", r.error}});
    }
    t.rows.push_back(std::move(row));
  }
  if (!failures.empty()) t.details = {{"failures", std::move(failures)}};
  return t;
}

}  // namespace motorfm
