// motorfm: command-line front end for the assess / fine-tune workflow.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motorfm/dataio.hpp"
#include "motorfm/error.hpp"
#include "motorfm/extractors.hpp"
#include "motorfm/logme.hpp"
#include "motorfm/lora.hpp"
#include "motorfm/probes.hpp"
#include "motorfm/report.hpp"
#include "motorfm/scaling.hpp"
#include "motorfm/signal.hpp"
#include "motorfm/synthetic.hpp"
#include "motorfm/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace motorfm;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  fs::path out_dir = ".";
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Where a report named by --report lands: <parent>/<stem>.{csv,json}.
RenderedPaths render_to(const Table& table, const std::string& report, const Globals& g,
                        const std::string& fallback_stem) {
  if (report.empty()) return report_render(table, g.out_dir, fallback_stem);
  const fs::path p(report);
  return report_render(table, p.parent_path(), p.stem().string());
}

void print_paths(const RenderedPaths& p) {
  std::cout << "wrote " << p.csv.string() << "\n"
            << "wrote " << p.json.string() << "\n";
}

struct PipelineFlags {
  std::string synth_config;
  bool synth_reference = false;
  std::string manifest;
  PipelineConfig pipeline;
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& f) {
  app->add_option("--synth", f.synth_config, "synthetic config JSON");
  app->add_flag("--synth-reference", f.synth_reference, "use the built-in synthetic config");
  app->add_option("--manifest", f.manifest, "dataset manifest JSON");
  app->add_option("--rate", f.pipeline.target_rate_hz, "target sampling rate (Hz)");
  app->add_option("--channels", f.pipeline.channels, "expected channel count");
  app->add_option("--window-len", f.pipeline.window_length, "window length L");
  app->add_option("--stride", f.pipeline.stride, "window stride");
  app->add_option("--test-fraction", f.pipeline.test_fraction, "held-out test fraction");
}

DataSource make_source(const PipelineFlags& f, const Globals& g) {
  DataSource source;
  const int given = !f.synth_config.empty() + f.synth_reference + !f.manifest.empty();
  if (given != 1) throw ConfigError("give exactly one of --synth, --synth-reference, --manifest");
  if (!f.manifest.empty()) {
    source.manifest = fs::path(f.manifest);
  } else {
    source.synth = f.synth_reference ? SynthConfig::reference() : SynthConfig::from_json(read_json(f.synth_config));
    if (f.synth_reference) source.synth->seed = g.seed;
  }
  return source;
}

PipelineConfig resolved_pipeline(PipelineFlags f, const Globals& g) {
  f.pipeline.train_fraction = 1.0 - f.pipeline.test_fraction;
  f.pipeline.split_seed = g.seed;
  f.pipeline.validate();
  return f.pipeline;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("not a number: \"" + item + "\"");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const Globals& g) {
  SynthConfig config = config_path.empty() ? SynthConfig::reference() : SynthConfig::from_json(read_json(config_path));
  if (config_path.empty()) config.seed = g.seed;
  const auto records = generate(config);
  fs::create_directories(g.out_dir);
  std::vector<fs::path> names;
  for (std::size_t i = 0; i < records.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "rec_%05zu.srec", i);
    names.emplace_back(buf);
    write_record(records[i], g.out_dir / names.back());
  }
  save_manifest(synth_manifest(config, names), g.out_dir / "manifest.json");
  write_file_atomic(g.out_dir / "synth_config.json", config.to_json().dump(2) + "\n");
  std::cout << records.size() << " records, manifest " << (g.out_dir / "manifest.json").string() << "\n";
  return 0;
}

int cmd_ingest(const std::string& config_path, const std::vector<std::string>& csvs, const Globals& g) {
  const auto config = IngestConfig::from_json(read_json(config_path));
  std::vector<fs::path> paths(csvs.begin(), csvs.end());
  const auto records = ingest_csv(config, paths);
  fs::create_directories(g.out_dir);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto out = g.out_dir / paths[i].filename().replace_extension(".srec");
    write_record(records[i], out);
    std::cout << out.string() << "\n";
  }
  return 0;
}

int cmd_window(const PipelineFlags& f, double ratio, const Globals& g) {
  const auto source = make_source(f, g);
  const auto pipeline = resolved_pipeline(f, g);
  const auto data = prepare_data(source, pipeline);
  const auto train = ratio < 1.0 ? subset(data.train, ratio, g.seed) : data.train;
  fs::create_directories(g.out_dir);
  write_dataset(train, g.out_dir / "train.wnds");
  write_dataset(data.test, g.out_dir / "test.wnds");
  write_file_atomic(g.out_dir / "train_members.csv", membership_csv(train));
  write_file_atomic(g.out_dir / "test_members.csv", membership_csv(data.test));
  std::cout << "windows: " << data.all.size() << " total, " << train.size() << " train, "
            << data.test.size() << " test\n";
  return 0;
}

int cmd_extract(const std::string& dataset, const std::string& extractor, const std::string& out) {
  const auto ds = read_dataset(dataset);
  const auto ex = make_extractor(extractor);
  const auto bundle = extract_all(*ex, ds);
  write_bundle(bundle, out);
  std::cout << out << ": n=" << bundle.size() << " D=" << bundle.dim() << " K=" << bundle.num_classes
            << " id=" << bundle.extractor_id << "\n";
  return 0;
}

int cmd_assess(const std::vector<std::string>& bundle_paths, const PipelineFlags& f,
               const std::vector<std::string>& extractors, const std::string& ratios,
               const EvidenceOptions& options, bool standardize, const std::string& report,
               const Globals& g) {
  Table table;
  if (!bundle_paths.empty()) {
    std::vector<FeatureBundle> bundles;
    for (const auto& p : bundle_paths) {
      bundles.push_back(read_bundle(p));
      if (standardize) bundles.back().features = standardize_columns(bundles.back().features);
    }
    AssessReport r;
    for (const auto& b : bundles) r.extractors.push_back(b.extractor_id);
    r.columns.push_back(assess_bundles(bundles, options));
    r.config = {{"bundles", bundle_paths}, {"tol", options.tol}, {"max_iter", options.max_iter},
                {"standardize", standardize}};
    table = assess_table(r);
  } else {
    const auto source = make_source(f, g);
    const auto pipeline = resolved_pipeline(f, g);
    const auto data = prepare_data(source, pipeline);
    const auto ratio_list = parse_list(ratios);
    auto r = run_assess(data, extractors, ratio_list, g.seed, options, standardize);
    r.config["source"] = source.to_json();
    r.config["pipeline"] = pipeline.to_json();
    table = assess_table(r);
  }
  std::cout << render_csv(table);
  print_paths(render_to(table, report, g, "assess"));
  return 0;
}

int cmd_probe(const std::string& train_path, const std::string& test_path,
              const std::vector<std::string>& kinds, const std::string& grid,
              const std::string& report, const Globals& g) {
  const auto train = read_bundle(train_path);
  const auto test = read_bundle(test_path);
  if (train.dim() != test.dim()) throw ConfigError("train and test bundles have different dimensions");
  if (grid != "default" && grid != "none") throw ConfigError("--grid must be default or none");
  const auto k = static_cast<std::size_t>(std::max(train.num_classes, test.num_classes));
  Table t;
  t.columns = {"kind", "hyperparams", "accuracy", "macro_f1"};
  t.config = {{"train", train_path}, {"test", test_path}, {"grid", grid}, {"kinds", kinds}};
  for (const auto& name : kinds) {
    const auto kind = parse_probe_kind(name);
    if (grid == "none") {
      const auto params = default_params(kind, train.dim());
      const auto m = evaluate(fit_predict(kind, params, train, test.features), test.labels, k);
      t.rows.push_back({std::string(to_string(kind)), describe(params), m.accuracy, m.macro_f1});
      continue;
    }
    for (const auto& params : expand_grid(default_grid(kind, train.dim()))) {
      try {
        const auto m = evaluate(fit_predict(kind, params, train, test.features), test.labels, k);
        t.rows.push_back({std::string(to_string(kind)), describe(params), m.accuracy, m.macro_f1});
      } catch (const DomainError&) {
        t.rows.push_back({std::string(to_string(kind)), describe(params), FailedCell{"probe"}, FailedCell{"probe"}});
      }
    }
  }
  std::cout << render_csv(t);
  print_paths(render_to(t, report, g, "probe"));
  return t.has_failures() ? 1 : 0;
}

int cmd_finetune(const std::string& features, const std::string& test_path, TrainConfig config,
                 const std::string& mode, const std::string& report, const Globals& g) {
  config.mode = TuneMode::parse(mode);
  config.seed = g.seed;
  const auto train = read_bundle(features);
  const auto result = train_classifier(train, config);
  const auto counts = param_counts(config.hidden, train.dim(), config.mode.rank);

  Table t;
  t.columns = {"mode", "adapter_params", "lora_params", "full_params", "head_params", "final_loss",
               "test_accuracy", "test_macro_f1"};
  std::vector<Cell> row{config.mode.str(), static_cast<std::int64_t>(result.model.adapter_trainable()),
                        static_cast<std::int64_t>(counts.lora), static_cast<std::int64_t>(counts.full),
                        static_cast<std::int64_t>(result.model.head_trainable()),
                        result.loss_history.empty() ? result.initial_loss : result.loss_history.back()};
  if (!test_path.empty()) {
    const auto test = read_bundle(test_path);
    const auto m = evaluate(result.model.predict(test.features), test.labels,
                            result.model.num_classes());
    row.emplace_back(m.accuracy);
    row.emplace_back(m.macro_f1);
  } else {
    row.emplace_back(std::monostate{});
    row.emplace_back(std::monostate{});
  }
  t.rows.push_back(std::move(row));
  t.config = {{"features", features}, {"test", test_path}, {"mode", config.mode.str()},
              {"epochs", config.epochs}, {"lr", config.learning_rate}, {"batch", config.batch_size},
              {"hidden", config.hidden}, {"seed", config.seed}, {"standardize", config.standardize}};
  t.details = {{"initial_loss", result.initial_loss}, {"loss_history", result.loss_history}};
  std::cout << render_csv(t);
  print_paths(render_to(t, report, g, "finetune"));
  return 0;
}

int cmd_sweep(const PipelineFlags& f, const std::string& spec_path, const std::string& ratios,
              const std::string& seeds, const std::vector<std::string>& extractors,
              const std::vector<std::string>& probes, const std::vector<std::string>& modes,
              bool grid, bool no_timing, const Globals& g) {
  SweepSpec spec = spec_path.empty() ? SweepSpec{} : SweepSpec::from_json(read_json(spec_path));
  if (!ratios.empty()) spec.ratios = parse_list(ratios);
  if (!seeds.empty()) {
    spec.seeds.clear();
    for (double s : parse_list(seeds)) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (!extractors.empty()) spec.extractors = extractors;
  if (!probes.empty()) {
    spec.probes.clear();
    for (const auto& p : probes) spec.probes.push_back(parse_probe_kind(p));
  }
  if (!modes.empty()) {
    spec.finetune.clear();
    for (const auto& m : modes) spec.finetune.push_back(TuneMode::parse(m));
  }
  if (grid) spec.grid = true;
  if (no_timing) spec.timing = false;
  spec.jobs = g.jobs;
  spec.validate();

  const auto source = make_source(f, g);
  const auto pipeline = resolved_pipeline(f, g);
  const auto data = prepare_data(source, pipeline);
  auto result = run_sweep(data, spec);
  result.config["source"] = source.to_json();
  result.config["pipeline"] = pipeline.to_json();

  const auto table = sweep_table(result);
  print_paths(report_render(table, g.out_dir, "sweep"));
  write_file_atomic(g.out_dir / "test_members.csv", membership_csv(data.test));
  for (const auto& row : result.rows) {
    if (!row.metrics) std::cerr << "FAIL:" << row.failed_stage << " " << row.method << " ratio=" << row.ratio
                                << " seed=" << row.seed << ": " << row.error << "\n";
  }
  return result.any_failed() ? 1 : 0;
}

int cmd_scaling_fit(const std::string& points_path, const std::string& report, const Globals& g) {
  const auto points = read_scaling_points(points_path);
  const auto fit = fit_scaling_law(points);
  Table t;
  t.columns = {"l_inf", "x0", "alpha", "rss"};
  t.rows.push_back({fit.l_inf, fit.x0, fit.alpha, fit.rss});
  t.config = {{"points", points_path}};
  json pts = json::array();
  for (const auto& p : fit.points) pts.push_back({{"x", p.x}, {"loss", p.loss}, {"predicted", predict_loss(fit, p.x)}});
  t.details = {{"l_inf", fit.l_inf}, {"x0", fit.x0}, {"alpha", fit.alpha}, {"rss", fit.rss}, {"points", pts}};
  std::cout << render_csv(t);
  print_paths(render_to(t, report, g, "scaling_fit"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motorfm: evidence-based extractor selection and low-rank adaptation for motor diagnosis"};
  app.require_subcommand(1);
  Globals g;
  std::string out_dir = ".";
  app.add_option("--seed", g.seed, "seed for synthesis, splits, subsets and training")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "directory for outputs")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and manifest");
  std::string synth_config;
  synth->add_option("--config", synth_config, "synthetic config JSON (default: reference classes)");
  synth->add_option("--out", out_dir, "output directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "convert CSV recordings to SREC records");
  std::string ingest_config;
  std::vector<std::string> csvs;
  ingest->add_option("--config", ingest_config, "ingest config JSON")->required();
  ingest->add_option("csv", csvs, "CSV files")->required();

  // window
  auto* window_cmd = app.add_subcommand("window", "resample, window and split into train/test WNDS files");
  PipelineFlags window_flags;
  double window_ratio = 1.0;
  add_pipeline_flags(window_cmd, window_flags);
  window_cmd->add_option("--ratio", window_ratio, "fraction of the training split to keep")
      ->check(CLI::Range(0.0, 1.0));

  // extract
  auto* extract = app.add_subcommand("extract", "apply a feature extractor to a WNDS dataset");
  std::string ext_dataset, ext_name = "stat", ext_out;
  extract->add_option("--dataset", ext_dataset, "WNDS dataset")->required();
  extract->add_option("--extractor", ext_name, "raw | stat | randproj:<D>:<seed>")->capture_default_str();
  extract->add_option("--out", ext_out, "FBND output")->required();

  // assess
  auto* assess = app.add_subcommand("assess", "rank extractors by LogME");
  std::vector<std::string> assess_bundles_arg, assess_extractors{"raw", "stat", "randproj:64:0"};
  std::string assess_ratios = "0.05,0.1", assess_report;
  EvidenceOptions evidence;
  bool assess_standardize = false;
  PipelineFlags assess_flags;
  assess->add_option("--bundles", assess_bundles_arg, "FBND bundles to score");
  add_pipeline_flags(assess, assess_flags);
  assess->add_option("--extractor", assess_extractors, "extractors (with a data source)")->capture_default_str();
  assess->add_option("--ratios", assess_ratios, "comma-separated training ratios")->capture_default_str();
  assess->add_option("--tol", evidence.tol, "convergence tolerance on L/n")->capture_default_str();
  assess->add_option("--max-iter", evidence.max_iter, "fixed-point iteration cap")->capture_default_str();
  assess->add_flag("--standardize", assess_standardize, "z-score feature columns before scoring");
  assess->add_option("--report", assess_report, "report path (.json; a .csv is written beside it)");

  // probe
  auto* probe = app.add_subcommand("probe", "evaluate probe classifiers on train/test bundles");
  std::string probe_train, probe_test, probe_grid = "default", probe_report;
  std::vector<std::string> probe_kinds{"linear"};
  probe->add_option("--train", probe_train, "training FBND")->required();
  probe->add_option("--test", probe_test, "test FBND")->required();
  probe->add_option("--kind", probe_kinds, "linear | knn | tree | forest")->capture_default_str();
  probe->add_option("--grid", probe_grid, "default | none")->capture_default_str();
  probe->add_option("--report", probe_report, "report path");

  // finetune
  auto* finetune = app.add_subcommand("finetune", "train a classifier with frozen, LoRA or full feature map");
  std::string ft_features, ft_test, ft_mode = "lora:4", ft_report;
  TrainConfig train_config;
  finetune->add_option("--features", ft_features, "training FBND")->required();
  finetune->add_option("--test", ft_test, "test FBND");
  finetune->add_option("--mode", ft_mode, "lora:<r> | full | frozen")->capture_default_str();
  finetune->add_option("--epochs", train_config.epochs)->capture_default_str();
  finetune->add_option("--lr", train_config.learning_rate)->capture_default_str();
  finetune->add_option("--batch", train_config.batch_size)->capture_default_str();
  finetune->add_option("--hidden", train_config.hidden, "width of the feature map")->capture_default_str();
  finetune->add_option("--report", ft_report, "report path");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "data-efficiency sweep over ratios, seeds and methods");
  PipelineFlags sweep_flags;
  std::string sweep_spec, sweep_ratios, sweep_seeds;
  std::vector<std::string> sweep_extractors, sweep_probes, sweep_modes;
  bool sweep_grid = false, sweep_no_timing = false;
  add_pipeline_flags(sweep, sweep_flags);
  sweep->add_option("--spec", sweep_spec, "sweep spec JSON");
  sweep->add_option("--ratios", sweep_ratios, "comma-separated ratios");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds");
  sweep->add_option("--extractor", sweep_extractors, "extractors");
  sweep->add_option("--probe", sweep_probes, "probe kinds");
  sweep->add_option("--finetune", sweep_modes, "fine-tuning modes");
  sweep->add_flag("--grid", sweep_grid, "grid-search probe hyperparameters");
  sweep->add_flag("--no-timing", sweep_no_timing, "write 0 for train_seconds (byte-reproducible output)");

  // scaling
  auto* scaling = app.add_subcommand("scaling", "compute cost and fit scaling laws");
  scaling->require_subcommand(1);
  auto* scaling_fit = scaling->add_subcommand("fit", "fit L(x) = L_inf + (x0/x)^alpha");
  std::string points_path, scaling_report;
  scaling_fit->add_option("--points", points_path, "CSV with header x,loss")->required();
  scaling_fit->add_option("--report", scaling_report, "report path");
  auto* scaling_cost = scaling->add_subcommand("cost", "C = 6 N D");
  double cost_n = 0.0, cost_batch = 0.0, cost_steps = 0.0, cost_tokens = 0.0;
  scaling_cost->add_option("--n", cost_n, "parameter count")->required();
  auto* batch_opt = scaling_cost->add_option("--batch", cost_batch, "batch size B");
  auto* steps_opt = scaling_cost->add_option("--steps", cost_steps, "gradient steps S");
  auto* tokens_opt = scaling_cost->add_option("--tokens", cost_tokens, "processed data volume D");
  batch_opt->needs(steps_opt);
  steps_opt->needs(batch_opt);
  tokens_opt->excludes(batch_opt)->excludes(steps_opt);

  CLI11_PARSE(app, argc, argv);
  g.out_dir = out_dir;

  try {
    if (*synth) return cmd_synth(synth_config, g);
    if (*ingest) return cmd_ingest(ingest_config, csvs, g);
    if (*window_cmd) return cmd_window(window_flags, window_ratio, g);
    if (*extract) return cmd_extract(ext_dataset, ext_name, ext_out);
    if (*assess) {
      return cmd_assess(assess_bundles_arg, assess_flags, assess_extractors, assess_ratios, evidence,
                        assess_standardize, assess_report, g);
    }
    if (*probe) return cmd_probe(probe_train, probe_test, probe_kinds, probe_grid, probe_report, g);
    if (*finetune) return cmd_finetune(ft_features, ft_test, train_config, ft_mode, ft_report, g);
    if (*sweep) {
      return cmd_sweep(sweep_flags, sweep_spec, sweep_ratios, sweep_seeds, sweep_extractors, sweep_probes,
                       sweep_modes, sweep_grid, sweep_no_timing, g);
    }
    if (*scaling_fit) return cmd_scaling_fit(points_path, scaling_report, g);
    if (*scaling_cost) {
      const double c = *tokens_opt ? compute_cost(cost_n, cost_tokens)
                       : *batch_opt ? compute_cost(cost_n, cost_batch, cost_steps)
                                    : throw ConfigError("give --tokens or --batch and --steps");
      std::printf("%.6g\n", c);
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
