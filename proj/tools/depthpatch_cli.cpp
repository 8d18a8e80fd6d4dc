// depthpatch command line: scene generation, victim training, patch training,
// evaluation, experiments and reports.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 training failure.

#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "depthpatch/attack.hpp"
#include "depthpatch/experiments.hpp"
#include "depthpatch/image_io.hpp"
#include "depthpatch/patch_io.hpp"
#include "depthpatch/plot.hpp"
#include "depthpatch/toy_training.hpp"
#include "depthpatch/util.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace depthpatch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

// Flags shared by several subcommands. Each may also come from a
// DEPTHPATCH_<NAME> environment variable.
struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string model;
  std::string dataset;
  std::string split = "train";
  std::string detector;
  std::string annotations;
};

void add_seed(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->envname("DEPTHPATCH_SEED");
}
void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Attack config (.yaml/.yml/.json)")->envname("DEPTHPATCH_CONFIG");
}
void add_out(CLI::App* app, Common& c, bool required) {
  auto* o = app->add_option("--out", c.out, "Output directory")->envname("DEPTHPATCH_OUT");
  if (required) o->required();
}
void add_model(CLI::App* app, Common& c) {
  app->add_option("--model", c.model, "Toy model directory or registered adapter name")
      ->envname("DEPTHPATCH_MODEL")
      ->required();
}
void add_dataset(CLI::App* app, Common& c) {
  app->add_option("--dataset", c.dataset, "Dataset root")->envname("DEPTHPATCH_DATASET")->required();
  app->add_option("--split", c.split, "Split to train or evaluate on");
  app->add_option("--detector", c.detector, "Registered detector adapter");
  app->add_option("--annotations", c.annotations, "Oracle annotations file");
}

AttackConfig attack_config(const Common& c) {
  AttackConfig cfg = c.config.empty() ? AttackConfig{} : load_attack_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

Dataset dataset(const Common& c, const std::string& split, const DetectorConfig& det) {
  LoadOptions lo;
  lo.detector = det;
  lo.detector_name = c.detector;
  if (!c.annotations.empty()) lo.annotations = c.annotations;
  Dataset ds = load_dataset(c.dataset, split, lo);
  spdlog::info("dataset {}/{}: {} images, hash {}", c.dataset, split, ds.samples.size(),
               ds.manifest.content_hash);
  return ds;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad scale '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--scales needs at least one value");
  return out;
}

// ---- gen-scenes -----------------------------------------------------------

int gen_scenes(const Common& c, std::size_t count, std::size_t val_count, const SceneSpec& spec) {
  spec.validate();
  const std::uint64_t seed = c.seed.value_or(1);
  const auto scenes = generate_corpus(count + val_count, seed, spec);
  const std::span<const SyntheticScene> all(scenes);
  write_scene_dataset(c.out, "train", all.subspan(0, count), "s");
  if (val_count > 0) write_scene_dataset(c.out, "val", all.subspan(count), "v");
  print_json({{"out", c.out}, {"train", count}, {"val", val_count}, {"seed", seed}});
  return 0;
}

// ---- train-model ----------------------------------------------------------

int train_model(const Common& c, ToyTrainConfig cfg, std::size_t count, std::size_t heldout,
                std::uint64_t scene_seed) {
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  SceneSpec spec;
  spec.shape = cfg.input;
  const auto corpus = generate_corpus(count, scene_seed, spec);
  const auto result = train_toy_model(corpus, cfg, [](int epoch, double loss) {
    spdlog::info("toy model epoch {} loss {:.5f}", epoch, loss);
  });
  save_toy_model(c.out, *result.model);
  json summary = {{"out", c.out},
                  {"epochs", cfg.epochs},
                  {"final_loss", result.curve.empty() ? json(nullptr) : json(result.curve.back())},
                  {"parameter_checksum", result.model->parameter_checksum()}};
  if (heldout > 0) {
    const auto held = generate_corpus(heldout, scene_seed + 1, spec);
    summary["heldout_mean_abs_error"] = heldout_mean_abs_error(result.handle, held);
  }
  atomic_write(fs::path(c.out) / "training_curve.json", json(result.curve).dump() + "\n");
  print_json(summary);
  return 0;
}

// ---- convert-annotations --------------------------------------------------

int convert_annotations(const std::string& labels, const std::string& out,
                        const std::vector<std::string>& classes) {
  std::map<std::string, int> class_map;
  for (const auto& entry : classes) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ConfigError("class mapping must be NAME=ID, got '" + entry + "'");
    try {
      class_map[entry.substr(0, eq)] = std::stoi(entry.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad class id in '" + entry + "'");
    }
  }
  if (class_map.empty()) class_map = {{"Car", kCar}, {"Pedestrian", kPedestrian}};
  const auto rows = convert_kitti_labels(labels, class_map);
  atomic_write(out, format_annotations(rows));
  print_json({{"out", out}, {"rows", rows.size()}});
  return 0;
}

// ---- train-patch ----------------------------------------------------------

int train_patch(const Common& c, bool resume, bool freeze, std::optional<int> epochs,
                const std::string& val_split) {
  AttackConfig cfg = attack_config(c);
  if (epochs) cfg.epochs = *epochs;
  if (freeze) cfg.transforms = TransformRanges::frozen();
  cfg.validate();
  const DepthModelHandle model = load_model(c.model);
  const Dataset train = dataset(c, c.split, cfg.detector_config());
  std::optional<Dataset> val;
  if (!val_split.empty()) val = dataset(c, val_split, cfg.detector_config());

  RunOptions ro;
  ro.out_dir = c.out;
  if (resume) {
    ro.resume_from = latest_checkpoint(c.out);
    if (!ro.resume_from) throw DataError("--resume: no checkpoint under " + c.out);
    spdlog::info("resuming from {}", ro.resume_from->string());
  }
  if (val) ro.validation = val->samples;
  const AttackResult result = run_attack(train.samples, model, cfg, ro);
  json summary = result.report;
  summary["dataset_hash"] = train.manifest.content_hash;
  summary["out"] = c.out;
  print_json(summary);
  return 0;
}

// ---- evaluate -------------------------------------------------------------

int evaluate(const Common& c, const std::string& patch_path, const std::string& report_path,
             const std::string& csv_path, std::optional<double> scale, bool sampled) {
  const AttackConfig cfg = attack_config(c);
  const LoadedPatch patch = load_patch(patch_path);
  const DepthModelHandle model = load_model(c.model);
  const Dataset ds = dataset(c, c.split, cfg.detector_config());
  EvalConfig ec;
  ec.patch_scale_factor = scale.value_or(cfg.patch_scale_factor);
  if (sampled) ec.sampled_transforms = cfg.transforms;
  ec.seed = cfg.seed;
  const EvalResult result = evaluate_run(patch.patch, ds.samples, model, ec);
  json report = to_json(result);
  report["patch"] = patch_path;
  report["patch_sha256"] = patch.manifest.png_sha256;
  report["model"] = model.name;
  report["model_checksum"] = model.parameter_checksum();
  report["dataset_hash"] = ds.manifest.content_hash;
  report["patch_scale_factor"] = ec.patch_scale_factor;
  if (!report_path.empty()) atomic_write(report_path, report.dump(2) + "\n");
  if (!csv_path.empty()) {
    std::string csv = "image_id,e_d,r_a,mse,mask_area\n";
    char line[256];
    for (const auto& r : result.records) {
      std::snprintf(line, sizeof line, ",%.17g,%.17g,%.17g,%zu\n", r.e_d, r.r_a, r.mse, r.mask_area);
      csv += r.image_id + line;
    }
    atomic_write(csv_path, csv);
  }
  print_json(report["aggregate"]);
  return 0;
}

// ---- ablate / sweep -------------------------------------------------------

struct ExperimentArgs {
  std::string spec;
  std::string eval_split = "val";
  int parallel = 1;
  std::optional<int> epochs;
};

ExperimentSpec load_spec_or(const ExperimentArgs& a, const Common& c, ExperimentSpec fallback) {
  if (a.spec.empty()) return fallback;
  ExperimentSpec spec = experiment_spec_from_json(read_config_document(a.spec));
  if (c.seed) spec.base.seed = *c.seed;
  if (a.epochs) spec.base.epochs = *a.epochs;
  return spec;
}

int run_experiment_command(const Common& c, const ExperimentArgs& a, bool sweep,
                           const std::vector<double>& scales) {
  AttackConfig base = attack_config(c);
  if (a.epochs) base.epochs = *a.epochs;
  const ExperimentSpec spec =
      load_spec_or(a, c, sweep ? scale_sweep_spec(base, scales) : ablation_spec(base));
  spec.validate();
  const DepthModelHandle model = load_model(c.model);
  const Dataset train = dataset(c, c.split, spec.base.detector_config());
  const Dataset eval = dataset(c, a.eval_split, spec.base.detector_config());
  ExperimentInputs inputs{model, train.samples, eval.samples, train.manifest.content_hash};
  ExperimentOptions options;
  options.out_dir = c.out;
  options.parallel = a.parallel;
  const ExperimentTable table = sweep ? sweep_scale(spec, inputs, options) : ablate(spec, inputs, options);
  std::cout << to_markdown(table);
  return 0;
}

// ---- report ---------------------------------------------------------------

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> rows;
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Per-epoch means of l_total, l_depth and l_tv.
std::vector<std::vector<double>> epoch_curves(const std::vector<json>& log) {
  std::map<int, std::array<double, 4>> sums;
  try {
    for (const auto& r : log) {
      auto& s = sums[r.at("epoch").get<int>()];
      s[0] += r.at("l_total").get<double>();
      s[1] += r.at("l_depth").get<double>();
      s[2] += r.at("l_tv").get<double>();
      s[3] += 1.0;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed training log: ") + e.what());
  }
  std::vector<std::vector<double>> curves(3);
  for (const auto& [epoch, s] : sums) {
    for (int k = 0; k < 3; ++k) curves[k].push_back(s[k] / s[3]);
  }
  return curves;
}

std::vector<double> histogram(const std::vector<double>& values, int bins) {
  std::vector<double> counts(bins, 0.0);
  for (const double v : values) {
    const int b = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
    counts[b] += 1.0;
  }
  return counts;
}

void write_plot(const fs::path& path, const ImageTensor& image, json& written) {
  write_png(path, image, BitDepth::k8);
  written.push_back(path.string());
}

int report(const Common& c, const std::string& run, const std::string& experiment, bool plot,
           bool grid, const std::string& patch_path, int grid_scenes) {
  const fs::path out = c.out.empty() ? fs::path(run.empty() ? experiment : run) : fs::path(c.out);
  if (out.empty()) throw ConfigError("report needs --run, --experiment or --out");
  fs::create_directories(out);
  json written = json::array();
  json summary;

  if (!run.empty()) {
    const fs::path dir(run);
    const fs::path log_path = dir / "train_log.jsonl";
    if (fs::exists(log_path)) {
      const auto curves = epoch_curves(read_jsonl(log_path));
      summary["epochs"] = curves[0].size();
      if (!curves[0].empty()) summary["final_l_total"] = curves[0].back();
      if (plot && !curves[0].empty()) {
        ChartOptions o;
        o.log_y = true;
        write_plot(out / "loss_curves.png", line_chart(curves, o), written);
      }
    }
    const fs::path eval_path = dir / "eval_report.json";
    if (fs::exists(eval_path)) {
      json j = read_json(eval_path);
      if (j.contains("validation")) j = j.at("validation");
      if (j.contains("records")) {
        std::vector<double> e_d, r_a;
        for (const auto& r : j.at("records")) {
          e_d.push_back(r.at("e_d").get<double>());
          r_a.push_back(r.at("r_a").get<double>());
        }
        summary["aggregate"] = j.at("aggregate");
        if (plot && !e_d.empty()) {
          write_plot(out / "e_d_hist.png", bar_chart(histogram(e_d, 10)), written);
          write_plot(out / "r_a_hist.png", bar_chart(histogram(r_a, 10)), written);
        }
      }
    }
  }

  if (!experiment.empty()) {
    const ExperimentTable table = experiment_table_from_json(read_json(fs::path(experiment) / "table.json"));
    std::vector<double> e_d, r_a;
    json legend = json::array();
    for (const auto& r : table.rows) {
      e_d.push_back(r.metrics.e_d);
      r_a.push_back(r.metrics.r_a);
      legend.push_back(r.name);
    }
    summary["variants"] = legend;
    if (plot && !e_d.empty()) {
      write_plot(out / "e_d_bars.png", bar_chart(e_d), written);
      write_plot(out / "r_a_bars.png", bar_chart(r_a), written);
    }
    std::cout << to_markdown(table);
  }

  if (grid) {
    if (c.model.empty() || c.dataset.empty()) throw ConfigError("--grid needs --model and --dataset");
    const fs::path p = patch_path.empty() ? fs::path(run) / "patch.png" : fs::path(patch_path);
    const AttackConfig cfg = attack_config(c);
    const LoadedPatch patch = load_patch(p);
    const DepthModelHandle model = load_model(c.model);
    const Dataset ds = dataset(c, c.split, cfg.detector_config());
    std::vector<ImageTensor> tiles;
    int shown = 0;
    for (const auto& s : ds.samples) {
      if (shown >= grid_scenes) break;
      std::vector<TransformSample> ts(s.detections.boxes.size(), identity_transform());
      const PatchApplication app(patch.patch, s.image, s.detections.boxes, ts, cfg.patch_scale_factor);
      if (!app.any_placed()) continue;
      tiles.push_back(s.image);
      tiles.push_back(app.example().image);
      tiles.push_back(colorize(forward(model, s.image)));
      tiles.push_back(colorize(forward(model, app.example().image)));
      ++shown;
    }
    if (tiles.empty()) throw DataError("--grid: no scene with a placeable detection");
    write_plot(out / "results_grid.png", image_grid(tiles, 4), written);
    summary["grid_columns"] = {"clean image", "adversarial image", "clean disparity", "adversarial disparity"};
  }

  summary["written"] = written;
  atomic_write(out / "report.json", summary.dump(2) + "\n");
  print_json(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial patches against monocular depth estimation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  Common c;

  std::size_t scene_count = 200, val_count = 50;
  SceneSpec scene_spec;
  auto* gen = app.add_subcommand("gen-scenes", "Write a synthetic scene dataset (train/ and val/)");
  add_seed(gen, c);
  add_out(gen, c, true);
  gen->add_option("--count", scene_count, "Training scenes");
  gen->add_option("--val-count", val_count, "Validation scenes");
  gen->add_option("--min-objects", scene_spec.min_objects, "");
  gen->add_option("--max-objects", scene_spec.max_objects, "");
  gen->add_option("--pedestrian-fraction", scene_spec.pedestrian_fraction, "");

  ToyTrainConfig toy_cfg;
  std::size_t model_scenes = 200, heldout = 50;
  std::uint64_t model_scene_seed = 1;
  auto* tm = app.add_subcommand("train-model", "Train the built-in toy depth network");
  add_seed(tm, c);
  add_out(tm, c, true);
  tm->add_option("--epochs", toy_cfg.epochs, "");
  tm->add_option("--lr", toy_cfg.learning_rate, "");
  tm->add_option("--batch-size", toy_cfg.batch_size, "");
  tm->add_option("--scenes", model_scenes, "Synthetic training scenes");
  tm->add_option("--scene-seed", model_scene_seed, "");
  tm->add_option("--heldout", heldout, "Held-out scenes for the error report");

  std::string labels, annotations_out;
  std::vector<std::string> classes;
  auto* conv = app.add_subcommand("convert-annotations", "KITTI label_2 files to an annotations file");
  conv->add_option("--labels", labels, "label_2 directory")->required();
  conv->add_option("--out", annotations_out, "annotations.json to write")->required();
  conv->add_option("--class", classes, "NAME=ID mapping (default Car=0 Pedestrian=1)");

  bool resume = false, freeze = false;
  std::optional<int> epochs;
  std::string val_split;
  auto* tp = app.add_subcommand("train-patch", "Optimize a patch against a frozen victim");
  add_seed(tp, c);
  add_config(tp, c);
  add_out(tp, c, true);
  add_model(tp, c);
  add_dataset(tp, c);
  tp->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  tp->add_flag("--freeze-transforms", freeze, "Collapse transform ranges to identity");
  tp->add_option("--epochs", epochs, "Override the configured epoch count");
  tp->add_option("--val-split", val_split, "Split evaluated after training");

  std::string patch_path, report_path, csv_path;
  std::optional<double> scale;
  bool sampled = false;
  auto* ev = app.add_subcommand("evaluate", "Measure E_d, R_a and MSE of a patch");
  add_seed(ev, c);
  add_config(ev, c);
  add_model(ev, c);
  add_dataset(ev, c);
  ev->add_option("--patch", patch_path, "Patch PNG with its .json manifest")->required();
  ev->add_option("--report", report_path, "Report JSON to write");
  ev->add_option("--csv", csv_path, "Per-scene CSV to write");
  ev->add_option("--scale", scale, "Patch scale factor (default from config)");
  ev->add_flag("--sampled-transforms", sampled, "Sample transforms instead of identity placement");

  ExperimentArgs exp_args;
  std::string scales_text = "0.1,0.2,0.3";
  auto add_experiment = [&](CLI::App* sub) {
    add_seed(sub, c);
    add_config(sub, c);
    add_out(sub, c, true);
    add_model(sub, c);
    add_dataset(sub, c);
    sub->add_option("--spec", exp_args.spec, "Experiment spec {base, variants}");
    sub->add_option("--eval-split", exp_args.eval_split, "Split used for the table");
    sub->add_option("--parallel", exp_args.parallel, "Concurrent variants");
    sub->add_option("--epochs", exp_args.epochs, "Override the configured epoch count");
  };
  auto* ab = app.add_subcommand("ablate", "Loss-term ablation table");
  add_experiment(ab);
  auto* sw = app.add_subcommand("sweep", "Patch-scale sweep table");
  add_experiment(sw);
  sw->add_option("--scales", scales_text, "Comma separated ascending scales");

  std::string run_dir, experiment_dir, grid_patch;
  bool plot = false, grid = false;
  int grid_scenes = 4;
  auto* rp = app.add_subcommand("report", "Summaries and plots of runs and experiments");
  add_config(rp, c);
  add_out(rp, c, false);
  rp->add_option("--run", run_dir, "Run directory from train-patch");
  rp->add_option("--experiment", experiment_dir, "Output directory of ablate or sweep");
  rp->add_flag("--plot", plot, "Write loss curves and E_d/R_a charts as PNG");
  rp->add_flag("--grid", grid, "Write a before/after disparity grid (needs --model, --dataset)");
  rp->add_option("--patch", grid_patch, "Patch for --grid (default <run>/patch.png)");
  rp->add_option("--scenes", grid_scenes, "Scenes in the grid");
  rp->add_option("--model", c.model, "Victim for --grid")->envname("DEPTHPATCH_MODEL");
  rp->add_option("--dataset", c.dataset, "Dataset for --grid")->envname("DEPTHPATCH_DATASET");
  rp->add_option("--split", c.split, "Split for --grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_default_logger(spdlog::default_logger()->clone("depthpatch"));

  try {
    if (*gen) return gen_scenes(c, scene_count, val_count, scene_spec);
    if (*tm) return train_model(c, toy_cfg, model_scenes, heldout, model_scene_seed);
    if (*conv) return convert_annotations(labels, annotations_out, classes);
    if (*tp) return train_patch(c, resume, freeze, epochs, val_split);
    if (*ev) return evaluate(c, patch_path, report_path, csv_path, scale, sampled);
    if (*ab) return run_experiment_command(c, exp_args, false, {});
    if (*sw) return run_experiment_command(c, exp_args, true, parse_scales(scales_text));
    if (*rp) return report(c, run_dir, experiment_dir, plot, grid, grid_patch, grid_scenes);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const ShapeError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const TrainingError& e) {
    spdlog::error("training failure: {}", e.what());
    return kExitTraining;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
