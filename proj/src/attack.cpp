#include "depthpatch/attack.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "depthpatch/patch_io.hpp"
#include "depthpatch/util.hpp"

namespace depthpatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 rng;
  in >> rng;
  if (!in) throw DataError("checkpoint holds a malformed RNG state");
  return rng;
}

json losses_json(const LossReport& r) {
  return {{"l_d1", r.l_d1},     {"l_d2", r.l_d2},       {"l_depth", r.l_depth},
          {"l_tv", r.l_tv},     {"l_total", r.l_total}};
}

LossReport losses_from_json(const json& j) {
  return {j.at("l_d1").get<double>(), j.at("l_d2").get<double>(), j.at("l_depth").get<double>(),
          j.at("l_tv").get<double>(), j.at("l_total").get<double>()};
}

StepRecord step_from_json(const json& j) {
  StepRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.step = j.at("step").get<std::int64_t>();
  r.images = j.at("images").get<int>();
  r.losses = losses_from_json(j);
  r.ts = j.value("ts", "");
  return r;
}

std::string diverged_message(const AttackConfig& cfg, const std::string& what) {
  return what + " (seed " + std::to_string(cfg.seed) + ", config " + to_json(cfg).dump() + ")";
}

void append_log(const fs::path& path, const StepRecord& r) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out << to_json(r).dump() << '\n';
}

std::string epoch_dir_name(int epoch) {
  std::ostringstream out;
  out << "epoch-" << std::setw(6) << std::setfill('0') << epoch;
  return out.str();
}

}  // namespace

PatchState init_patch(int side, std::mt19937_64& rng) {
  if (side < 2) throw ConfigError("patch side must be >= 2");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> values(static_cast<std::size_t>(side) * side * 3);
  for (double& v : values) v = unit(rng);
  PatchState s;
  s.patch = Patch(side, std::move(values));
  s.optimizer = Adam(s.patch.data().size());
  return s;
}

RunState init_run_state(const AttackConfig& cfg) {
  RunState s;
  s.rng.seed(cfg.seed);
  s.patch = init_patch(cfg.patch_side, s.rng);
  s.patch.optimizer = Adam(s.patch.patch.data().size(), cfg.adam);
  s.patch.config_hash = cfg.fingerprint();
  s.best_metric = std::numeric_limits<double>::infinity();
  return s;
}

BatchEvaluation evaluate_batch(const Patch& patch, std::span<const BatchItem> items,
                               const DepthModelHandle& model, const AttackConfig& cfg) {
  const LossWeights& w = cfg.loss_weights;
  BatchEvaluation out;
  out.grad.assign(patch.data().size(), 0.0);

  struct Contribution {
    DepthLossEval loss;
    std::vector<double> grad;
  };
  std::vector<Contribution> parts;
  for (const BatchItem& item : items) {
    const PatchApplication app(patch, item.sample->image, item.sample->detections.boxes,
                               item.transforms, cfg.patch_scale_factor);
    if (!app.any_placed()) continue;
    const AdversarialExample& ex = app.example();
    const DisparityMap target = make_target_disparity(*item.clean, ex.focus_union, cfg.target_mode);
    const DisparityForward fwd(model, ex.image);
    DepthLossEval loss =
        depth_loss_with_gradient(target, fwd.disparity(), ex.focus_union, ex.patch_union, w);
    for (double& g : loss.grad) g *= w.alpha;
    std::vector<double> grad = app.backward(fwd.backward(loss.grad));
    parts.push_back({std::move(loss), std::move(grad)});
  }
  out.images = static_cast<int>(parts.size());
  if (parts.empty()) return out;

  const double n = static_cast<double>(parts.size());
  for (const auto& p : parts) {
    out.losses.l_d1 += p.loss.l_d1 / n;
    out.losses.l_d2 += p.loss.l_d2 / n;
    out.losses.l_depth += p.loss.l_depth / n;
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += p.grad[i] / n;
  }
  out.losses.l_tv = tv_loss(patch);
  out.losses.l_total = w.alpha * out.losses.l_depth + w.gamma * out.losses.l_tv;
  if (w.gamma != 0.0) {
    const std::vector<double> tv = tv_loss_gradient(patch);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += w.gamma * tv[i];
  }
  return out;
}

AttackTrainer::AttackTrainer(const DepthModelHandle& model, std::span<const Sample> samples,
                             AttackConfig cfg)
    : model_(model), samples_(samples), cfg_(std::move(cfg)) {
  clean_.reserve(samples_.size());
  for (const Sample& s : samples_) clean_.push_back(forward(model_, s.image));
}

std::optional<StepRecord> AttackTrainer::attack_step(RunState& state,
                                                     std::span<const std::size_t> batch) const {
  std::vector<BatchItem> items;
  for (const std::size_t idx : batch) {
    const Sample& s = samples_[idx];
    BatchItem item{&s, &clean_[idx], {}};
    for (std::size_t k = 0; k < s.detections.boxes.size(); ++k) {
      item.transforms.push_back(sample_transform(state.rng, cfg_.transforms, cfg_.patch_side));
    }
    items.push_back(std::move(item));
  }
  BatchEvaluation eval = evaluate_batch(state.patch.patch, items, model_, cfg_);
  if (eval.images == 0) {
    spdlog::warn("attack step {} skipped: no placeable detection in the batch", state.step);
    return std::nullopt;
  }
  const LossReport& l = eval.losses;
  if (!std::isfinite(l.l_total) || !std::isfinite(l.l_depth) || !std::isfinite(l.l_tv)) {
    throw TrainingError(diverged_message(cfg_, "non-finite loss at step " + std::to_string(state.step)));
  }
  if (std::any_of(eval.grad.begin(), eval.grad.end(), [](double g) { return !std::isfinite(g); })) {
    throw TrainingError(diverged_message(cfg_, "non-finite gradient at step " + std::to_string(state.step)));
  }

  std::vector<double> values = state.patch.patch.pixels().values();
  state.patch.optimizer.step(values, eval.grad, cfg_.learning_rate);
  state.patch.patch = Patch(cfg_.patch_side, std::move(values));  // clamps to [0,1]

  StepRecord record{state.patch.epoch, state.step, eval.images, l, now_iso8601()};
  ++state.step;
  state.history.push_back(record);
  return record;
}

double AttackTrainer::run_epoch(RunState& state) const {
  std::vector<std::size_t> order(samples_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state.rng);
  double sum = 0.0;
  int steps = 0;
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::span<const std::size_t> batch(order.data() + start, std::min(bs, order.size() - start));
    if (const auto r = attack_step(state, batch)) {
      sum += r->losses.l_total;
      ++steps;
    }
  }
  ++state.patch.epoch;
  const double mean = steps > 0 ? sum / steps : std::numeric_limits<double>::quiet_NaN();
  if (steps > 0) state.best_metric = std::min(state.best_metric, mean);
  return mean;
}

json to_json(const StepRecord& r) {
  json j = {{"ts", r.ts}, {"epoch", r.epoch}, {"step", r.step}, {"images", r.images}};
  j.update(losses_json(r.losses));
  return j;
}

json to_json(const EvalResult& r) {
  json records = json::array();
  for (const auto& e : r.records) {
    records.push_back({{"image_id", e.image_id},
                       {"e_d", e.e_d},
                       {"r_a", e.r_a},
                       {"mse", e.mse},
                       {"mask_area", e.mask_area}});
  }
  return {{"aggregate",
           {{"e_d", r.aggregate.e_d},
            {"r_a", r.aggregate.r_a},
            {"mse", r.aggregate.mse},
            {"scenes", r.aggregate.scenes}}},
          {"records", records},
          {"skipped", r.skipped}};
}

void save_checkpoint(const fs::path& dir, const RunState& state, const AttackConfig& cfg) {
  const fs::path tmp = dir.parent_path() / ("." + dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  PatchManifest manifest;
  manifest.seed = cfg.seed;
  manifest.config_hash = state.patch.config_hash;
  manifest.epoch = state.patch.epoch;
  save_patch(tmp / "patch.png", state.patch.patch, manifest);

  json history = json::array();
  for (const auto& r : state.history) history.push_back(to_json(r));
  const Adam& opt = state.patch.optimizer;
  const json j = {
      {"epoch", state.patch.epoch},
      {"step", state.step},
      {"best_metric", std::isfinite(state.best_metric) ? json(state.best_metric) : json(nullptr)},
      {"config_hash", state.patch.config_hash},
      {"rng", rng_to_string(state.rng)},
      {"patch_values", state.patch.patch.pixels().values()},
      {"optimizer",
       {{"beta1", opt.params().beta1},
        {"beta2", opt.params().beta2},
        {"epsilon", opt.params().epsilon},
        {"steps", opt.steps()},
        {"m", opt.first_moment()},
        {"v", opt.second_moment()}}},
      {"history", history},
  };
  atomic_write(tmp / "state.json", j.dump() + "\n");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

RunState load_checkpoint(const fs::path& dir, const AttackConfig& cfg) {
  const LoadedPatch stored = load_patch(dir / "patch.png");
  RunState s;
  try {
    const json j = json::parse(read_file(dir / "state.json"));
    const std::string hash = j.at("config_hash").get<std::string>();
    if (hash != cfg.fingerprint()) {
      throw ConfigError("checkpoint " + dir.string() + " was written under a different config");
    }
    s.patch.config_hash = hash;
    s.patch.epoch = j.at("epoch").get<int>();
    s.step = j.at("step").get<std::int64_t>();
    s.best_metric = j.at("best_metric").is_null() ? std::numeric_limits<double>::infinity()
                                                  : j.at("best_metric").get<double>();
    s.rng = rng_from_string(j.at("rng").get<std::string>());
    s.patch.patch = Patch(cfg.patch_side, j.at("patch_values").get<std::vector<double>>());
    const json& o = j.at("optimizer");
    s.patch.optimizer = Adam(AdamParams{o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                                        o.at("epsilon").get<double>()},
                             o.at("m").get<std::vector<double>>(), o.at("v").get<std::vector<double>>(),
                             o.at("steps").get<std::int64_t>());
    for (const auto& r : j.at("history")) s.history.push_back(step_from_json(r));
  } catch (const json::exception& e) {
    throw DataError("damaged checkpoint " + dir.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw DataError("damaged checkpoint " + dir.string() + ": " + e.what());
  }
  if (stored.manifest.epoch != s.patch.epoch) {
    throw DataError("checkpoint " + dir.string() + ": patch manifest epoch does not match state");
  }
  const auto exact = s.patch.patch.data();
  const auto png = stored.patch.data();
  for (std::size_t i = 0; i < exact.size(); ++i) {
    if (std::abs(exact[i] - png[i]) > 1.0 / 65535.0) {
      throw DataError("checkpoint " + dir.string() + ": patch.png does not match state.json");
    }
  }
  return s;
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const fs::path root = run_dir / "checkpoints";
  if (!fs::is_directory(root)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("epoch-", 0) != 0) continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

AttackResult run_attack(std::span<const Sample> samples, const DepthModelHandle& model,
                        const AttackConfig& cfg, const RunOptions& options) {
  cfg.validate();
  if (!model.frozen) throw ConfigError("run_attack: the victim model must be frozen");
  if (!model.model) throw ConfigError("run_attack: no victim model");
  const int target = cfg.detector_config().target_class;
  const auto other_class = [target](const BBox& b) { return target >= 0 && b.class_id != target; };
  std::vector<Sample> filtered;
  if (std::any_of(samples.begin(), samples.end(), [&](const Sample& s) {
        return std::any_of(s.detections.boxes.begin(), s.detections.boxes.end(), other_class);
      })) {
    filtered.assign(samples.begin(), samples.end());
    for (auto& s : filtered) std::erase_if(s.detections.boxes, other_class);
    samples = filtered;
  }
  const bool any = std::any_of(samples.begin(), samples.end(),
                               [](const Sample& s) { return !s.detections.boxes.empty(); });
  if (!any) {
    throw DataError("run_attack: no detection of target class " + std::to_string(cfg.target_class) +
                    " in the training set");
  }

  AttackResult result;
  result.checksum_before = model.parameter_checksum();
  const AttackTrainer trainer(model, samples, cfg);
  result.state = options.resume_from ? load_checkpoint(*options.resume_from, cfg) : init_run_state(cfg);
  RunState& state = result.state;

  std::optional<fs::path> log_path;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir / "checkpoints");
    atomic_write(*options.out_dir / "config.yaml", json_to_yaml(to_json(cfg)));
    log_path = *options.out_dir / "train_log.jsonl";
    std::string replay;
    for (const auto& r : state.history) replay += to_json(r).dump() + "\n";
    atomic_write(*log_path, replay);
  }

  std::size_t logged = state.history.size();
  while (state.patch.epoch < cfg.epochs) {
    const double mean = trainer.run_epoch(state);
    const int epoch = state.patch.epoch;
    spdlog::info("epoch {}/{} mean l_total {:.6f}", epoch, cfg.epochs, mean);
    if (log_path) {
      for (; logged < state.history.size(); ++logged) append_log(*log_path, state.history[logged]);
    }
    if (options.on_epoch) options.on_epoch(epoch, mean);
    const bool periodic = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
    if (options.out_dir && (periodic || epoch == cfg.epochs)) {
      save_checkpoint(*options.out_dir / "checkpoints" / epoch_dir_name(epoch), state, cfg);
    }
    if (options.stop_after_epoch && epoch >= *options.stop_after_epoch) break;
  }

  result.checksum_after = model.parameter_checksum();
  if (result.checksum_after != result.checksum_before) {
    throw TrainingError("victim parameters changed during the attack run");
  }

  json report = {
      {"config_hash", state.patch.config_hash},
      {"seed", cfg.seed},
      {"epochs_completed", state.patch.epoch},
      {"steps", state.step},
      {"model", model.name},
      {"model_checksum", result.checksum_before},
      {"final_losses", state.history.empty() ? json(nullptr) : losses_json(state.history.back().losses)},
  };
  if (!options.validation.empty()) {
    EvalConfig ec;
    ec.patch_scale_factor = cfg.patch_scale_factor;
    result.validation = evaluate_run(state.patch.patch, options.validation, model, ec);
    report["validation"] = to_json(*result.validation);
  }
  if (options.out_dir) {
    PatchManifest manifest;
    manifest.seed = cfg.seed;
    manifest.config_hash = state.patch.config_hash;
    manifest.epoch = state.patch.epoch;
    save_patch(*options.out_dir / "patch.png", state.patch.patch, manifest);
    atomic_write(*options.out_dir / "eval_report.json", report.dump(2) + "\n");
  }
  result.report = std::move(report);
  return result;
}

}  // namespace depthpatch
