#include "depthpatch/experiments.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <exception>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "depthpatch/util.hpp"

namespace depthpatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_table(const fs::path& dir, const ExperimentTable& table) {
  fs::create_directories(dir);
  atomic_write(dir / "table.json", to_json(table).dump(2) + "\n");
  atomic_write(dir / "table.md", to_markdown(table));
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

}  // namespace

void ExperimentSpec::validate() const {
  base.validate();
  if (variants.empty()) throw ConfigError("experiment has no variants");
  std::set<std::string> names;
  for (const auto& v : variants) {
    if (v.name.empty()) throw ConfigError("variant names must be non-empty");
    if (!names.insert(v.name).second) throw ConfigError("duplicate variant name '" + v.name + "'");
  }
  (void)resolve();
}

std::vector<std::pair<std::string, AttackConfig>> ExperimentSpec::resolve() const {
  std::vector<std::pair<std::string, AttackConfig>> out;
  for (const auto& v : variants) {
    try {
      out.emplace_back(v.name, attack_config_from_json(v.overrides.is_null() ? json::object() : v.overrides, base));
    } catch (const ConfigError& e) {
      throw ConfigError("variant '" + v.name + "': " + e.what());
    }
  }
  return out;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a mapping");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "variants") throw ConfigError("unknown experiment key '" + key + "'");
  }
  ExperimentSpec spec;
  if (j.contains("base")) spec.base = attack_config_from_json(j.at("base"));
  if (!j.contains("variants") || !j.at("variants").is_array()) {
    throw ConfigError("experiment spec needs a 'variants' list");
  }
  for (const auto& v : j.at("variants")) {
    if (!v.is_object() || !v.contains("name") || !v.at("name").is_string()) {
      throw ConfigError("each variant needs a string 'name'");
    }
    spec.variants.push_back({v.at("name").get<std::string>(), v.value("overrides", json::object())});
  }
  spec.validate();
  return spec;
}

json to_json(const ExperimentSpec& spec) {
  json variants = json::array();
  for (const auto& v : spec.variants) variants.push_back({{"name", v.name}, {"overrides", v.overrides}});
  return {{"base", to_json(spec.base)}, {"variants", variants}};
}

ExperimentSpec ablation_spec(const AttackConfig& base) {
  ExperimentSpec spec;
  spec.base = base;
  spec.variants = {
      {"L_d2+L_tv", {{"loss_weights", {{"use_d1", false}, {"use_d2", true}}}}},
      {"L_d1+L_tv", {{"loss_weights", {{"use_d1", true}, {"use_d2", false}, {"square_d1", false}}}}},
      {"L_d1^2+L_d2+L_tv", {{"loss_weights", {{"use_d1", true}, {"use_d2", true}, {"square_d1", true}}}}},
  };
  return spec;
}

ExperimentSpec scale_sweep_spec(const AttackConfig& base, std::span<const double> scales) {
  ExperimentSpec spec;
  spec.base = base;
  for (const double s : scales) {
    std::ostringstream name;
    name << "scale=" << s;
    spec.variants.push_back({name.str(), {{"patch_scale_factor", s}}});
  }
  return spec;
}

ExperimentTable run_experiment(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                               const ExperimentOptions& options, const std::string& kind) {
  spec.validate();
  const auto configs = spec.resolve();
  ExperimentTable table;
  table.kind = kind;
  table.dataset_hash = inputs.dataset_hash;
  table.seed = spec.base.seed;
  table.model_checksum = inputs.model.parameter_checksum();
  table.rows.resize(configs.size());

  auto run_one = [&](std::size_t i) {
    const auto& [name, cfg] = configs[i];
    spdlog::info("{}: training variant '{}'", kind, name);
    RunOptions ro;
    if (options.out_dir) ro.out_dir = *options.out_dir / name;
    ro.validation = inputs.eval;
    const AttackResult result = run_attack(inputs.train, inputs.model, cfg, ro);
    ExperimentRow row;
    row.name = name;
    row.config_hash = cfg.fingerprint();
    row.patch_scale_factor = cfg.patch_scale_factor;
    row.metrics = result.validation->aggregate;
    if (!result.state.history.empty()) row.final_losses = result.state.history.back().losses;
    return row;
  };

  std::vector<bool> done(configs.size(), false);
  std::exception_ptr failure;
  const int workers = std::max(1, std::min<int>(options.parallel, static_cast<int>(configs.size())));
  if (workers > 1 && !inputs.model.model->thread_safe()) {
    throw ConfigError("parallel experiments need a thread-safe model backend");
  }
  if (inputs.eval.empty()) throw ConfigError("experiment needs an evaluation split");
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        ExperimentRow row = run_one(i);
        std::lock_guard lock(mutex);
        table.rows[i] = std::move(row);
        done[i] = true;
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (failure) {
    ExperimentTable partial = table;
    partial.rows.clear();
    for (std::size_t i = 0; i < configs.size(); ++i) {
      if (done[i]) partial.rows.push_back(table.rows[i]);
    }
    if (options.out_dir) write_table(*options.out_dir, partial);
    std::rethrow_exception(failure);
  }
  table.complete = true;
  if (options.out_dir) write_table(*options.out_dir, table);
  return table;
}

ExperimentTable ablate(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                       const ExperimentOptions& options) {
  return run_experiment(spec, inputs, options, "ablation");
}

ExperimentTable sweep_scale(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                            const ExperimentOptions& options) {
  double previous = 0.0;
  for (const auto& v : spec.variants) {
    if (!v.overrides.is_object() || !v.overrides.contains("patch_scale_factor")) {
      throw ConfigError("scale sweep variant '" + v.name + "' must set patch_scale_factor");
    }
    const json& s = v.overrides.at("patch_scale_factor");
    if (!s.is_number()) throw ConfigError("patch_scale_factor must be a number");
    const double scale = s.get<double>();
    if (!(scale > 0.0 && scale < 1.0)) throw ConfigError("sweep scales must lie in (0,1)");
    if (!(scale > previous)) throw ConfigError("sweep scales must be strictly ascending");
    previous = scale;
  }
  ExperimentTable table = run_experiment(spec, inputs, options, "scale_sweep");
  bool monotonic = true;
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    if (!(table.rows[i].metrics.e_d > table.rows[i - 1].metrics.e_d)) monotonic = false;
  }
  table.e_d_monotonic = monotonic;
  if (options.out_dir) write_table(*options.out_dir, table);
  return table;
}

std::string to_markdown(const ExperimentTable& t) {
  std::ostringstream out;
  out << "# " << t.kind << (t.complete ? "" : " (incomplete)") << "\n\n";
  out << "- dataset hash: `" << t.dataset_hash << "`\n";
  out << "- seed: " << t.seed << "\n";
  out << "- model checksum: `" << t.model_checksum << "`\n";
  if (t.e_d_monotonic) out << "- E_d increasing with scale: " << (*t.e_d_monotonic ? "yes" : "no") << "\n";
  out << "\n| variant | scale | E_d | R_a | MSE | final L_total |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : t.rows) {
    out << "| " << r.name << " | " << fixed(r.patch_scale_factor, 2) << " | " << fixed(r.metrics.e_d)
        << " | " << fixed(r.metrics.r_a) << " | " << fixed(r.metrics.mse, 5) << " | "
        << fixed(r.final_losses.l_total, 6) << " |\n";
  }
  return out.str();
}

json to_json(const ExperimentTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"name", r.name},
                    {"config_hash", r.config_hash},
                    {"patch_scale_factor", r.patch_scale_factor},
                    {"e_d", r.metrics.e_d},
                    {"r_a", r.metrics.r_a},
                    {"mse", r.metrics.mse},
                    {"scenes", r.metrics.scenes},
                    {"final_l_total", r.final_losses.l_total}});
  }
  json j = {{"kind", t.kind},
            {"dataset_hash", t.dataset_hash},
            {"seed", t.seed},
            {"model_checksum", t.model_checksum},
            {"complete", t.complete},
            {"rows", rows}};
  if (t.e_d_monotonic) j["e_d_monotonic"] = *t.e_d_monotonic;
  return j;
}

ExperimentTable experiment_table_from_json(const json& j) {
  try {
    ExperimentTable t;
    t.kind = j.at("kind").get<std::string>();
    t.dataset_hash = j.at("dataset_hash").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.model_checksum = j.at("model_checksum").get<std::string>();
    t.complete = j.at("complete").get<bool>();
    if (j.contains("e_d_monotonic")) t.e_d_monotonic = j.at("e_d_monotonic").get<bool>();
    for (const auto& r : j.at("rows")) {
      ExperimentRow row;
      row.name = r.at("name").get<std::string>();
      row.config_hash = r.at("config_hash").get<std::string>();
      row.patch_scale_factor = r.at("patch_scale_factor").get<double>();
      row.metrics.e_d = r.at("e_d").get<double>();
      row.metrics.r_a = r.at("r_a").get<double>();
      row.metrics.mse = r.at("mse").get<double>();
      row.metrics.scenes = r.at("scenes").get<std::size_t>();
      row.final_losses.l_total = r.at("final_l_total").get<double>();
      t.rows.push_back(std::move(row));
    }
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed experiment table: ") + e.what());
  }
}

}  // namespace depthpatch
