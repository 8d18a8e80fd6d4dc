#include "depthpatch/config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

#include "depthpatch/errors.hpp"
#include "depthpatch/util.hpp"

namespace depthpatch {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError("expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("expected a number");
    }
    out = it->get<T>();
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + where + key + "': " + e.what());
  }
}

void read_range(const json& j, const char* key, Range& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
    throw ConfigError("config key '" + where + key + "' must be a [lo, hi] pair");
  }
  out = {(*it)[0].get<double>(), (*it)[1].get<double>()};
}

json yaml_node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  if (text == "true" || text == "True") return true;
  if (text == "false" || text == "False") return false;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return text;
}

void emit(YAML::Emitter& out, const json& j) {
  if (j.is_object()) {
    out << YAML::BeginMap;
    for (const auto& [key, value] : j.items()) {
      out << YAML::Key << key << YAML::Value;
      emit(out, value);
    }
    out << YAML::EndMap;
  } else if (j.is_array()) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : j) emit(out, v);
    out << YAML::EndSeq;
  } else if (j.is_boolean()) {
    out << j.get<bool>();
  } else if (j.is_number_unsigned()) {
    out << j.get<std::uint64_t>();
  } else if (j.is_number_integer()) {
    out << j.get<std::int64_t>();
  } else if (j.is_number()) {
    out << j.dump();  // shortest round-trip form
  } else if (j.is_string()) {
    out << YAML::DoubleQuoted << j.get<std::string>();
  } else {
    out << YAML::Null;
  }
}

}  // namespace

void AttackConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(patch_scale_factor > 0.0 && patch_scale_factor < 1.0)) {
    throw ConfigError("patch_scale_factor must be in (0,1)");
  }
  if (patch_side < 2) throw ConfigError("patch_side must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  loss_weights.validate();
  transforms.validate();
  detector_config().validate();
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
        adam.epsilon > 0.0)) {
    throw ConfigError("adam parameters out of range");
  }
}

DetectorConfig AttackConfig::detector_config() const {
  DetectorConfig d = detector;
  d.target_class = target_class;
  return d;
}

std::string AttackConfig::fingerprint() const { return sha256_hex(to_json(*this).dump()); }

json to_json(const AttackConfig& c) {
  auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
  return {
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"patch_scale_factor", c.patch_scale_factor},
      {"patch_side", c.patch_side},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"target_class", c.target_class},
      {"checkpoint_every", c.checkpoint_every},
      {"loss_weights",
       {{"alpha", c.loss_weights.alpha},
        {"gamma", c.loss_weights.gamma},
        {"use_d1", c.loss_weights.use_d1},
        {"use_d2", c.loss_weights.use_d2},
        {"square_d1", c.loss_weights.square_d1}}},
      {"target_mode", to_string(c.target_mode)},
      {"transforms",
       {{"scale", range(c.transforms.scale)},
        {"rotation_deg", range(c.transforms.rotation_deg)},
        {"noise", range(c.transforms.noise)},
        {"contrast", range(c.transforms.contrast)},
        {"brightness", range(c.transforms.brightness)}}},
      {"detector",
       {{"objectness_threshold", c.detector.objectness_threshold},
        {"nms_iou_threshold", c.detector.nms_iou_threshold},
        {"max_detections", c.detector.max_detections}}},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
  };
}

AttackConfig attack_config_from_json(const json& j, const AttackConfig& base) {
  AttackConfig c = base;
  reject_unknown(j,
                 {"epochs", "learning_rate", "patch_scale_factor", "patch_side", "batch_size", "seed",
                  "target_class", "checkpoint_every", "loss_weights", "target_mode", "transforms",
                  "detector", "adam"},
                 "");
  read(j, "epochs", c.epochs, "");
  read(j, "learning_rate", c.learning_rate, "");
  read(j, "patch_scale_factor", c.patch_scale_factor, "");
  read(j, "patch_side", c.patch_side, "");
  read(j, "batch_size", c.batch_size, "");
  read(j, "seed", c.seed, "");
  read(j, "target_class", c.target_class, "");
  read(j, "checkpoint_every", c.checkpoint_every, "");
  if (const auto it = j.find("loss_weights"); it != j.end()) {
    const std::string w = "loss_weights.";
    reject_unknown(*it, {"alpha", "gamma", "use_d1", "use_d2", "square_d1"}, w);
    read(*it, "alpha", c.loss_weights.alpha, w);
    read(*it, "gamma", c.loss_weights.gamma, w);
    read(*it, "use_d1", c.loss_weights.use_d1, w);
    read(*it, "use_d2", c.loss_weights.use_d2, w);
    read(*it, "square_d1", c.loss_weights.square_d1, w);
  }
  if (const auto it = j.find("target_mode"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("config key 'target_mode' must be a string");
    c.target_mode = target_mode_from_string(it->get<std::string>());
  }
  if (const auto it = j.find("transforms"); it != j.end()) {
    const std::string w = "transforms.";
    reject_unknown(*it, {"scale", "rotation_deg", "noise", "contrast", "brightness"}, w);
    read_range(*it, "scale", c.transforms.scale, w);
    read_range(*it, "rotation_deg", c.transforms.rotation_deg, w);
    read_range(*it, "noise", c.transforms.noise, w);
    read_range(*it, "contrast", c.transforms.contrast, w);
    read_range(*it, "brightness", c.transforms.brightness, w);
  }
  if (const auto it = j.find("detector"); it != j.end()) {
    const std::string w = "detector.";
    reject_unknown(*it, {"objectness_threshold", "nms_iou_threshold", "max_detections"}, w);
    read(*it, "objectness_threshold", c.detector.objectness_threshold, w);
    read(*it, "nms_iou_threshold", c.detector.nms_iou_threshold, w);
    read(*it, "max_detections", c.detector.max_detections, w);
  }
  if (const auto it = j.find("adam"); it != j.end()) {
    const std::string w = "adam.";
    reject_unknown(*it, {"beta1", "beta2", "epsilon"}, w);
    read(*it, "beta1", c.adam.beta1, w);
    read(*it, "beta2", c.adam.beta2, w);
    read(*it, "epsilon", c.adam.epsilon, w);
  }
  c.validate();
  return c;
}

json yaml_to_json(const std::string& yaml_text) {
  try {
    return yaml_node_to_json(YAML::Load(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
}

std::string json_to_yaml(const json& j) {
  YAML::Emitter out;
  emit(out, j);
  return std::string(out.c_str()) + "\n";
}

json read_config_document(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const auto ext = path.extension().string();
  if (ext == ".yaml" || ext == ".yml") {
    json j = yaml_to_json(text);
    return j.is_null() ? json::object() : j;
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON config " + path.string() + ": " + e.what());
  }
}

AttackConfig load_attack_config(const std::filesystem::path& path) {
  return attack_config_from_json(read_config_document(path));
}

}  // namespace depthpatch
