#include "depthpatch/detector.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace depthpatch {

void DetectorConfig::validate() const {
  auto in_open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_open_unit(objectness_threshold)) {
    throw ConfigError("objectness_threshold must be in (0,1)");
  }
  if (!in_open_unit(nms_iou_threshold)) throw ConfigError("nms_iou_threshold must be in (0,1)");
  if (max_detections < 1) throw ConfigError("max_detections must be >= 1");
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<BBox> nms(std::span<const BBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return boxes[l].score > boxes[r].score;
  });

  std::vector<BBox> kept;
  for (const std::size_t idx : order) {
    const BBox& candidate = boxes[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BBox& k) {
      return k.class_id == candidate.class_id && iou(k, candidate) > iou_threshold;
    });
    if (!suppressed) kept.push_back(candidate);
  }
  return kept;
}

DetectionSet detect(const Detector* backend, const ImageTensor& image, std::string_view image_id,
                    const DetectorConfig& cfg) {
  if (backend == nullptr) throw ConfigError("detect: no detector backend registered");
  cfg.validate();

  std::vector<BBox> filtered;
  for (const BBox& b : backend->candidates(image, image_id)) {
    if (!std::isfinite(b.score)) continue;
    if (b.score < cfg.objectness_threshold) continue;
    if (cfg.target_class >= 0 && b.class_id != cfg.target_class) continue;
    filtered.push_back(b);
  }
  auto kept = nms(filtered, cfg.nms_iou_threshold);
  if (kept.size() > static_cast<std::size_t>(cfg.max_detections)) {
    kept.resize(static_cast<std::size_t>(cfg.max_detections));
  }
  return DetectionSet{std::string(image_id), std::move(kept)};
}

OracleDetector::OracleDetector(std::vector<AnnotationRow> rows) {
  for (auto& row : rows) by_image_[row.image_id].push_back(row.box);
}

OracleDetector OracleDetector::from_file(const std::filesystem::path& path) {
  return OracleDetector(read_annotations(path));
}

bool OracleDetector::has_image(std::string_view image_id) const {
  return by_image_.find(image_id) != by_image_.end();
}

std::vector<BBox> OracleDetector::candidates(const ImageTensor& /*image*/,
                                             std::string_view image_id) const {
  const auto it = by_image_.find(image_id);
  if (it == by_image_.end()) {
    spdlog::warn("oracle detector: no annotations for image '{}'", image_id);
    return {};
  }
  return it->second;
}

namespace {

// 1-based line on which the `index`-th element of the top-level array starts.
int line_of_row(std::string_view text, std::size_t index) {
  int line = 1;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  std::size_t seen = 0;
  bool expecting_element = false;
  for (const char ch : text) {
    if (ch == '\n') ++line;
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (ch == '\\') {
        escaped = true;
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
    }
    if (depth == 1 && expecting_element && !std::isspace(static_cast<unsigned char>(ch))) {
      if (seen == index) return line;
      ++seen;
      expecting_element = false;
    }
    if (ch == '[' || ch == '{') {
      ++depth;
      if (depth == 1) expecting_element = true;
    } else if (ch == ']' || ch == '}') {
      --depth;
    } else if (ch == ',' && depth == 1) {
      expecting_element = true;
    }
  }
  return line;
}

double require_number(const nlohmann::json& row, const char* key) {
  const auto it = row.find(key);
  if (it == row.end() || !it->is_number()) {
    throw std::invalid_argument(std::string("missing or non-numeric field '") + key + "'");
  }
  return it->get<double>();
}

}  // namespace

std::vector<AnnotationRow> parse_annotations(std::string_view text, std::string_view source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw DataError(std::string(source) + ":" + std::to_string(line) +
                    ": malformed annotations JSON");
  }
  if (!doc.is_array()) {
    throw DataError(std::string(source) + ":1: annotations must be a JSON array");
  }

  std::vector<AnnotationRow> rows;
  rows.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc[i];
    try {
      if (!row.is_object()) throw std::invalid_argument("row is not an object");
      const auto id = row.find("image_id");
      if (id == row.end() || !id->is_string()) {
        throw std::invalid_argument("missing string field 'image_id'");
      }
      const auto cls = row.find("class_id");
      if (cls == row.end() || !cls->is_number_integer()) {
        throw std::invalid_argument("missing integer field 'class_id'");
      }
      BBox box{require_number(row, "cx"), require_number(row, "cy"), require_number(row, "w"),
               require_number(row, "h"), require_number(row, "score"), cls->get<int>()};
      if (!(box.w > 0.0) || !(box.h > 0.0)) {
        throw std::invalid_argument("box width and height must be positive");
      }
      if (!(box.score >= 0.0 && box.score <= 1.0)) {
        throw std::invalid_argument("score must be in [0,1]");
      }
      rows.push_back(AnnotationRow{id->get<std::string>(), box});
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string(source) + ":" + std::to_string(line_of_row(text, i)) +
                      ": malformed annotation row " + std::to_string(i) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<AnnotationRow> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read annotations file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_annotations(buffer.str(), path.string());
}

std::string format_annotations(std::span<const AnnotationRow> rows) {
  std::vector<AnnotationRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& l, const auto& r) {
    if (l.image_id != r.image_id) return l.image_id < r.image_id;
    return l.box.score > r.box.score;
  });
  std::string out = "[\n";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i];
    nlohmann::json row = {{"image_id", r.image_id}, {"class_id", r.box.class_id},
                          {"cx", r.box.cx},         {"cy", r.box.cy},
                          {"w", r.box.w},           {"h", r.box.h},
                          {"score", r.box.score}};
    out += "  " + row.dump();
    out += (i + 1 < sorted.size()) ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

DetectorRegistry& DetectorRegistry::global() {
  static DetectorRegistry registry;
  return registry;
}

void DetectorRegistry::add(std::string name, DetectorFactory factory) {
  std::lock_guard lock(mutex_);
  factories_[std::move(name)] = std::move(factory);
}

std::unique_ptr<Detector> DetectorRegistry::create(const std::string& name) const {
  std::lock_guard lock(mutex_);
  const auto it = factories_.find(name);
  if (it == factories_.end()) {
    throw ConfigError("unknown detector adapter '" + name + "'");
  }
  return it->second();
}

std::vector<std::string> DetectorRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

void DetectionCache::put(DetectionSet set) {
  std::unique_lock lock(mutex_);
  auto key = set.image_id;
  sets_[std::move(key)] = std::move(set);
}

const DetectionSet* DetectionCache::find(std::string_view image_id) const {
  std::shared_lock lock(mutex_);
  const auto it = sets_.find(std::string(image_id));
  return it == sets_.end() ? nullptr : &it->second;
}

std::size_t DetectionCache::size() const {
  std::shared_lock lock(mutex_);
  return sets_.size();
}

}  // namespace depthpatch
