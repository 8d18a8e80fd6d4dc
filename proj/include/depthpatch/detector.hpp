#pragma once

// Detection tuples that seed patch and focus masks. Boxes come from a
// Detector backend: the oracle backend replays an annotations file, adapters
// wrap external networks. Post-processing (objectness threshold, class filter,
// class-aware NMS, detection cap) is shared by every backend.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "depthpatch/core.hpp"

namespace depthpatch {

struct DetectorConfig {
  double objectness_threshold = 0.5;
  double nms_iou_threshold = 0.4;
  int max_detections = 14;
  // Negative keeps every class.
  int target_class = 0;

  void validate() const;
  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

struct DetectionSet {
  std::string image_id;
  std::vector<BBox> boxes;  // sorted by descending score
};

double iou(const BBox& a, const BBox& b);

// Greedy class-aware suppression in descending score order. Equal scores keep
// input order. The result is sorted by score.
std::vector<BBox> nms(std::span<const BBox> boxes, double iou_threshold);

class Detector {
 public:
  virtual ~Detector() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  // Raw candidates before thresholding and NMS.
  [[nodiscard]] virtual std::vector<BBox> candidates(const ImageTensor& image,
                                                     std::string_view image_id) const = 0;
};

// Threshold → class filter → NMS → cap. `backend` may not be null.
DetectionSet detect(const Detector* backend, const ImageTensor& image, std::string_view image_id,
                    const DetectorConfig& cfg);

struct AnnotationRow {
  std::string image_id;
  BBox box;
};

// Replays boxes from an annotations file: a JSON array of
// {image_id, class_id, cx, cy, w, h, score} rows in pixel units.
class OracleDetector final : public Detector {
 public:
  explicit OracleDetector(std::vector<AnnotationRow> rows);
  static OracleDetector from_file(const std::filesystem::path& path);

  [[nodiscard]] std::string name() const override { return "oracle"; }
  [[nodiscard]] std::vector<BBox> candidates(const ImageTensor& image,
                                             std::string_view image_id) const override;
  [[nodiscard]] bool has_image(std::string_view image_id) const;

 private:
  std::map<std::string, std::vector<BBox>, std::less<>> by_image_;
};

// Parses annotation rows; malformed rows raise DataError naming the line.
std::vector<AnnotationRow> parse_annotations(std::string_view text, std::string_view source);
std::vector<AnnotationRow> read_annotations(const std::filesystem::path& path);
// One row per line, sorted by image id then descending score.
std::string format_annotations(std::span<const AnnotationRow> rows);

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

// Name → factory table for external detector adapters.
class DetectorRegistry {
 public:
  static DetectorRegistry& global();
  void add(std::string name, DetectorFactory factory);
  // Throws ConfigError for unknown names.
  [[nodiscard]] std::unique_ptr<Detector> create(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> names() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, DetectorFactory> factories_;
};

// Detections computed once per image before optimization. Writes happen
// during warm-up; afterwards concurrent readers take a shared lock.
class DetectionCache {
 public:
  void put(DetectionSet set);
  [[nodiscard]] const DetectionSet* find(std::string_view image_id) const;
  [[nodiscard]] std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, DetectionSet> sets_;
};

}  // namespace depthpatch
