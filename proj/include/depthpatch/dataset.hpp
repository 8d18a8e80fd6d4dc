#pragma once

// Datasets on disk:
//
//   <root>/<split>/images/<image_id>.png
//   <root>/<split>/annotations.json        (oracle detections)
//
// KITTI object layouts (<root>/<split>/image_2, label_2) are loaded after
// converting their label files with convert_kitti_labels.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/core.hpp"
#include "depthpatch/detector.hpp"
#include "depthpatch/scenes.hpp"

namespace depthpatch {

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<std::string> image_ids;  // sorted
  std::filesystem::path annotations;
  std::string content_hash;  // sha256 over ids and annotation bytes
};

struct Sample {
  std::string image_id;
  ImageTensor image;
  DetectionSet detections;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;  // manifest order
};

struct LoadOptions {
  DetectorConfig detector;
  // Registered adapter name; empty selects the oracle annotations file.
  std::string detector_name;
  // Oracle annotations file other than <root>/<split>/annotations.json.
  std::optional<std::filesystem::path> annotations;
};

// Throws DataError on a missing root, an unreadable image (naming the file)
// or a malformed annotation row (naming the line).
DatasetManifest read_manifest(const std::filesystem::path& root, const std::string& split);
Dataset load_dataset(const std::filesystem::path& root, const std::string& split,
                     const LoadOptions& options);

std::string content_hash(std::span<const std::string> image_ids, std::string_view annotation_bytes);

// In-memory dataset from synthetic scenes with oracle detections taken from
// the ground-truth boxes. Ids are "<prefix><index>" zero padded.
Dataset dataset_from_scenes(std::span<const SyntheticScene> scenes, const std::string& prefix,
                            const DetectorConfig& detector);

// Writes images (16-bit PNG), ground-truth disparity and annotations.json.
void write_scene_dataset(const std::filesystem::path& root, const std::string& split,
                         std::span<const SyntheticScene> scenes, const std::string& prefix);

// KITTI label_2 text files → annotation rows. Each label line is
// "type truncated occluded alpha left top right bottom ...". Only types in
// `class_map` are kept; score is 1.
std::vector<AnnotationRow> convert_kitti_labels(const std::filesystem::path& label_dir,
                                                const std::map<std::string, int>& class_map);

}  // namespace depthpatch
