#include "depthpatch/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "depthpatch/image_io.hpp"
#include "depthpatch/util.hpp"

namespace depthpatch {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

fs::path image_dir(const fs::path& split_dir) {
  if (fs::is_directory(split_dir / "images")) return split_dir / "images";
  if (fs::is_directory(split_dir / "image_2")) return split_dir / "image_2";
  throw DataError("no images/ or image_2/ directory under " + split_dir.string());
}

std::string padded_id(const std::string& prefix, std::size_t index, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(4, std::to_string(count).size());
  std::string digits = std::to_string(index);
  return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

std::string content_hash(std::span<const std::string> image_ids, std::string_view annotation_bytes) {
  std::string buffer;
  for (const auto& id : image_ids) {
    buffer += id;
    buffer += '\n';
  }
  buffer += '\0';
  buffer += annotation_bytes;
  return sha256_hex(buffer);
}

DatasetManifest read_manifest(const fs::path& root, const std::string& split) {
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  const fs::path split_dir = root / split;
  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.image_ids = list_images(image_dir(split_dir));
  m.annotations = split_dir / "annotations.json";
  const std::string bytes = fs::exists(m.annotations) ? read_file(m.annotations) : std::string();
  m.content_hash = content_hash(m.image_ids, bytes);
  return m;
}

Dataset load_dataset(const fs::path& root, const std::string& split, const LoadOptions& options) {
  options.detector.validate();
  Dataset ds;
  ds.manifest = read_manifest(root, split);
  if (options.annotations) {
    if (!options.detector_name.empty()) throw ConfigError("choose either an annotations file or a detector");
    ds.manifest.annotations = *options.annotations;
    if (fs::exists(ds.manifest.annotations)) {
      ds.manifest.content_hash = content_hash(ds.manifest.image_ids, read_file(ds.manifest.annotations));
    }
  }
  std::unique_ptr<Detector> backend;
  if (options.detector_name.empty()) {
    if (!fs::exists(ds.manifest.annotations)) {
      throw DataError("oracle mode needs " + ds.manifest.annotations.string());
    }
    backend = std::make_unique<OracleDetector>(OracleDetector::from_file(ds.manifest.annotations));
  } else {
    backend = DetectorRegistry::global().create(options.detector_name);
  }
  const fs::path dir = image_dir(root / split);
  for (const auto& id : ds.manifest.image_ids) {
    Sample s;
    s.image_id = id;
    s.image = read_png_rgb(dir / (id + ".png"));
    s.detections = detect(backend.get(), s.image, id, options.detector);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset dataset_from_scenes(std::span<const SyntheticScene> scenes, const std::string& prefix,
                            const DetectorConfig& detector) {
  std::vector<AnnotationRow> rows;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ids.push_back(padded_id(prefix, i, scenes.size()));
    for (const BBox& b : scenes[i].objects) rows.push_back({ids.back(), b});
  }
  const std::string annotations = format_annotations(rows);
  const OracleDetector oracle(rows);

  Dataset ds;
  ds.manifest.split = prefix;
  ds.manifest.image_ids = ids;
  ds.manifest.content_hash = content_hash(ids, annotations);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ds.samples.push_back({ids[i], scenes[i].image, detect(&oracle, scenes[i].image, ids[i], detector)});
  }
  return ds;
}

void write_scene_dataset(const fs::path& root, const std::string& split,
                         std::span<const SyntheticScene> scenes, const std::string& prefix) {
  const fs::path split_dir = root / split;
  fs::create_directories(split_dir / "images");
  fs::create_directories(split_dir / "disparity");
  std::vector<AnnotationRow> rows;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string id = padded_id(prefix, i, scenes.size());
    write_png(split_dir / "images" / (id + ".png"), scenes[i].image, BitDepth::k16);
    write_png(split_dir / "disparity" / (id + ".png"), scenes[i].true_disparity, BitDepth::k16);
    for (const BBox& b : scenes[i].objects) rows.push_back({id, b});
  }
  atomic_write(split_dir / "annotations.json", format_annotations(rows));
}

std::vector<AnnotationRow> convert_kitti_labels(const fs::path& label_dir,
                                                const std::map<std::string, int>& class_map) {
  if (!fs::is_directory(label_dir)) throw DataError("label directory not found: " + label_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(label_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<AnnotationRow> rows;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot read label file " + file.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream fields(line);
      std::string type;
      double truncated = 0, occluded = 0, alpha = 0, left = 0, top = 0, right = 0, bottom = 0;
      if (!(fields >> type >> truncated >> occluded >> alpha >> left >> top >> right >> bottom)) {
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": malformed KITTI label");
      }
      const auto cls = class_map.find(type);
      if (cls == class_map.end()) continue;
      if (!(right > left) || !(bottom > top)) {
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": degenerate box");
      }
      rows.push_back({file.stem().string(), box_from_corners(left, top, right, bottom, 1.0, cls->second)});
    }
  }
  return rows;
}

}  // namespace depthpatch
