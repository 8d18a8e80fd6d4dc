#include "depthpatch/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "depthpatch/util.hpp"
#include "json.hpp"

namespace depthpatch {

namespace {

struct Decoded {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<double> values;
};

Decoded decode(const std::filesystem::path& path, bool want_rgb) {
  const std::string bytes = read_file(path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  // Linear 16-bit output keeps 16-bit sources exact; 8-bit sources are
  // widened without gamma conversion by reading them as sRGB 8-bit.
  const bool sixteen = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  Decoded out;
  out.height = static_cast<int>(image.height);
  out.width = static_cast<int>(image.width);
  out.channels = want_rgb ? 3 : 1;
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width * out.channels;
  out.values.resize(n);
  if (sixteen) {
    image.format = want_rgb ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
    std::vector<png_uint_16> buf(n);
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
      throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    for (std::size_t i = 0; i < n; ++i) out.values[i] = buf[i] / 65535.0;
  } else {
    image.format = want_rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(n);
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
      throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    for (std::size_t i = 0; i < n; ++i) out.values[i] = buf[i] / 255.0;
  }
  return out;
}

std::string encode(int height, int width, int channels, std::span<const double> values,
                   BitDepth depth) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  const bool rgb = channels == 3;
  std::size_t size = 0;
  auto write = [&](const void* buffer, void* memory) {
    return png_image_write_to_memory(&image, memory, &size, 0, buffer, 0, nullptr);
  };
  std::string out;
  auto run = [&](const void* buffer) {
    if (!write(buffer, nullptr)) throw DataError(std::string("PNG encode failed: ") + image.message);
    out.resize(size);
    if (!write(buffer, out.data())) throw DataError(std::string("PNG encode failed: ") + image.message);
  };
  if (depth == BitDepth::k16) {
    image.format = rgb ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
    std::vector<png_uint_16> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      buf[i] = static_cast<png_uint_16>(std::lround(clamp_unit(values[i]) * 65535.0));
    }
    run(buf.data());
  } else {
    image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      buf[i] = static_cast<png_byte>(std::lround(clamp_unit(values[i]) * 255.0));
    }
    run(buf.data());
  }
  return out;
}

}  // namespace

ImageTensor read_png_rgb(const std::filesystem::path& path) {
  Decoded d = decode(path, true);
  return ImageTensor(d.height, d.width, std::move(d.values));
}

DisparityMap read_png_gray(const std::filesystem::path& path) {
  Decoded d = decode(path, false);
  return DisparityMap(d.height, d.width, std::move(d.values));
}

std::string encode_png(const ImageTensor& image, BitDepth depth) {
  return encode(image.height(), image.width(), 3, image.data(), depth);
}

std::string encode_png(const DisparityMap& map, BitDepth depth) {
  return encode(map.height(), map.width(), 1, map.data(), depth);
}

void write_png(const std::filesystem::path& path, const ImageTensor& image, BitDepth depth) {
  atomic_write(path, encode_png(image, depth));
}

void write_png(const std::filesystem::path& path, const DisparityMap& map, BitDepth depth) {
  atomic_write(path, encode_png(map, depth));
}

void write_disparity(const std::filesystem::path& png_path, const NormalizedDisparity& disparity) {
  write_png(png_path, disparity.map, BitDepth::k16);
  const nlohmann::json sidecar = {
      {"normalization", "per-image min/max"},
      {"raw_min", disparity.raw_min},
      {"raw_max", disparity.raw_max},
  };
  auto json_path = png_path;
  json_path.replace_extension(".json");
  atomic_write(json_path, sidecar.dump(2) + "\n");
}

}  // namespace depthpatch
