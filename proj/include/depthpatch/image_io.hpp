#pragma once

// PNG encode/decode at the [0,1] boundary. 8-bit and 16-bit files are
// accepted on read; gray and alpha inputs are expanded or stripped to RGB.

#include <filesystem>
#include <string>

#include "depthpatch/core.hpp"
#include "depthpatch/model.hpp"

namespace depthpatch {

// Throws DataError naming the file when it cannot be decoded.
ImageTensor read_png_rgb(const std::filesystem::path& path);
DisparityMap read_png_gray(const std::filesystem::path& path);

enum class BitDepth { k8 = 8, k16 = 16 };

// PNG bytes; values are rounded to the nearest code.
std::string encode_png(const ImageTensor& image, BitDepth depth);
std::string encode_png(const DisparityMap& map, BitDepth depth);
void write_png(const std::filesystem::path& path, const ImageTensor& image, BitDepth depth);
void write_png(const std::filesystem::path& path, const DisparityMap& map, BitDepth depth);

// 16-bit PNG plus <stem>.json recording the raw min/max of the model output.
void write_disparity(const std::filesystem::path& png_path, const NormalizedDisparity& disparity);

}  // namespace depthpatch
