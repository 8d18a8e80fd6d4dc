#pragma once

// Patches persist as a lossless 16-bit RGB PNG with a JSON manifest next to
// it (same stem, .json extension).

#include <cstdint>
#include <filesystem>
#include <string>

#include "depthpatch/core.hpp"

namespace depthpatch {

struct PatchManifest {
  int side = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  int epoch = 0;
  std::string png_sha256;  // filled in by save_patch
};

struct LoadedPatch {
  Patch patch;
  PatchManifest manifest;
};

// Returns the manifest as written.
PatchManifest save_patch(const std::filesystem::path& png_path, const Patch& patch,
                         PatchManifest manifest);
// Throws DataError when the PNG does not match the manifest (hash or side).
LoadedPatch load_patch(const std::filesystem::path& png_path);

std::filesystem::path manifest_path(const std::filesystem::path& png_path);

}  // namespace depthpatch
