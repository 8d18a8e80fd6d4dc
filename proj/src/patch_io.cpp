#include "depthpatch/patch_io.hpp"

#include "depthpatch/image_io.hpp"
#include "depthpatch/util.hpp"
#include "json.hpp"

namespace depthpatch {

std::filesystem::path manifest_path(const std::filesystem::path& png_path) {
  auto p = png_path;
  p.replace_extension(".json");
  return p;
}

PatchManifest save_patch(const std::filesystem::path& png_path, const Patch& patch,
                         PatchManifest manifest) {
  const std::string png = encode_png(patch.pixels(), BitDepth::k16);
  manifest.side = patch.side();
  manifest.png_sha256 = sha256_hex(png);
  const nlohmann::json j = {
      {"side", manifest.side},           {"seed", manifest.seed},
      {"config_hash", manifest.config_hash}, {"epoch", manifest.epoch},
      {"png_sha256", manifest.png_sha256},
  };
  // PNG first: a crash in between leaves a manifest that no longer matches,
  // which load_patch rejects.
  atomic_write(png_path, png);
  atomic_write(manifest_path(png_path), j.dump(2) + "\n");
  return manifest;
}

LoadedPatch load_patch(const std::filesystem::path& png_path) {
  const std::string png = read_file(png_path);
  LoadedPatch out;
  try {
    const auto j = nlohmann::json::parse(read_file(manifest_path(png_path)));
    out.manifest.side = j.at("side").get<int>();
    out.manifest.seed = j.at("seed").get<std::uint64_t>();
    out.manifest.config_hash = j.at("config_hash").get<std::string>();
    out.manifest.epoch = j.at("epoch").get<int>();
    out.manifest.png_sha256 = j.at("png_sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed patch manifest for " + png_path.string() + ": " + e.what());
  }
  if (sha256_hex(png) != out.manifest.png_sha256) {
    throw DataError("patch manifest hash does not match " + png_path.string());
  }
  const ImageTensor pixels = read_png_rgb(png_path);
  if (pixels.height() != out.manifest.side || pixels.width() != out.manifest.side) {
    throw DataError("patch " + png_path.string() + " is not " + std::to_string(out.manifest.side) +
                    "x" + std::to_string(out.manifest.side));
  }
  out.patch = Patch(pixels);
  return out;
}

}  // namespace depthpatch
