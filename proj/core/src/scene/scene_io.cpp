#include "mas/scene/scene_io.hpp"

#include <fstream>

#include "mas/io/binary.hpp"

namespace mas::scene {

void write_scene(std::ostream& os, const SceneMap& scene) {
  if (scene.height <= 0 || scene.width <= 0 || scene.height > 0xffff || scene.width > 0xffff) {
    throw FormatError("SCNM: extents do not fit u16");
  }
  os.write("SCNM", 4);
  io::put_u16(os, kSceneFormatVersion);
  io::put_u16(os, static_cast<std::uint16_t>(scene.height));
  io::put_u16(os, static_cast<std::uint16_t>(scene.width));
  for (const auto* grid : {&scene.panoptic, &scene.instance, &scene.human, &scene.face}) {
    if (grid->size() != scene.pixels()) throw FormatError("SCNM: grid size mismatch");
    for (auto v : *grid) io::put_u16(os, v);
  }
  if (!os) throw FormatError("SCNM: write failed");
}

SceneMap read_scene(std::istream& is) {
  io::expect_magic(is, "SCNM", "SCNM");
  const auto version = io::get_u16(is, "SCNM version");
  if (version != kSceneFormatVersion) throw FormatError("SCNM: unsupported version " + std::to_string(version));
  const int h = io::get_u16(is, "SCNM height");
  const int w = io::get_u16(is, "SCNM width");
  SceneMap scene(h, w);
  for (auto* grid : {&scene.panoptic, &scene.instance, &scene.human, &scene.face}) {
    for (auto& v : *grid) v = io::get_u16(is, "SCNM grid");
  }
  return scene;
}

void save_scene(const std::filesystem::path& path, const SceneMap& scene) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_scene(os, scene);
}

SceneMap load_scene(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_scene(is);
}

}  // namespace mas::scene
