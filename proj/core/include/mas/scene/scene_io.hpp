#pragma once

#include <filesystem>
#include <iosfwd>

#include "mas/scene/scene.hpp"

namespace mas::scene {

/// "SCNM", u16 version, u16 h, u16 w, then u16 grids (panoptic class,
/// panoptic instance, human class, face class), all little-endian, row-major.
inline constexpr std::uint16_t kSceneFormatVersion = 1;

void write_scene(std::ostream& os, const SceneMap& scene);
SceneMap read_scene(std::istream& is);
void save_scene(const std::filesystem::path& path, const SceneMap& scene);
SceneMap load_scene(const std::filesystem::path& path);

}  // namespace mas::scene
