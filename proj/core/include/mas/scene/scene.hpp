#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "mas/ndgrad/tensor.hpp"

namespace mas::scene {

/// Reserved "no label" value in every group grid.
inline constexpr std::uint16_t kNullClass = 0xFFFF;

enum class Group { panoptic = 0, human = 1, face = 2 };
const char* group_name(Group g);

/// Category counts of the three segmentation groups. Global channel order is
/// panoptic, human, face, then one edge channel, so channels() == m_p + m_h + m_f + 1.
struct SceneSchema {
  int panoptic = 8;
  int human = 3;
  int face = 5;
  /// Inclusive global channel interval receiving the face-part boost.
  int face_part_first = 11;
  int face_part_last = 15;

  /// m_p=8, m_h=3, m_f=5: 17 channels.
  static SceneSchema desk();
  /// m_p=133, m_h=20, m_f=5: 159 channels, face parts on channels 153..157.
  static SceneSchema full_scale();

  int channels() const { return panoptic + human + face + 1; }
  int edge_channel() const { return channels() - 1; }
  int offset(Group g) const;
  int size(Group g) const;
  void validate() const;

  friend bool operator==(const SceneSchema&, const SceneSchema&) = default;
};

/// Per-pixel labels of one scene: a class grid per group plus panoptic
/// instance IDs (0 = no instance). Grids are row-major.
struct SceneMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> panoptic, instance, human, face;

  SceneMap() = default;
  /// All-null scene with no instances.
  SceneMap(int h, int w);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  std::vector<std::uint16_t>& grid(Group g);
  const std::vector<std::uint16_t>& grid(Group g) const;

  friend bool operator==(const SceneMap&, const SceneMap&) = default;
};

/// Throws RangeError naming the first offending pixel and group, or the
/// instance that carries two classes.
void validate(const SceneMap& scene, const SceneSchema& schema);

/// Binary boundary map: a pixel is set iff a 4-neighbour differs in panoptic
/// class, instance, human class or face class.
std::vector<std::uint8_t> extract_edges(const SceneMap& scene, const SceneSchema& schema);

/// [m, h, w] one-hot encoding: per-group spans (null = all zero in the span)
/// followed by the edge channel.
ndgrad::Tensor encode_channels(const SceneMap& scene, const SceneSchema& schema);
/// Appends the same m*h*w values to `out`; used to assemble batches.
void append_channels(const SceneMap& scene, const SceneSchema& schema, std::vector<double>& out);

/// `boost` on [first, last], 1 elsewhere. Requires 0 <= cat < channels - 1.
double category_weight(int cat, double boost, int first, int last, int channels);

/// Per-channel loss weights; the edge channel always has weight 1.
class CategoryWeights {
 public:
  CategoryWeights(const SceneSchema& schema, double boost);
  double operator()(int channel) const { return weights_.at(static_cast<std::size_t>(channel)); }
  std::span<const double> per_channel() const { return weights_; }
  double boost() const { return boost_; }

 private:
  double boost_;
  std::vector<double> weights_;
};

struct ReplaceClass {
  Group group = Group::panoptic;
  std::uint16_t from = 0;
  std::uint16_t to = 0;
};

/// Paints class `cls` over a rectangle. A panoptic paste gets a fresh
/// instance ID and clears the human and face labels under it.
struct PasteSketch {
  Group group = Group::panoptic;
  std::uint16_t cls = 0;
  int y = 0, x = 0, h = 0, w = 0;
};

using SceneEdit = std::variant<ReplaceClass, PasteSketch>;

SceneMap edit_scene(const SceneMap& scene, std::span<const SceneEdit> edits, const SceneSchema& schema);

}  // namespace mas::scene
