#include "mas/scene/scene.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "mas/error.hpp"

namespace mas::scene {

const char* group_name(Group g) {
  switch (g) {
    case Group::panoptic: return "panoptic";
    case Group::human: return "human";
    case Group::face: return "face";
  }
  return "?";
}

SceneSchema SceneSchema::desk() { return {8, 3, 5, 11, 15}; }

// Face parts (eyebrows, eyes, nose, outer mouth, inner mouth) are the last
// five categories before the edge channel.
SceneSchema SceneSchema::full_scale() { return {133, 20, 5, 153, 157}; }

int SceneSchema::offset(Group g) const {
  switch (g) {
    case Group::panoptic: return 0;
    case Group::human: return panoptic;
    case Group::face: return panoptic + human;
  }
  return 0;
}

int SceneSchema::size(Group g) const {
  switch (g) {
    case Group::panoptic: return panoptic;
    case Group::human: return human;
    case Group::face: return face;
  }
  return 0;
}

void SceneSchema::validate() const {
  if (panoptic <= 0 || human <= 0 || face <= 0) throw RangeError("schema: every group needs at least one category");
  if (panoptic >= kNullClass || human >= kNullClass || face >= kNullClass) throw RangeError("schema: group too large");
  const int face_lo = offset(Group::face), face_hi = face_lo + face - 1;
  if (face_part_first > face_part_last || face_part_first < face_lo || face_part_last > face_hi) {
    throw RangeError("schema: face-part range [" + std::to_string(face_part_first) + "," +
                     std::to_string(face_part_last) + "] outside face span [" + std::to_string(face_lo) + "," +
                     std::to_string(face_hi) + "]");
  }
}

SceneMap::SceneMap(int h, int w) : height(h), width(w) {
  if (h <= 0 || w <= 0) throw RangeError("scene: extents must be positive");
  panoptic.assign(pixels(), kNullClass);
  instance.assign(pixels(), 0);
  human.assign(pixels(), kNullClass);
  face.assign(pixels(), kNullClass);
}

std::vector<std::uint16_t>& SceneMap::grid(Group g) {
  switch (g) {
    case Group::panoptic: return panoptic;
    case Group::human: return human;
    case Group::face: return face;
  }
  return panoptic;
}

const std::vector<std::uint16_t>& SceneMap::grid(Group g) const { return const_cast<SceneMap&>(*this).grid(g); }

void validate(const SceneMap& scene, const SceneSchema& schema) {
  if (scene.height <= 0 || scene.width <= 0) throw RangeError("scene: extents must be positive");
  const std::size_t n = scene.pixels();
  if (scene.panoptic.size() != n || scene.instance.size() != n || scene.human.size() != n || scene.face.size() != n) {
    throw RangeError("scene: grid sizes do not match " + std::to_string(scene.height) + "x" + std::to_string(scene.width));
  }
  for (Group g : {Group::panoptic, Group::human, Group::face}) {
    const auto& grid = scene.grid(g);
    const int limit = schema.size(g);
    for (std::size_t i = 0; i < n; ++i) {
      if (grid[i] != kNullClass && grid[i] >= limit) {
        throw RangeError("scene: class " + std::to_string(grid[i]) + " at pixel (" + std::to_string(i / scene.width) +
                         "," + std::to_string(i % scene.width) + ") outside " + group_name(g) + " group of " +
                         std::to_string(limit) + " categories");
      }
    }
  }
  std::unordered_map<std::uint16_t, std::uint16_t> instance_class;
  for (std::size_t i = 0; i < n; ++i) {
    if (scene.instance[i] == 0) continue;
    auto [it, fresh] = instance_class.emplace(scene.instance[i], scene.panoptic[i]);
    if (!fresh && it->second != scene.panoptic[i]) {
      throw RangeError("scene: instance " + std::to_string(scene.instance[i]) + " carries classes " +
                       std::to_string(it->second) + " and " + std::to_string(scene.panoptic[i]));
    }
  }
}

std::vector<std::uint8_t> extract_edges(const SceneMap& scene, const SceneSchema& schema) {
  validate(scene, schema);
  const int h = scene.height, w = scene.width;
  std::vector<std::uint8_t> edges(scene.pixels(), 0);
  auto differs = [&](std::size_t a, std::size_t b) {
    return scene.panoptic[a] != scene.panoptic[b] || scene.instance[a] != scene.instance[b] ||
           scene.human[a] != scene.human[b] || scene.face[a] != scene.face[b];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = scene.index(y, x);
      if (x + 1 < w && differs(p, p + 1)) edges[p] = edges[p + 1] = 1;
      if (y + 1 < h && differs(p, p + static_cast<std::size_t>(w))) edges[p] = edges[p + static_cast<std::size_t>(w)] = 1;
    }
  }
  return edges;
}

void append_channels(const SceneMap& scene, const SceneSchema& schema, std::vector<double>& out) {
  const auto edges = extract_edges(scene, schema);
  const std::size_t n = scene.pixels();
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(schema.channels()) * n, 0.0);
  for (Group g : {Group::panoptic, Group::human, Group::face}) {
    const auto& grid = scene.grid(g);
    const auto off = static_cast<std::size_t>(schema.offset(g));
    for (std::size_t i = 0; i < n; ++i) {
      if (grid[i] != kNullClass) out[base + (off + grid[i]) * n + i] = 1.0;
    }
  }
  const std::size_t edge = base + static_cast<std::size_t>(schema.edge_channel()) * n;
  for (std::size_t i = 0; i < n; ++i) out[edge + i] = edges[i];
}

ndgrad::Tensor encode_channels(const SceneMap& scene, const SceneSchema& schema) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(schema.channels()) * scene.pixels());
  append_channels(scene, schema, values);
  return ndgrad::Tensor::from_values(
      {static_cast<std::size_t>(schema.channels()), static_cast<std::size_t>(scene.height),
       static_cast<std::size_t>(scene.width)},
      std::move(values));
}

double category_weight(int cat, double boost, int first, int last, int channels) {
  if (cat < 0 || cat >= channels - 1) {
    throw RangeError("category_weight: category " + std::to_string(cat) + " outside [0," + std::to_string(channels - 1) + ")");
  }
  return (cat >= first && cat <= last) ? boost : 1.0;
}

CategoryWeights::CategoryWeights(const SceneSchema& schema, double boost) : boost_(boost) {
  schema.validate();
  if (!(boost >= 1.0)) throw RangeError("category weights: boost must be >= 1");
  const int m = schema.channels();
  weights_.resize(static_cast<std::size_t>(m));
  for (int c = 0; c + 1 < m; ++c) {
    weights_[static_cast<std::size_t>(c)] = category_weight(c, boost, schema.face_part_first, schema.face_part_last, m);
  }
  weights_.back() = 1.0;
}

namespace {

void check_class(const SceneSchema& schema, Group g, std::uint16_t cls, const char* what) {
  if (cls >= schema.size(g)) {
    throw RangeError(std::string("edit_scene: ") + what + " class " + std::to_string(cls) + " outside " +
                     group_name(g) + " group of " + std::to_string(schema.size(g)) + " categories");
  }
}

}  // namespace

SceneMap edit_scene(const SceneMap& scene, std::span<const SceneEdit> edits, const SceneSchema& schema) {
  validate(scene, schema);
  SceneMap out = scene;
  for (const auto& edit : edits) {
    if (const auto* r = std::get_if<ReplaceClass>(&edit)) {
      check_class(schema, r->group, r->from, "source");
      check_class(schema, r->group, r->to, "target");
      auto& grid = out.grid(r->group);
      std::replace(grid.begin(), grid.end(), r->from, r->to);
    } else {
      const auto& p = std::get<PasteSketch>(edit);
      check_class(schema, p.group, p.cls, "sketch");
      if (p.h <= 0 || p.w <= 0 || p.y < 0 || p.x < 0 || p.y + p.h > out.height || p.x + p.w > out.width) {
        throw RangeError("edit_scene: sketch rect (" + std::to_string(p.y) + "," + std::to_string(p.x) + "," +
                         std::to_string(p.h) + "," + std::to_string(p.w) + ") outside " + std::to_string(out.height) +
                         "x" + std::to_string(out.width) + " scene");
      }
      std::uint16_t fresh = 0;
      if (p.group == Group::panoptic) {
        fresh = static_cast<std::uint16_t>(*std::max_element(out.instance.begin(), out.instance.end()) + 1);
      }
      for (int y = p.y; y < p.y + p.h; ++y) {
        for (int x = p.x; x < p.x + p.w; ++x) {
          const std::size_t i = out.index(y, x);
          out.grid(p.group)[i] = p.cls;
          if (p.group == Group::panoptic) {
            out.instance[i] = fresh;
            out.human[i] = kNullClass;
            out.face[i] = kNullClass;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace mas::scene
