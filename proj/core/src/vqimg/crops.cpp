#include <algorithm>
#include <map>

#include "mas/error.hpp"
#include "mas/vqimg/vqimg.hpp"

namespace mas::vqimg {

namespace {

struct Extent {
  int y0, x0, y1, x1;  // inclusive
  void include(int y, int x) {
    y0 = std::min(y0, y);
    x0 = std::min(x0, x);
    y1 = std::max(y1, y);
    x1 = std::max(x1, x);
  }
  Box box() const {
    return {static_cast<std::size_t>(y0), static_cast<std::size_t>(x0), static_cast<std::size_t>(y1 - y0 + 1),
            static_cast<std::size_t>(x1 - x0 + 1)};
  }
};

CropSet largest(std::vector<Box> boxes, std::size_t k, CropRole role) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  if (boxes.size() > k) boxes.resize(k);
  CropSet out;
  for (const auto& b : boxes) out.push_back({b, role, 0});
  return out;
}

}  // namespace

CropSet locate_faces(const scene::SceneMap& scene, std::size_t k_f) {
  const int h = scene.height, w = scene.width;
  std::vector<char> seen(scene.pixels(), 0);
  std::vector<Box> boxes;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = scene.index(y, x);
      if (seen[p] || scene.face[p] == scene::kNullClass) continue;
      Extent e{y, x, y, x};
      seen[p] = 1;
      stack.assign(1, {y, x});
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        e.include(cy, cx);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          const std::size_t q = scene.index(ny, nx);
          if (seen[q] || scene.face[q] == scene::kNullClass) continue;
          seen[q] = 1;
          stack.emplace_back(ny, nx);
        }
      }
      boxes.push_back(e.box());
    }
  }
  return largest(std::move(boxes), k_f, CropRole::face);
}

CropSet locate_objects(const scene::SceneMap& scene, std::size_t k_o) {
  std::map<std::uint16_t, Extent> by_instance;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const auto id = scene.instance[scene.index(y, x)];
      if (id == 0) continue;
      auto [it, fresh] = by_instance.try_emplace(id, Extent{y, x, y, x});
      if (!fresh) it->second.include(y, x);
    }
  }
  std::vector<Box> boxes;
  for (const auto& [id, e] : by_instance) boxes.push_back(e.box());
  return largest(std::move(boxes), k_o, CropRole::object);
}

CropSet scale_crops(CropSet crops, std::size_t factor, std::size_t image_index) {
  if (factor == 0) throw RangeError("scale_crops: zero factor");
  for (auto& c : crops) {
    c.box = {c.box.y * factor, c.box.x * factor, c.box.h * factor, c.box.w * factor};
    c.image = image_index;
  }
  return crops;
}

}  // namespace mas::vqimg
