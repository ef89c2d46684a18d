#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "mas/ndgrad/tensor.hpp"

namespace mas::io {

/// 8-bit interleaved RGB raster.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, 0) {}
  std::uint8_t* pixel(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// "IMGB", u16 h, u16 w (little-endian), then RGB bytes row-major.
void write_image(std::ostream& os, const Image& image);
Image read_image(std::istream& is);
void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);

/// [3, h, w] planar tensor with values in [-1, 1].
ndgrad::Tensor to_tensor(const Image& image);
/// Appends the planar [-1, 1] values of `image` to `out`.
void append_planar(const Image& image, std::vector<double>& out);
/// Inverse of to_tensor for a [3, h, w] (or [1, 3, h, w]) tensor; clamps.
Image from_planar(std::span<const double> values, int height, int width);

}  // namespace mas::io
