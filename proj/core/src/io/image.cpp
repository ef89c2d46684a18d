#include "mas/io/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mas/io/binary.hpp"

namespace mas::io {

void write_image(std::ostream& os, const Image& image) {
  if (image.height <= 0 || image.width <= 0 || image.height > 0xffff || image.width > 0xffff) {
    throw FormatError("IMGB: extents do not fit u16");
  }
  if (image.rgb.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw FormatError("IMGB: pixel buffer size mismatch");
  }
  os.write("IMGB", 4);
  put_u16(os, static_cast<std::uint16_t>(image.height));
  put_u16(os, static_cast<std::uint16_t>(image.width));
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw FormatError("IMGB: write failed");
}

Image read_image(std::istream& is) {
  expect_magic(is, "IMGB", "IMGB");
  const int h = get_u16(is, "IMGB height");
  const int w = get_u16(is, "IMGB width");
  if (h == 0 || w == 0) throw FormatError("IMGB: empty image");
  Image image(h, w);
  read_exact(is, image.rgb.data(), image.rgb.size(), "IMGB pixels");
  return image;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_image(os, image);
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_image(is);
}

void append_planar(const Image& image, std::vector<double>& out) {
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  const std::size_t base = out.size();
  out.resize(base + 3 * n);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) out[base + c * n + i] = image.rgb[i * 3 + c] / 127.5 - 1.0;
  }
}

ndgrad::Tensor to_tensor(const Image& image) {
  std::vector<double> v;
  append_planar(image, v);
  return ndgrad::Tensor::from_values({3, static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)},
                                     std::move(v));
}

Image from_planar(std::span<const double> values, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (values.size() != 3 * n) throw FormatError("from_planar: expected " + std::to_string(3 * n) + " values");
  Image image(height, width);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::clamp((values[c * n + i] + 1.0) * 127.5, 0.0, 255.0);
      image.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return image;
}

}  // namespace mas::io
