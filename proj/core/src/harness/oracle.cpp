#include "mas/harness/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mas/error.hpp"

namespace mas::harness {

namespace {

constexpr double kColorRadius = 70.0;
constexpr double kBackdropRadius = 60.0;
constexpr Color kColors[] = {Color::red, Color::green, Color::blue, Color::yellow};

double dist(const std::uint8_t* p, const Rgb& c) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = static_cast<double>(p[k]) - static_cast<double>(c[static_cast<std::size_t>(k)]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

Reading read_image(const io::Image& image) {
  Reading r;
  const int h = image.height, w = image.width;
  if (h <= 0 || w <= 0) return r;
  // Objects live above the highest possible horizon (row 18 of 32).
  const int sky_rows = h * 17 / 32;
  std::array<std::size_t, 4> count{};
  std::vector<int> label(static_cast<std::size_t>(sky_rows * w), -1);
  for (int y = 0; y < sky_rows; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = -1;
      double best_d = kColorRadius;
      for (int c = 0; c < 4; ++c) {
        const double d = dist(image.pixel(y, x), palette(kColors[c]));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best >= 0) {
        ++count[static_cast<std::size_t>(best)];
        label[static_cast<std::size_t>(y * w + x)] = best;
      }
    }
  }
  const auto dom = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  if (count[static_cast<std::size_t>(dom)] > 0) {
    r.color = kColors[dom];
    int y0 = h, y1 = -1, x0 = w, x1 = -1;
    double sx = 0.0;
    for (int y = 0; y < sky_rows; ++y) {
      for (int x = 0; x < w; ++x) {
        if (label[static_cast<std::size_t>(y * w + x)] != dom) continue;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        sx += x + 0.5;
      }
    }
    const double n = static_cast<double>(count[static_cast<std::size_t>(dom)]);
    const double bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    const double aspect = std::max(bh, bw) / std::min(bh, bw);
    const double fill = n / (bh * bw);
    r.shape = aspect >= 2.0 ? Shape::bar : (fill > 0.85 ? Shape::square : Shape::circle);
    const double cx = sx / n * 32.0 / static_cast<double>(w);
    r.position = cx < 11.5 ? Position::left : (cx > 20.5 ? Position::right : Position::center);
  }
  std::size_t ground = 0, sea = 0;
  for (int y = h * 29 / 32; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dg = dist(image.pixel(y, x), {125, 95, 65}), ds = dist(image.pixel(y, x), {35, 105, 125});
      if (std::min(dg, ds) >= kBackdropRadius) continue;
      (dg < ds ? ground : sea) += 1;
    }
  }
  if (ground + sea > 0) r.backdrop = ground >= sea ? Backdrop::ground : Backdrop::sea;
  return r;
}

OracleResult oracle_check(const io::Image& image, std::string_view caption, const SynthSpec& spec) {
  spec.validate();
  const Layout want = parse_caption(caption);
  OracleResult out;
  out.reading = read_image(image);
  const auto& r = out.reading;
  auto word = [](auto opt, auto name) { return opt ? std::string(name(*opt)) : std::string("none"); };
  const bool color = r.color == want.color, shape = r.shape == want.shape, pos = r.position == want.position,
             back = r.backdrop == want.backdrop;
  out.aligned = color && shape && pos && back;
  out.detail = "color " + word(r.color, color_word) + (color ? " ok" : " MISMATCH") + ", shape " +
               word(r.shape, shape_word) + (shape ? " ok" : " MISMATCH") + ", position " +
               word(r.position, position_word) + (pos ? " ok" : " MISMATCH") + ", backdrop " +
               word(r.backdrop, backdrop_word) + (back ? " ok" : " MISMATCH");
  return out;
}

double alignment_accuracy(std::span<const io::Image> images, std::span<const std::string> captions,
                          const SynthSpec& spec) {
  if (images.size() != captions.size()) throw ShapeError("alignment_accuracy: image/caption count mismatch");
  if (images.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < images.size(); ++i) ok += oracle_check(images[i], captions[i], spec).aligned;
  return static_cast<double>(ok) / static_cast<double>(images.size());
}

}  // namespace mas::harness
