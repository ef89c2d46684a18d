#include "mas/harness/synth.hpp"

#include <algorithm>
#include <sstream>

#include "mas/error.hpp"

namespace mas::harness {

namespace {

constexpr std::uint16_t kObjectInstance = 1, kPersonInstance = 2;
constexpr int kSlots[3] = {7, 16, 25};  // column centres on the 32-wide canvas

const Rgb kSkyRgb{165, 200, 235}, kGroundRgb{125, 95, 65}, kSeaRgb{35, 105, 125};
const Rgb kHairRgb{60, 40, 25}, kTorsoRgb{128, 128, 128};
const Rgb kFaceRgb[5] = {{70, 45, 30}, {245, 245, 245}, {215, 150, 120}, {150, 70, 90}, {90, 20, 30}};

template <typename E>
E pick(const std::vector<E>& v, CounterRng& rng) {
  return v[rng.below(v.size())];
}

int jitter(CounterRng& rng, int bound) {
  return bound <= 0 ? 0 : static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * bound + 1))) - bound;
}

Rgb shifted(Rgb c, CounterRng& rng, int bound) {
  for (auto& v : c) v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + jitter(rng, bound), 0, 255));
  return c;
}

}  // namespace

void SynthSpec::validate() const {
  if (canvas != 32) throw RangeError("synth: only the 32x32 canvas layout is defined");
  if (image_scale < 1 || image_scale > 4) throw RangeError("synth: image scale must be in [1,4]");
  if (colors.empty() || shapes.empty()) throw RangeError("synth: empty shape or colour inventory");
  if (!(person_probability >= 0.0 && person_probability <= 1.0)) throw RangeError("synth: bad person probability");
}

const char* color_word(Color c) {
  switch (c) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
    case Color::yellow: return "yellow";
  }
  return "?";
}

const char* shape_word(Shape s) {
  switch (s) {
    case Shape::circle: return "circle";
    case Shape::square: return "square";
    case Shape::bar: return "bar";
  }
  return "?";
}

const char* position_word(Position p) {
  switch (p) {
    case Position::left: return "left";
    case Position::center: return "center";
    case Position::right: return "right";
  }
  return "?";
}

const char* backdrop_word(Backdrop b) { return b == Backdrop::ground ? "ground" : "sea"; }

Rgb palette(Color c) {
  switch (c) {
    case Color::red: return {220, 40, 40};
    case Color::green: return {40, 200, 40};
    case Color::blue: return {40, 60, 230};
    case Color::yellow: return {230, 220, 40};
  }
  return {0, 0, 0};
}

std::string caption_of(const Layout& l) {
  std::string s = std::string(color_word(l.color)) + " " + shape_word(l.shape) + " " + position_word(l.position) +
                  " over " + backdrop_word(l.backdrop);
  if (l.person) s += std::string(" with person ") + position_word(*l.person);
  return s;
}

namespace {

template <typename E, std::size_t N>
E parse_word(const std::string& w, const E (&values)[N], const char* (*name)(E), std::string_view caption) {
  for (E v : values) {
    if (w == name(v)) return v;
  }
  throw FormatError("caption '" + std::string(caption) + "': unexpected word '" + w + "'");
}

}  // namespace

Layout parse_caption(std::string_view caption) {
  std::istringstream in{std::string(caption)};
  std::vector<std::string> w;
  for (std::string t; in >> t;) w.push_back(t);
  auto fail = [&] { throw FormatError("caption '" + std::string(caption) + "' does not follow the grammar"); };
  if (w.size() != 5 && w.size() != 8) fail();
  if (w[3] != "over") fail();
  static constexpr Color kColors[] = {Color::red, Color::green, Color::blue, Color::yellow};
  static constexpr Shape kShapes[] = {Shape::circle, Shape::square, Shape::bar};
  static constexpr Position kPositions[] = {Position::left, Position::center, Position::right};
  static constexpr Backdrop kBackdrops[] = {Backdrop::ground, Backdrop::sea};
  Layout l;
  l.color = parse_word(w[0], kColors, color_word, caption);
  l.shape = parse_word(w[1], kShapes, shape_word, caption);
  l.position = parse_word(w[2], kPositions, position_word, caption);
  l.backdrop = parse_word(w[4], kBackdrops, backdrop_word, caption);
  if (w.size() == 8) {
    if (w[5] != "with" || w[6] != "person") fail();
    l.person = parse_word(w[7], kPositions, position_word, caption);
  }
  // Single spaces only, so parsing stays the exact inverse of caption_of.
  if (caption_of(l) != caption) fail();
  return l;
}

Sample render(const Layout& layout, const SynthSpec& spec, CounterRng& rng) {
  spec.validate();
  const int n = spec.canvas;
  scene::SceneMap sc(n, n);
  std::vector<Rgb> base(sc.pixels());
  auto set = [&](int y, int x, std::uint16_t pan, std::uint16_t inst, Rgb c) {
    if (y < 0 || x < 0 || y >= n || x >= n) return;
    const std::size_t i = sc.index(y, x);
    sc.panoptic[i] = pan;
    sc.instance[i] = inst;
    base[i] = c;
  };

  const int horizon = 18 + static_cast<int>(rng.below(3));
  const Rgb sky = shifted(kSkyRgb, rng, spec.color_jitter);
  const Rgb below = shifted(layout.backdrop == Backdrop::ground ? kGroundRgb : kSeaRgb, rng, spec.color_jitter);
  const std::uint16_t below_cls = layout.backdrop == Backdrop::ground ? kGround : kSea;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) set(y, x, y < horizon ? kSky : below_cls, 0, y < horizon ? sky : below);
  }

  const Rgb obj = shifted(palette(layout.color), rng, spec.color_jitter);
  const int cy = 8 + jitter(rng, 1);
  const int cx = kSlots[static_cast<int>(layout.position)] + jitter(rng, 1);
  switch (layout.shape) {
    case Shape::circle: {
      const int r = 4 + static_cast<int>(rng.below(2));
      for (int y = cy - r; y <= cy + r; ++y) {
        for (int x = cx - r; x <= cx + r; ++x) {
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r + 1) set(y, x, kCircle, kObjectInstance, obj);
        }
      }
      break;
    }
    case Shape::square: {
      const int a = 8 + static_cast<int>(rng.below(3));
      for (int y = cy - a / 2; y < cy - a / 2 + a; ++y) {
        for (int x = cx - a / 2; x < cx - a / 2 + a; ++x) set(y, x, kSquare, kObjectInstance, obj);
      }
      break;
    }
    case Shape::bar: {
      const int w = 13 + static_cast<int>(rng.below(2)), h = 4 + static_cast<int>(rng.below(2));
      for (int y = cy - h / 2; y < cy - h / 2 + h; ++y) {
        for (int x = cx - w / 2; x < cx - w / 2 + w; ++x) set(y, x, kBar, kObjectInstance, obj);
      }
      break;
    }
  }

  if (layout.person) {
    const int x0 = kSlots[static_cast<int>(*layout.person)] - 4, y0 = 21;
    const Rgb torso = shifted(kTorsoRgb, rng, spec.color_jitter);
    for (int x = x0; x < x0 + 8; ++x) {
      set(y0 - 1, x, kPerson, kPersonInstance, kHairRgb);
      sc.human[sc.index(y0 - 1, x)] = kHair;
    }
    static constexpr std::uint16_t kBand[8] = {kEyebrows, kEyebrows, kEyes, kEyes, kNose, kNose, kOuterMouth, kInnerMouth};
    for (int dy = 0; dy < 8; ++dy) {
      for (int x = x0; x < x0 + 8; ++x) {
        set(y0 + dy, x, kPerson, kPersonInstance, kFaceRgb[kBand[dy]]);
        sc.human[sc.index(y0 + dy, x)] = kHead;
        sc.face[sc.index(y0 + dy, x)] = kBand[dy];
      }
    }
    for (int y = y0 + 8; y < n; ++y) {
      for (int x = x0 - 1; x < x0 + 9; ++x) {
        if (x < 0 || x >= n) continue;
        set(y, x, kPerson, kPersonInstance, torso);
        sc.human[sc.index(y, x)] = kTorso;
      }
    }
  }

  const int s = spec.image_scale;
  io::Image im(n * s, n * s);
  for (int y = 0; y < n * s; ++y) {
    for (int x = 0; x < n * s; ++x) {
      const Rgb& c = base[sc.index(y / s, x / s)];
      auto* p = im.pixel(y, x);
      for (int k = 0; k < 3; ++k) {
        p[k] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(c[static_cast<std::size_t>(k)]) +
                                                        jitter(rng, spec.pixel_noise),
                                                    0, 255));
      }
    }
  }
  return {std::move(im), std::move(sc), caption_of(layout), layout};
}

std::vector<Sample> synth_generate(const SynthSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw RangeError("synth_generate: n must be >= 1");
  const CounterRng root(seed);
  std::vector<Sample> out;
  out.reserve(n);
  static const std::vector<Position> kPositions = {Position::left, Position::center, Position::right};
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.fork(i);
    Layout l;
    l.color = pick(spec.colors, rng);
    l.shape = pick(spec.shapes, rng);
    l.position = pick(kPositions, rng);
    l.backdrop = rng.bernoulli(0.5) ? Backdrop::sea : Backdrop::ground;
    if (rng.bernoulli(spec.person_probability)) l.person = pick(kPositions, rng);
    out.push_back(render(l, spec, rng));
  }
  return out;
}

}  // namespace mas::harness
