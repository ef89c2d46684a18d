#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mas/io/image.hpp"
#include "mas/rng.hpp"
#include "mas/scene/scene.hpp"

namespace mas::harness {

// Panoptic classes of the synthetic world.
inline constexpr std::uint16_t kSky = 0, kGround = 1, kSea = 2, kCircle = 3, kSquare = 4, kBar = 5, kPerson = 6;
// Human-parsing classes.
inline constexpr std::uint16_t kHead = 0, kTorso = 1, kHair = 2;
// Face classes, all counted as face parts.
inline constexpr std::uint16_t kEyebrows = 0, kEyes = 1, kNose = 2, kOuterMouth = 3, kInnerMouth = 4;

enum class Color { red, green, blue, yellow };
enum class Shape { circle, square, bar };
enum class Position { left, center, right };
enum class Backdrop { ground, sea };

using Rgb = std::array<std::uint8_t, 3>;

struct SynthSpec {
  int canvas = 32;
  /// Image side is canvas * image_scale (2 for the doubled-resolution tokenizer).
  int image_scale = 1;
  double person_probability = 0.5;
  std::vector<Color> colors = {Color::red, Color::green, Color::blue, Color::yellow};
  std::vector<Shape> shapes = {Shape::circle, Shape::square, Shape::bar};
  /// Per-image colour offset bound and per-pixel noise bound (8-bit units).
  int color_jitter = 12;
  int pixel_noise = 4;
  void validate() const;
};

/// Caption content. The caption grammar is
///   <color> <shape> <position> over <ground|sea> [with person <position>]
struct Layout {
  Color color = Color::red;
  Shape shape = Shape::circle;
  Position position = Position::center;
  Backdrop backdrop = Backdrop::ground;
  std::optional<Position> person;
  friend bool operator==(const Layout&, const Layout&) = default;
};

struct Sample {
  io::Image image;
  scene::SceneMap scene;
  std::string caption;
  Layout layout;
};

const char* color_word(Color c);
const char* shape_word(Shape s);
const char* position_word(Position p);
const char* backdrop_word(Backdrop b);
Rgb palette(Color c);

std::string caption_of(const Layout& layout);
/// Inverse of caption_of; throws FormatError on anything outside the grammar.
Layout parse_caption(std::string_view caption);

/// Scene and image for one layout; `rng` supplies the geometric and colour jitter.
Sample render(const Layout& layout, const SynthSpec& spec, CounterRng& rng);

/// n samples; sample i draws from rng stream (seed, i) so corpora are prefix-stable.
std::vector<Sample> synth_generate(const SynthSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace mas::harness
