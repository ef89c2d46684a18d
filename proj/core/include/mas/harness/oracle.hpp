#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mas/harness/synth.hpp"

namespace mas::harness {

/// What the oracle reads back from pixels alone.
struct Reading {
  std::optional<Color> color;
  std::optional<Shape> shape;
  std::optional<Position> position;
  std::optional<Backdrop> backdrop;
};

struct OracleResult {
  bool aligned = false;
  Reading reading;
  std::string detail;
};

/// Inverts the renderer: the dominant palette colour in the sky band gives
/// colour, its bounding box gives shape (aspect >= 2: bar; fill > 0.85:
/// square; else circle), its centroid gives position, and the bottom rows
/// give the backdrop. Aligned iff all four agree with the caption.
OracleResult oracle_check(const io::Image& image, std::string_view caption, const SynthSpec& spec);

Reading read_image(const io::Image& image);

/// Fraction of aligned (image, caption) pairs; 0 for empty input.
double alignment_accuracy(std::span<const io::Image> images, std::span<const std::string> captions,
                          const SynthSpec& spec);

}  // namespace mas::harness
