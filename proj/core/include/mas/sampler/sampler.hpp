#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mas/io/image.hpp"
#include "mas/rng.hpp"
#include "mas/sbt/sbt.hpp"
#include "mas/scene/scene.hpp"
#include "mas/text/bpe.hpp"
#include "mas/vqimg/vqimg.hpp"
#include "mas/vqseg/vqseg.hpp"

namespace mas::sampler {

struct GuidedLogits {
  std::span<const double> cond;
  std::span<const double> uncond;
  double alpha_c = 5.0;
};

/// uncond + alpha_c * (cond - uncond), element-wise.
std::vector<double> guide(const GuidedLogits& g);

/// Keeps the ceil(top_fraction * V) largest finite logits (ties to the lower
/// index), applies softmax over them and draws one index with a single
/// uniform variate from `rng`.
int sample_token(std::span<const double> logits, CounterRng& rng, double top_fraction);

enum class SceneMode { free_scene, fixed_scene };

struct SampleConfig {
  double alpha_c = 5.0;
  std::uint64_t seed = 0;
  SceneMode mode = SceneMode::free_scene;
  double top_fraction = 0.5;
  void validate() const;
};

struct TokenStreams {
  std::vector<int> scene_tokens;
  std::vector<int> image_tokens;
  /// Complete packed streams (text + scene + image) as fed to each decoder.
  std::vector<int> cond_stream;
  std::vector<int> uncond_stream;
};

/// Dual-stream guided decoding. `forced_scene`, when given, is teacher-forced
/// into both streams instead of sampled.
TokenStreams generate_tokens(const sbt::SbtModel& model, std::span<const int> text_tokens,
                             std::optional<std::span<const int>> forced_scene, const SampleConfig& cfg);

/// Single conditional stream with the same sampling rule and RNG schedule;
/// alpha_c is ignored.
TokenStreams sample_conditional(const sbt::SbtModel& model, std::span<const int> text_tokens,
                                std::optional<std::span<const int>> forced_scene, const SampleConfig& cfg);

struct ModelBundle {
  const text::BpeVocab& vocab;
  const vqseg::VqSegModel& vqseg;
  const vqimg::VqImgModel& vqimg;
  const sbt::SbtModel& sbt;
  int scene_grid_h = 8, scene_grid_w = 8;
  int image_grid_h = 8, image_grid_w = 8;
  /// Throws "checkpoint/config mismatch" if vocabularies or grids disagree with the transformer.
  void validate() const;
};

struct Generation {
  TokenStreams tokens;
  scene::SceneMap scene;
  io::Image image;
};

/// Text-only generation (free scene) or scene-conditioned generation (fixed
/// scene; `scene` required).
Generation generate(std::string_view text, const scene::SceneMap* scene, const ModelBundle& models,
                    const SampleConfig& cfg);

}  // namespace mas::sampler
