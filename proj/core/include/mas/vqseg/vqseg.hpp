#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mas/ndgrad/adam.hpp"
#include "mas/nn.hpp"
#include "mas/scene/scene.hpp"
#include "mas/vq/codebook.hpp"

namespace mas::vqseg {

using ndgrad::Tensor;

struct VqSegConfig {
  std::size_t hidden = 32;
  std::size_t hidden_deep = 64;
  std::size_t latent_dim = 4;
  std::size_t codebook_size = 512;
  double beta_commit = 0.25;
  std::uint64_t seed = 1;
};

/// Row-major grid of codebook indices.
struct TokenGrid {
  int height = 0;
  int width = 0;
  std::vector<int> tokens;
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

/// Scene tokenizer: two stride-2 convolutions down to a latent grid, a
/// codebook, and a mirrored decoder producing m per-channel logits.
class VqSegModel {
 public:
  static constexpr int kDownsample = 4;

  VqSegModel(const scene::SceneSchema& schema, const VqSegConfig& config);
  VqSegModel(const VqSegModel&) = delete;
  VqSegModel& operator=(const VqSegModel&) = delete;

  /// [B, m, h, w] -> [B, latent, h/4, w/4]
  Tensor encode_latents(const Tensor& channels) const;
  /// [B, latent, h', w'] -> [B, m, 4h', 4w'] logits
  Tensor decode_logits(const Tensor& latents) const;

  const scene::SceneSchema& schema() const { return schema_; }
  const VqSegConfig& config() const { return config_; }
  const vq::Codebook& codebook() const { return book_; }
  vq::Codebook& codebook() { return book_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  scene::SceneSchema schema_;
  VqSegConfig config_;
  nn::ParamStore params_;
  nn::Conv enc_in_, enc_down1_, enc_down2_, enc_out_;
  nn::Conv dec_in_, dec_up1_, dec_up2_, dec_out_;
  vq::Codebook book_;
};

/// Stacks scenes into a [B, m, h, w] tensor.
Tensor stack_scenes(std::span<const scene::SceneMap> scenes, const scene::SceneSchema& schema);

/// [B, D, h, w] -> [B*h*w, D] rows in (b, y, x) order, and back.
Tensor to_rows(const Tensor& grid);
Tensor from_rows(const Tensor& rows, std::size_t batch, std::size_t height, std::size_t width);

/// Token grid of one [m, h, w] scene encoding.
TokenGrid seg_encode(const Tensor& scene_channels, const VqSegModel& model);
std::vector<TokenGrid> seg_encode(std::span<const scene::SceneMap> scenes, const VqSegModel& model);

/// [m, h, w] logits for a token grid.
Tensor seg_decode(const TokenGrid& tokens, const VqSegModel& model);

/// Per-group hard labels from [m, h, w] logits: the argmax of each group's
/// span (lowest channel on ties), or null when no channel in the span has
/// probability >= 0.5. Instance IDs are not recovered (all 0).
scene::SceneMap hard_reconstruction(const Tensor& logits, const scene::SceneSchema& schema);
/// Edge channel thresholded at sigmoid 0.5.
std::vector<std::uint8_t> decoded_edges(const Tensor& logits, const scene::SceneSchema& schema);

/// Mean over elements of alpha_cat(channel) * BCE(sigmoid(logits), target).
/// Shapes [.., m, h, w]; throws on non-finite logits.
Tensor wbce_loss(const Tensor& target, const Tensor& logits, const scene::CategoryWeights& weights);

struct SegLossReport {
  double total = 0.0;
  double wbce = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

/// One optimizer over a VqSegModel.
class SegTrainer {
 public:
  SegTrainer(VqSegModel& model, const ndgrad::AdamConfig& adam, double face_boost);

  /// Data-dependent codebook initialisation from the latents of `scenes`.
  void seed_codebook(std::span<const scene::SceneMap> scenes, CounterRng& rng);
  /// One Adam step on wbce + codebook + commitment.
  SegLossReport step(std::span<const scene::SceneMap> batch);
  long steps_taken() const { return step_; }

 private:
  VqSegModel& model_;
  ndgrad::Adam adam_;
  scene::CategoryWeights weights_;
  long step_ = 0;
};

/// Fraction of ground-truth face-part pixels whose reconstructed face class
/// (after encode/decode) matches. Returns 1 when no face-part pixel exists.
double face_part_recall(std::span<const scene::SceneMap> scenes, const VqSegModel& model);
/// Fraction of (pixel, group) labels reproduced exactly by encode/decode.
double label_accuracy(std::span<const scene::SceneMap> scenes, const VqSegModel& model);

}  // namespace mas::vqseg
