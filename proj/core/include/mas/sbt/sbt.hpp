#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mas/ndgrad/adam.hpp"
#include "mas/nn.hpp"

namespace mas::sbt {

using ndgrad::Tensor;

enum class Segment { text = 0, scene = 1, image = 2 };

struct SbtConfig {
  std::size_t text_len = 16;
  std::size_t scene_len = 64;
  std::size_t image_len = 64;
  std::size_t text_vocab = 512;
  std::size_t scene_vocab = 512;
  std::size_t image_vocab = 512;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t dim = 128;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 3;

  /// 48 layers, 48 heads, width 2560 over 256 + 256 + 1024 positions.
  static SbtConfig full_scale();

  std::size_t length() const { return text_len + scene_len + image_len; }
  std::size_t vocab(Segment s) const;
  std::size_t segment_start(Segment s) const;
  std::size_t segment_len(Segment s) const;
  Segment segment_of(std::size_t position) const;
  /// Offset of the segment's IDs inside the shared embedding table.
  std::size_t unified_offset(Segment s) const;
  void validate() const;
};

/// Packed [text | scene | image] tokens; each token is local to its segment's
/// vocabulary.
struct TokenSequence {
  std::vector<int> tokens;
  std::size_t n_x = 0, n_y = 0, n_z = 0;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

TokenSequence pack(std::span<const int> text, std::span<const int> scene, std::span<const int> image,
                   const SbtConfig& config);

struct Unpacked {
  std::vector<int> text, scene, image;
  friend bool operator==(const Unpacked&, const Unpacked&) = default;
};
Unpacked unpack(const TokenSequence& seq);

/// Throws if boundaries differ from the config or a token is outside its vocabulary.
void validate_sequence(const TokenSequence& seq, const SbtConfig& config);

/// Next-token logits grouped by the segment being predicted:
///   text  [B, n_x - 1, V_x] from positions 0 .. n_x - 2
///   scene [B, n_y, V_y]     from positions n_x - 1 .. n_x + n_y - 2
///   image [B, n_z, V_z]     from positions n_x + n_y - 1 .. T - 2
struct SegmentLogits {
  Tensor text, scene, image;
};

struct Block {
  nn::LayerNorm ln1, ln2;
  nn::Linear qkv, proj, fc1, fc2;
};

/// Decoder-only pre-norm transformer with token, position and segment
/// embeddings and one output head per segment vocabulary.
class SbtModel {
 public:
  explicit SbtModel(const SbtConfig& config);
  SbtModel(const SbtModel&) = delete;
  SbtModel& operator=(const SbtModel&) = delete;

  SegmentLogits forward_logits(std::span<const TokenSequence> batch) const;

  const SbtConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  const Tensor& token_embedding() const { return tok_; }
  const Tensor& position_embedding() const { return pos_; }
  const Tensor& segment_embedding() const { return seg_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const nn::LayerNorm& final_norm() const { return ln_f_; }
  const nn::Linear& head(Segment s) const { return heads_[static_cast<std::size_t>(s)]; }

 private:
  SbtConfig config_;
  nn::ParamStore params_;
  Tensor tok_, pos_, seg_;
  std::vector<Block> blocks_;
  nn::LayerNorm ln_f_;
  std::vector<nn::Linear> heads_;
};

/// Per-position logits of one sequence (positions 0 .. T-2), each as wide as
/// the vocabulary of the following position.
std::vector<std::vector<double>> position_logits(const SbtModel& model, const TokenSequence& seq);

struct TrainConfig {
  ndgrad::AdamConfig adam{};
  double lr_after_switch = 1.5e-4;
  long switch_step = 0;  // 0 keeps the initial rate throughout
  double text_weight = 1.0;
  double scene_weight = 1.0;
  double image_weight = 7.0;
  double p_cf = 0.2;
  void validate() const;
};

enum class CfMode { off, on };

struct SbtLoss {
  Tensor total, text, scene, image;
};

/// Per-segment mean cross-entropies (PAD text targets masked) and their
/// weighted sum.
SbtLoss sbt_loss(const SbtModel& model, std::span<const TokenSequence> batch, const TrainConfig& cfg);

struct SbtLossReport {
  double total = 0.0;
  double text = 0.0;
  double scene = 0.0;
  double image = 0.0;
  std::size_t unconditional = 0;  // samples whose text was replaced by PAD
};

class SbtTrainer {
 public:
  SbtTrainer(SbtModel& model, TrainConfig cfg, std::uint64_t seed);

  /// With CfMode::on each sample's text becomes all-PAD with probability p_cf.
  SbtLossReport step(std::span<const TokenSequence> batch, CfMode cf_mode);
  long steps_taken() const { return step_; }
  double current_lr() const;

 private:
  SbtModel& model_;
  TrainConfig cfg_;
  ndgrad::Adam adam_;
  CounterRng cf_rng_;
  long step_ = 0;
};

/// Token-at-a-time inference with a key/value cache. Arithmetic follows the
/// batched forward pass up to floating-point reassociation.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const SbtModel& model);

  /// Appends the next token (local to the segment at the current position)
  /// and returns logits for the following position, or an empty span after
  /// the last position.
  std::span<const double> push(int token);
  std::size_t position() const { return pos_; }
  void reset();

 private:
  const SbtModel& model_;
  std::size_t pos_ = 0;
  std::vector<ndgrad::Buffer> keys_, values_;  // per layer, [T, D]
  ndgrad::Buffer x_, h_, qkv_, att_, mlp_, logits_;
};

}  // namespace mas::sbt
