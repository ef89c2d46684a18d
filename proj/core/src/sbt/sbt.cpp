#include "mas/sbt/sbt.hpp"

#include <cmath>
#include <string>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/text/bpe.hpp"

namespace mas::sbt {

namespace ops = ndgrad;

SbtConfig SbtConfig::full_scale() {
  SbtConfig c;
  c.text_len = 256;
  c.scene_len = 256;
  c.image_len = 1024;
  c.text_vocab = 16384;
  c.scene_vocab = 1024;
  c.image_vocab = 8192;
  c.layers = 48;
  c.heads = 48;
  c.dim = 2560;
  return c;
}

std::size_t SbtConfig::vocab(Segment s) const {
  switch (s) {
    case Segment::text: return text_vocab;
    case Segment::scene: return scene_vocab;
    case Segment::image: return image_vocab;
  }
  return 0;
}

std::size_t SbtConfig::segment_start(Segment s) const {
  switch (s) {
    case Segment::text: return 0;
    case Segment::scene: return text_len;
    case Segment::image: return text_len + scene_len;
  }
  return 0;
}

std::size_t SbtConfig::segment_len(Segment s) const {
  switch (s) {
    case Segment::text: return text_len;
    case Segment::scene: return scene_len;
    case Segment::image: return image_len;
  }
  return 0;
}

Segment SbtConfig::segment_of(std::size_t position) const {
  if (position < text_len) return Segment::text;
  if (position < text_len + scene_len) return Segment::scene;
  if (position < length()) return Segment::image;
  throw RangeError("sbt: position " + std::to_string(position) + " beyond sequence length " + std::to_string(length()));
}

std::size_t SbtConfig::unified_offset(Segment s) const {
  switch (s) {
    case Segment::text: return 0;
    case Segment::scene: return text_vocab;
    case Segment::image: return text_vocab + scene_vocab;
  }
  return 0;
}

void SbtConfig::validate() const {
  if (text_len < 2 || scene_len == 0 || image_len == 0) throw RangeError("sbt config: segment lengths too short");
  if (text_vocab < static_cast<std::size_t>(text::BpeVocab::kAlphabetSize)) {
    throw RangeError("sbt config: text vocabulary must hold the byte alphabet and specials");
  }
  if (scene_vocab == 0 || image_vocab == 0) throw RangeError("sbt config: empty vocabulary");
  if (layers == 0 || dim == 0 || mlp_ratio == 0) throw RangeError("sbt config: zero-sized model");
  if (heads == 0 || dim % heads != 0) {
    throw RangeError("sbt config: " + std::to_string(heads) + " heads do not divide width " + std::to_string(dim));
  }
}

TokenSequence pack(std::span<const int> text, std::span<const int> scene, std::span<const int> image,
                   const SbtConfig& config) {
  if (text.size() != config.text_len || scene.size() != config.scene_len || image.size() != config.image_len) {
    throw ShapeError("pack: segment lengths (" + std::to_string(text.size()) + "," + std::to_string(scene.size()) +
                     "," + std::to_string(image.size()) + ") != configured (" + std::to_string(config.text_len) +
                     "," + std::to_string(config.scene_len) + "," + std::to_string(config.image_len) + ")");
  }
  TokenSequence s;
  s.tokens.reserve(config.length());
  s.tokens.insert(s.tokens.end(), text.begin(), text.end());
  s.tokens.insert(s.tokens.end(), scene.begin(), scene.end());
  s.tokens.insert(s.tokens.end(), image.begin(), image.end());
  s.n_x = text.size();
  s.n_y = scene.size();
  s.n_z = image.size();
  validate_sequence(s, config);
  return s;
}

Unpacked unpack(const TokenSequence& seq) {
  if (seq.tokens.size() != seq.n_x + seq.n_y + seq.n_z) throw ShapeError("unpack: boundaries do not match length");
  const auto b = seq.tokens.begin();
  const auto x = static_cast<long>(seq.n_x), y = static_cast<long>(seq.n_y);
  return {{b, b + x}, {b + x, b + x + y}, {b + x + y, seq.tokens.end()}};
}

void validate_sequence(const TokenSequence& seq, const SbtConfig& config) {
  if (seq.n_x != config.text_len || seq.n_y != config.scene_len || seq.n_z != config.image_len ||
      seq.tokens.size() != config.length()) {
    throw ShapeError("sbt: sequence boundaries (" + std::to_string(seq.n_x) + "," + std::to_string(seq.n_y) + "," +
                     std::to_string(seq.n_z) + ") do not match the model");
  }
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const Segment s = config.segment_of(i);
    if (seq.tokens[i] < 0 || static_cast<std::size_t>(seq.tokens[i]) >= config.vocab(s)) {
      throw RangeError("sbt: token " + std::to_string(seq.tokens[i]) + " at position " + std::to_string(i) +
                       " outside vocabulary of " + std::to_string(config.vocab(s)));
    }
  }
}

SbtModel::SbtModel(const SbtConfig& config) : config_(config) {
  config.validate();
  CounterRng rng(config.seed);
  const std::size_t d = config.dim, t = config.length();
  constexpr double kStd = 0.02;
  const double proj_std = kStd / std::sqrt(2.0 * static_cast<double>(config.layers));
  tok_ = params_.add("sbt.tok", Tensor::randn({config.text_vocab + config.scene_vocab + config.image_vocab, d}, rng, kStd));
  pos_ = params_.add("sbt.pos", Tensor::randn({t, d}, rng, kStd));
  seg_ = params_.add("sbt.seg", Tensor::randn({3, d}, rng, kStd));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "sbt.block" + std::to_string(l);
    Block b;
    b.ln1 = nn::make_layernorm(params_, p + ".ln1", d);
    b.qkv = nn::make_linear(params_, p + ".qkv", d, 3 * d, rng, kStd);
    b.proj = nn::make_linear(params_, p + ".proj", d, d, rng, proj_std);
    b.ln2 = nn::make_layernorm(params_, p + ".ln2", d);
    b.fc1 = nn::make_linear(params_, p + ".fc1", d, config.mlp_ratio * d, rng, kStd);
    b.fc2 = nn::make_linear(params_, p + ".fc2", config.mlp_ratio * d, d, rng, proj_std);
    blocks_.push_back(std::move(b));
  }
  ln_f_ = nn::make_layernorm(params_, "sbt.ln_f", d);
  heads_.push_back(nn::make_linear(params_, "sbt.head.text", d, config.text_vocab, rng, kStd));
  heads_.push_back(nn::make_linear(params_, "sbt.head.scene", d, config.scene_vocab, rng, kStd));
  heads_.push_back(nn::make_linear(params_, "sbt.head.image", d, config.image_vocab, rng, kStd));
}

SegmentLogits SbtModel::forward_logits(std::span<const TokenSequence> batch) const {
  if (batch.empty()) throw RangeError("sbt forward: empty batch");
  const std::size_t b = batch.size(), t = config_.length();
  std::vector<int> ids;
  ids.reserve(b * t);
  for (const auto& seq : batch) {
    validate_sequence(seq, config_);
    for (std::size_t i = 0; i < t; ++i) {
      ids.push_back(seq.tokens[i] + static_cast<int>(config_.unified_offset(config_.segment_of(i))));
    }
  }
  std::vector<int> seg_ids(t);
  for (std::size_t i = 0; i < t; ++i) seg_ids[i] = static_cast<int>(config_.segment_of(i));

  Tensor x = ops::embedding(tok_, ids, {b, t});
  x = ops::add(x, pos_);
  x = ops::add(x, ops::embedding(seg_, seg_ids, {t}));
  for (const auto& blk : blocks_) {
    Tensor a = ops::causal_attention(blk.qkv(blk.ln1(x)), config_.heads);
    x = ops::add(x, blk.proj(a));
    x = ops::add(x, blk.fc2(ops::gelu(blk.fc1(blk.ln2(x)))));
  }
  x = ln_f_(x);
  const std::size_t nx = config_.text_len, ny = config_.scene_len, nz = config_.image_len;
  return {head(Segment::text)(ops::slice(x, 1, 0, nx - 1)), head(Segment::scene)(ops::slice(x, 1, nx - 1, ny)),
          head(Segment::image)(ops::slice(x, 1, nx + ny - 1, nz))};
}

std::vector<std::vector<double>> position_logits(const SbtModel& model, const TokenSequence& seq) {
  ndgrad::NoGradGuard guard;
  const auto logits = model.forward_logits(std::span<const TokenSequence>(&seq, 1));
  std::vector<std::vector<double>> out;
  for (const Tensor* part : {&logits.text, &logits.scene, &logits.image}) {
    const std::size_t rows = part->dim(1), v = part->dim(2);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = part->values().subspan(r * v, v);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(p_cf >= 0.0 && p_cf <= 1.0)) throw RangeError("train config: p_cf must lie in [0,1]");
  if (!(image_weight > 0.0 && text_weight >= 0.0 && scene_weight >= 0.0)) {
    throw RangeError("train config: loss weights must be positive");
  }
  if (switch_step < 0) throw RangeError("train config: negative switch step");
}

namespace {

Tensor segment_ce(const Tensor& logits, std::span<const TokenSequence> batch, std::size_t first, bool mask_pad) {
  const std::size_t b = logits.dim(0), rows = logits.dim(1), v = logits.dim(2);
  std::vector<int> targets(b * rows);
  std::vector<double> weights(b * rows, 1.0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t r = 0; r < rows; ++r) {
      const int tok = batch[s].tokens[first + r];
      targets[s * rows + r] = tok;
      if (mask_pad && tok == text::BpeVocab::kPad) weights[s * rows + r] = 0.0;
    }
  }
  return ops::cross_entropy(ops::reshape(logits, {b * rows, v}), targets, weights);
}

}  // namespace

SbtLoss sbt_loss(const SbtModel& model, std::span<const TokenSequence> batch, const TrainConfig& cfg) {
  const auto& c = model.config();
  const auto logits = model.forward_logits(batch);
  SbtLoss l;
  l.text = segment_ce(logits.text, batch, 1, true);
  l.scene = segment_ce(logits.scene, batch, c.text_len, false);
  l.image = segment_ce(logits.image, batch, c.text_len + c.scene_len, false);
  l.total = ops::add(ops::add(ops::scale(l.text, cfg.text_weight), ops::scale(l.scene, cfg.scene_weight)),
                     ops::scale(l.image, cfg.image_weight));
  return l;
}

SbtTrainer::SbtTrainer(SbtModel& model, TrainConfig cfg, std::uint64_t seed)
    : model_(model), cfg_(std::move(cfg)), adam_(cfg_.adam), cf_rng_(seed) {
  cfg_.validate();
}

double SbtTrainer::current_lr() const {
  return (cfg_.switch_step > 0 && step_ >= cfg_.switch_step) ? cfg_.lr_after_switch : cfg_.adam.lr;
}

SbtLossReport SbtTrainer::step(std::span<const TokenSequence> batch, CfMode cf_mode) {
  if (batch.empty()) throw RangeError("sbt train_step: empty batch");
  SbtLossReport r;
  std::vector<TokenSequence> local;
  std::span<const TokenSequence> used = batch;
  if (cf_mode == CfMode::on) {
    local.assign(batch.begin(), batch.end());
    for (auto& s : local) {
      if (cf_rng_.bernoulli(cfg_.p_cf)) {
        std::fill(s.tokens.begin(), s.tokens.begin() + static_cast<long>(s.n_x), text::BpeVocab::kPad);
        ++r.unconditional;
      }
    }
    used = local;
  }
  const double lr = current_lr();
  SbtLoss l = sbt_loss(model_, used, cfg_);
  l.total.backward();
  adam_.step(model_.params().params(), ++step_, lr);
  l.total.release_graph();
  r.total = l.total.item();
  r.text = l.text.item();
  r.scene = l.scene.item();
  r.image = l.image.item();
  return r;
}

}  // namespace mas::sbt
