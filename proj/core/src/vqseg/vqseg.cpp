#include "mas/vqseg/vqseg.hpp"

#include <algorithm>
#include <cmath>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"

namespace mas::vqseg {

namespace ops = ndgrad;
using scene::Group;
using scene::SceneMap;

VqSegModel::VqSegModel(const scene::SceneSchema& schema, const VqSegConfig& config)
    : schema_(schema), config_(config) {
  schema_.validate();
  if (config.hidden == 0 || config.hidden_deep == 0 || config.latent_dim == 0) {
    throw RangeError("vqseg: layer widths must be positive");
  }
  CounterRng rng(config.seed);
  const auto m = static_cast<std::size_t>(schema.channels());
  const std::size_t h = config.hidden, hd = config.hidden_deep, d = config.latent_dim;
  enc_in_ = nn::make_conv(params_, "vqseg.enc.in", m, h, 1, rng);
  enc_down1_ = nn::make_conv(params_, "vqseg.enc.down1", h, h, 2, rng);
  enc_down2_ = nn::make_conv(params_, "vqseg.enc.down2", h, hd, 2, rng);
  enc_out_ = nn::make_conv(params_, "vqseg.enc.out", hd, d, 1, rng);
  dec_in_ = nn::make_conv(params_, "vqseg.dec.in", d, hd, 1, rng);
  dec_up1_ = nn::make_conv(params_, "vqseg.dec.up1", hd, h, 1, rng);
  dec_up2_ = nn::make_conv(params_, "vqseg.dec.up2", h, h, 1, rng);
  dec_out_ = nn::make_conv(params_, "vqseg.dec.out", h, m, 1, rng);
  book_ = vq::Codebook(params_, "vqseg.codebook", config.codebook_size, d, rng);
}

Tensor VqSegModel::encode_latents(const Tensor& channels) const {
  if (channels.rank() != 4 || channels.dim(1) != static_cast<std::size_t>(schema_.channels())) {
    throw ShapeError("vqseg encode: expected [B," + std::to_string(schema_.channels()) + ",h,w], got " +
                     ops::to_string(channels.shape()));
  }
  if (channels.dim(2) % kDownsample != 0 || channels.dim(3) % kDownsample != 0) {
    throw ShapeError("vqseg encode: extents " + ops::to_string(channels.shape()) + " not divisible by 4");
  }
  Tensor x = ops::relu(enc_in_(channels));
  x = ops::relu(enc_down1_(x));
  x = ops::relu(enc_down2_(x));
  return enc_out_(x);
}

Tensor VqSegModel::decode_logits(const Tensor& latents) const {
  if (latents.rank() != 4 || latents.dim(1) != config_.latent_dim) {
    throw ShapeError("vqseg decode: expected [B," + std::to_string(config_.latent_dim) + ",h,w], got " +
                     ops::to_string(latents.shape()));
  }
  Tensor x = ops::relu(dec_in_(latents));
  x = ops::relu(dec_up1_(ops::upsample2x(x)));
  x = ops::relu(dec_up2_(ops::upsample2x(x)));
  return dec_out_(x);
}

Tensor stack_scenes(std::span<const SceneMap> scenes, const scene::SceneSchema& schema) {
  if (scenes.empty()) throw RangeError("stack_scenes: empty batch");
  const int h = scenes.front().height, w = scenes.front().width;
  std::vector<double> values;
  values.reserve(scenes.size() * static_cast<std::size_t>(schema.channels()) * scenes.front().pixels());
  for (const auto& s : scenes) {
    if (s.height != h || s.width != w) throw ShapeError("stack_scenes: scenes differ in size");
    scene::append_channels(s, schema, values);
  }
  return Tensor::from_values({scenes.size(), static_cast<std::size_t>(schema.channels()), static_cast<std::size_t>(h),
                              static_cast<std::size_t>(w)},
                             std::move(values));
}

Tensor to_rows(const Tensor& grid) {
  const std::size_t b = grid.dim(0), d = grid.dim(1), h = grid.dim(2), w = grid.dim(3);
  return ops::reshape(ops::permute(grid, {0, 2, 3, 1}), {b * h * w, d});
}

Tensor from_rows(const Tensor& rows, std::size_t batch, std::size_t height, std::size_t width) {
  const std::size_t d = rows.dim(1);
  return ops::permute(ops::reshape(rows, {batch, height, width, d}), {0, 3, 1, 2});
}

namespace {

std::vector<int> encode_indices(const Tensor& channels, const VqSegModel& model) {
  ndgrad::NoGradGuard guard;
  Tensor rows = to_rows(model.encode_latents(channels));
  std::vector<int> idx(rows.dim(0));
  const std::size_t d = rows.dim(1);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = vq::nearest(rows.values().subspan(i * d, d), model.codebook());
  return idx;
}

}  // namespace

TokenGrid seg_encode(const Tensor& scene_channels, const VqSegModel& model) {
  if (scene_channels.rank() != 3) {
    throw ShapeError("seg_encode: expected [m,h,w], got " + ops::to_string(scene_channels.shape()));
  }
  Tensor batch = ops::reshape(scene_channels.detach(),
                              {1, scene_channels.dim(0), scene_channels.dim(1), scene_channels.dim(2)});
  TokenGrid g;
  g.height = static_cast<int>(scene_channels.dim(1)) / VqSegModel::kDownsample;
  g.width = static_cast<int>(scene_channels.dim(2)) / VqSegModel::kDownsample;
  g.tokens = encode_indices(batch, model);
  return g;
}

std::vector<TokenGrid> seg_encode(std::span<const SceneMap> scenes, const VqSegModel& model) {
  constexpr std::size_t kChunk = 64;
  std::vector<TokenGrid> out;
  out.reserve(scenes.size());
  for (std::size_t start = 0; start < scenes.size(); start += kChunk) {
    auto part = scenes.subspan(start, std::min(kChunk, scenes.size() - start));
    const auto idx = encode_indices(stack_scenes(part, model.schema()), model);
    const int gh = part.front().height / VqSegModel::kDownsample, gw = part.front().width / VqSegModel::kDownsample;
    const std::size_t per = static_cast<std::size_t>(gh) * static_cast<std::size_t>(gw);
    for (std::size_t b = 0; b < part.size(); ++b) {
      out.push_back({gh, gw, std::vector<int>(idx.begin() + static_cast<long>(b * per),
                                              idx.begin() + static_cast<long>((b + 1) * per))});
    }
  }
  return out;
}

Tensor seg_decode(const TokenGrid& tokens, const VqSegModel& model) {
  if (tokens.height <= 0 || tokens.width <= 0 ||
      tokens.tokens.size() != static_cast<std::size_t>(tokens.height) * static_cast<std::size_t>(tokens.width)) {
    throw ShapeError("seg_decode: token grid " + std::to_string(tokens.height) + "x" + std::to_string(tokens.width) +
                     " holds " + std::to_string(tokens.tokens.size()) + " tokens");
  }
  ndgrad::NoGradGuard guard;
  const auto gh = static_cast<std::size_t>(tokens.height), gw = static_cast<std::size_t>(tokens.width);
  Tensor logits = model.decode_logits(from_rows(vq::lookup(tokens.tokens, model.codebook()), 1, gh, gw));
  return ops::reshape(logits, {logits.dim(1), logits.dim(2), logits.dim(3)});
}

SceneMap hard_reconstruction(const Tensor& logits, const scene::SceneSchema& schema) {
  if (logits.rank() != 3 || logits.dim(0) != static_cast<std::size_t>(schema.channels())) {
    throw ShapeError("hard_reconstruction: expected [" + std::to_string(schema.channels()) + ",h,w], got " +
                     ops::to_string(logits.shape()));
  }
  SceneMap out(static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(2)));
  const std::size_t n = out.pixels();
  const auto v = logits.values();
  for (Group g : {Group::panoptic, Group::human, Group::face}) {
    const auto off = static_cast<std::size_t>(schema.offset(g));
    const auto len = static_cast<std::size_t>(schema.size(g));
    auto& grid = out.grid(g);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < len; ++c) {
        if (v[(off + c) * n + i] > v[(off + best) * n + i]) best = c;
      }
      // sigmoid(z) >= 0.5 iff z >= 0
      if (v[(off + best) * n + i] >= 0.0) grid[i] = static_cast<std::uint16_t>(best);
    }
  }
  return out;
}

std::vector<std::uint8_t> decoded_edges(const Tensor& logits, const scene::SceneSchema& schema) {
  if (logits.rank() != 3 || logits.dim(0) != static_cast<std::size_t>(schema.channels())) {
    throw ShapeError("decoded_edges: expected [" + std::to_string(schema.channels()) + ",h,w], got " +
                     ops::to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(1) * logits.dim(2);
  const auto v = logits.values().subspan(static_cast<std::size_t>(schema.edge_channel()) * n, n);
  std::vector<std::uint8_t> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = v[i] > 0.0 ? 1 : 0;
  return e;
}

Tensor wbce_loss(const Tensor& target, const Tensor& logits, const scene::CategoryWeights& weights) {
  if (target.shape() != logits.shape()) {
    throw ShapeError("wbce_loss: target " + ops::to_string(target.shape()) + " vs logits " +
                     ops::to_string(logits.shape()));
  }
  const std::size_t m = weights.per_channel().size();
  if (logits.rank() < 3 || logits.dim(logits.rank() - 3) != m) {
    throw ShapeError("wbce_loss: expected [..," + std::to_string(m) + ",h,w], got " + ops::to_string(logits.shape()));
  }
  const std::size_t hw = logits.dim(logits.rank() - 2) * logits.dim(logits.rank() - 1);
  std::vector<double> w(logits.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights.per_channel()[(i / hw) % m];
  return ops::bce_with_logits(logits, target, w);
}

SegTrainer::SegTrainer(VqSegModel& model, const ndgrad::AdamConfig& adam, double face_boost)
    : model_(model), adam_(adam), weights_(model.schema(), face_boost) {}

void SegTrainer::seed_codebook(std::span<const SceneMap> scenes, CounterRng& rng) {
  ndgrad::NoGradGuard guard;
  Tensor rows = to_rows(model_.encode_latents(stack_scenes(scenes, model_.schema())));
  model_.codebook().seed_from(rows.values(), rng);
}

SegLossReport SegTrainer::step(std::span<const SceneMap> batch) {
  if (batch.empty()) throw RangeError("seg_train_step: empty batch");
  Tensor target = stack_scenes(batch, model_.schema());
  Tensor latents = model_.encode_latents(target);
  const std::size_t b = latents.dim(0), gh = latents.dim(2), gw = latents.dim(3);
  auto q = vq::quantize(to_rows(latents), model_.codebook(), model_.config().beta_commit);
  Tensor logits = model_.decode_logits(from_rows(q.quantized, b, gh, gw));
  Tensor rec = wbce_loss(target, logits, weights_);
  Tensor total = ops::add(ops::add(rec, q.codebook_loss), q.commitment_loss);
  total.backward();
  adam_.step(model_.params().params(), ++step_);
  total.release_graph();
  return {total.item(), rec.item(), q.codebook_loss.item(), q.commitment_loss.item()};
}

namespace {

template <typename Visit>
void for_each_reconstruction(std::span<const SceneMap> scenes, const VqSegModel& model, Visit visit) {
  const auto grids = seg_encode(scenes, model);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    visit(scenes[i], hard_reconstruction(seg_decode(grids[i], model), model.schema()));
  }
}

}  // namespace

double face_part_recall(std::span<const SceneMap> scenes, const VqSegModel& model) {
  std::size_t total = 0, hit = 0;
  const auto& schema = model.schema();
  const int face_off = schema.offset(Group::face);
  auto is_part = [&](std::uint16_t c) {
    return c != scene::kNullClass && face_off + c >= schema.face_part_first && face_off + c <= schema.face_part_last;
  };
  for_each_reconstruction(scenes, model, [&](const SceneMap& truth, const SceneMap& rec) {
    for (std::size_t i = 0; i < truth.pixels(); ++i) {
      if (!is_part(truth.face[i])) continue;
      ++total;
      if (rec.face[i] == truth.face[i]) ++hit;
    }
  });
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double label_accuracy(std::span<const SceneMap> scenes, const VqSegModel& model) {
  std::size_t total = 0, hit = 0;
  for_each_reconstruction(scenes, model, [&](const SceneMap& truth, const SceneMap& rec) {
    for (Group g : {Group::panoptic, Group::human, Group::face}) {
      const auto& a = truth.grid(g);
      const auto& b = rec.grid(g);
      for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
      total += a.size();
    }
  });
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace mas::vqseg
