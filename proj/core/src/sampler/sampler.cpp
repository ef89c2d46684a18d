#include "mas/sampler/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mas/error.hpp"

namespace mas::sampler {

std::vector<double> guide(const GuidedLogits& g) {
  if (g.cond.size() != g.uncond.size()) {
    throw ShapeError("guide: cond has " + std::to_string(g.cond.size()) + " logits, uncond " +
                     std::to_string(g.uncond.size()));
  }
  std::vector<double> out(g.cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.uncond[i] + g.alpha_c * (g.cond[i] - g.uncond[i]);
  return out;
}

int sample_token(std::span<const double> logits, CounterRng& rng, double top_fraction) {
  if (logits.empty()) throw RangeError("sample_token: empty logits");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw RangeError("sample_token: top fraction must be in (0,1]");
  std::vector<int> order;
  order.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isfinite(logits[i])) order.push_back(static_cast<int>(i));
  }
  if (order.empty()) throw RangeError("sample_token: no finite logits");
  const auto v = static_cast<double>(logits.size());
  const auto k = std::min(order.size(), static_cast<std::size_t>(std::ceil(top_fraction * v)));
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] != logits[static_cast<std::size_t>(b)]
               ? logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)]
               : a < b;
  });
  order.resize(k);
  const double mx = logits[static_cast<std::size_t>(order.front())];
  std::vector<double> p(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += (p[i] = std::exp(logits[static_cast<std::size_t>(order[i])] - mx));
  double u = rng.uniform() * z;
  for (std::size_t i = 0; i < k; ++i) {
    u -= p[i];
    if (u < 0.0) return order[i];
  }
  return order.back();
}

void SampleConfig::validate() const {
  if (!(alpha_c >= 0.0) || !std::isfinite(alpha_c)) throw RangeError("sample config: alpha_c must be >= 0");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw RangeError("sample config: top fraction must be in (0,1]");
}

namespace {

void check_inputs(const sbt::SbtModel& model, std::span<const int> text_tokens,
                  std::optional<std::span<const int>> forced_scene, const SampleConfig& cfg) {
  cfg.validate();
  const auto& c = model.config();
  if (text_tokens.size() != c.text_len) {
    throw ShapeError("generate: " + std::to_string(text_tokens.size()) + " text tokens, model expects " +
                     std::to_string(c.text_len));
  }
  if (cfg.mode == SceneMode::fixed_scene && !forced_scene) throw Error("generate: fixed-scene mode needs a scene");
  if (forced_scene && forced_scene->size() != c.scene_len) {
    throw ShapeError("generate: " + std::to_string(forced_scene->size()) + " scene tokens, model expects " +
                     std::to_string(c.scene_len));
  }
}

// Feeds the prompt, then produces scene and image tokens one at a time.
// `choose` maps (position, cond logits, uncond logits) to the next token.
template <typename Choose>
void decode_loop(const sbt::SbtModel& model, std::span<const int> text_tokens, bool dual, Choose choose,
                 TokenStreams& out) {
  const auto& c = model.config();
  sbt::IncrementalDecoder cond(model);
  std::optional<sbt::IncrementalDecoder> uncond;
  if (dual) uncond.emplace(model);
  std::span<const double> lc, lu;
  for (int t : text_tokens) {
    lc = cond.push(t);
    out.cond_stream.push_back(t);
    if (dual) {
      lu = uncond->push(text::BpeVocab::kPad);
      out.uncond_stream.push_back(text::BpeVocab::kPad);
    }
  }
  for (std::size_t pos = c.text_len; pos < c.length(); ++pos) {
    const int tok = choose(pos, lc, lu);
    (c.segment_of(pos) == sbt::Segment::scene ? out.scene_tokens : out.image_tokens).push_back(tok);
    out.cond_stream.push_back(tok);
    lc = cond.push(tok);
    if (dual) {
      out.uncond_stream.push_back(tok);
      lu = uncond->push(tok);
    }
  }
}

}  // namespace

TokenStreams generate_tokens(const sbt::SbtModel& model, std::span<const int> text_tokens,
                             std::optional<std::span<const int>> forced_scene, const SampleConfig& cfg) {
  check_inputs(model, text_tokens, forced_scene, cfg);
  const auto& c = model.config();
  CounterRng rng(cfg.seed);
  TokenStreams out;
  decode_loop(
      model, text_tokens, true,
      [&](std::size_t pos, std::span<const double> lc, std::span<const double> lu) {
        if (forced_scene && c.segment_of(pos) == sbt::Segment::scene) return (*forced_scene)[pos - c.text_len];
        return sample_token(guide({lc, lu, cfg.alpha_c}), rng, cfg.top_fraction);
      },
      out);
  return out;
}

TokenStreams sample_conditional(const sbt::SbtModel& model, std::span<const int> text_tokens,
                                std::optional<std::span<const int>> forced_scene, const SampleConfig& cfg) {
  check_inputs(model, text_tokens, forced_scene, cfg);
  const auto& c = model.config();
  CounterRng rng(cfg.seed);
  TokenStreams out;
  decode_loop(
      model, text_tokens, false,
      [&](std::size_t pos, std::span<const double> lc, std::span<const double>) {
        if (forced_scene && c.segment_of(pos) == sbt::Segment::scene) return (*forced_scene)[pos - c.text_len];
        return sample_token(lc, rng, cfg.top_fraction);
      },
      out);
  return out;
}

void ModelBundle::validate() const {
  const auto& c = sbt.config();
  auto mismatch = [](const std::string& what) { throw FormatError("checkpoint/config mismatch: " + what); };
  if (vocab.size() > c.text_vocab) mismatch("BPE vocabulary larger than transformer text vocabulary");
  if (vqseg.codebook().size() != c.scene_vocab) mismatch("scene codebook size differs from transformer");
  if (vqimg.codebook().size() != c.image_vocab) mismatch("image codebook size differs from transformer");
  if (static_cast<std::size_t>(scene_grid_h * scene_grid_w) != c.scene_len) mismatch("scene grid vs scene length");
  if (static_cast<std::size_t>(image_grid_h * image_grid_w) != c.image_len) mismatch("image grid vs image length");
}

Generation generate(std::string_view text, const scene::SceneMap* scene, const ModelBundle& models,
                    const SampleConfig& cfg) {
  models.validate();
  const auto text_tokens = text::bpe_encode(text, models.vocab, models.sbt.config().text_len);
  std::optional<std::span<const int>> forced;
  vqseg::TokenGrid scene_grid;
  if (cfg.mode == SceneMode::fixed_scene) {
    if (scene == nullptr) throw Error("generate: fixed-scene mode needs a scene");
    scene_grid = vqseg::seg_encode(scene::encode_channels(*scene, models.vqseg.schema()), models.vqseg);
    forced = std::span<const int>(scene_grid.tokens);
  }
  Generation g;
  g.tokens = generate_tokens(models.sbt, text_tokens, forced, cfg);
  const vqseg::TokenGrid sg{models.scene_grid_h, models.scene_grid_w, g.tokens.scene_tokens};
  g.scene = vqseg::hard_reconstruction(vqseg::seg_decode(sg, models.vqseg), models.vqseg.schema());
  const vqseg::TokenGrid ig{models.image_grid_h, models.image_grid_w, g.tokens.image_tokens};
  g.image = vqimg::img_decode_image(ig, models.vqimg);
  return g;
}

}  // namespace mas::sampler
