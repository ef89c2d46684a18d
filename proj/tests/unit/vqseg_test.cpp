#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "mas/error.hpp"
#include "mas/harness/synth.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/vqseg/vqseg.hpp"

namespace {

using mas::CounterRng;
using mas::ndgrad::Tensor;
namespace nd = mas::ndgrad;
namespace sc = mas::scene;
using namespace mas::vqseg;

VqSegConfig small_config(std::size_t book = 64) {
  VqSegConfig c;
  c.hidden = 16;
  c.hidden_deep = 32;
  c.latent_dim = 16;
  c.codebook_size = book;
  c.seed = 5;
  return c;
}

std::vector<sc::SceneMap> synth_scenes(std::size_t n, std::uint64_t seed) {
  mas::harness::SynthSpec spec;
  spec.person_probability = 1.0;
  std::vector<sc::SceneMap> out;
  for (auto& s : mas::harness::synth_generate(spec, n, seed)) out.push_back(s.scene);
  return out;
}

double plain_bce(double logit, double target) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

TEST(WbceLoss, SinglePixelSingleChannelClosedForm) {
  // Every channel but the first face part is confidently right, so only that
  // channel contributes: 20 ln 2, divided by the 17 averaged elements.
  const auto schema = sc::SceneSchema::desk();
  const sc::CategoryWeights w(schema, 20.0);
  std::vector<double> target(17, 0.0), logits(17, -60.0);
  target[11] = 1.0;
  logits[11] = 0.0;
  const auto loss = wbce_loss(Tensor::from_values({17, 1, 1}, target), Tensor::from_values({17, 1, 1}, logits), w);
  EXPECT_NEAR(loss.item() * 17.0, 20.0 * std::log(2.0), 1e-12);
}

TEST(WbceLoss, UnitWeightsEqualPlainBce) {
  const auto schema = sc::SceneSchema::desk();
  const sc::CategoryWeights w(schema, 1.0);
  CounterRng rng(31);
  const auto logits = Tensor::uniform({2, 17, 3, 3}, rng, -4.0, 4.0);
  std::vector<double> t(logits.numel());
  for (auto& v : t) v = static_cast<double>(rng.below(2));
  double want = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) want += plain_bce(logits.values()[i], t[i]);
  want /= static_cast<double>(t.size());
  EXPECT_NEAR(wbce_loss(Tensor::from_values(logits.shape(), t), logits, w).item(), want, 1e-12);
}

TEST(WbceLoss, BoostWeightsOnlyFacePartChannels) {
  const auto schema = sc::SceneSchema::desk();
  const sc::CategoryWeights w(schema, 20.0);
  CounterRng rng(32);
  const auto logits = Tensor::uniform({17, 2, 2}, rng, -3.0, 3.0);
  std::vector<double> t(logits.numel());
  for (auto& v : t) v = static_cast<double>(rng.below(2));
  double want = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto ch = static_cast<int>(i / 4);
    want += (ch >= 11 && ch <= 15 ? 20.0 : 1.0) * plain_bce(logits.values()[i], t[i]);
  }
  want /= static_cast<double>(t.size());
  EXPECT_NEAR(wbce_loss(Tensor::from_values(logits.shape(), t), logits, w).item(), want, 1e-12);
}

TEST(WbceLoss, PerfectLogitsGiveNearZero) {
  const sc::CategoryWeights w(sc::SceneSchema::desk(), 20.0);
  std::vector<double> t(17 * 4), l(17 * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<double>(i % 3 == 0);
    l[i] = t[i] ? 50.0 : -50.0;
  }
  EXPECT_LT(wbce_loss(Tensor::from_values({17, 2, 2}, t), Tensor::from_values({17, 2, 2}, l), w).item(), 1e-20);
}

TEST(WbceLoss, PermutationEquivariantOverPixels) {
  const sc::CategoryWeights w(sc::SceneSchema::desk(), 20.0);
  CounterRng rng(33);
  const std::size_t hw = 16;
  const auto logits = Tensor::uniform({17, 4, 4}, rng, -3.0, 3.0);
  std::vector<double> t(logits.numel());
  for (auto& v : t) v = static_cast<double>(rng.below(2));
  std::vector<std::size_t> perm(hw);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = hw - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<double> pt(t.size()), pl(t.size());
  for (std::size_t c = 0; c < 17; ++c) {
    for (std::size_t p = 0; p < hw; ++p) {
      pt[c * hw + perm[p]] = t[c * hw + p];
      pl[c * hw + perm[p]] = logits.values()[c * hw + p];
    }
  }
  const double a = wbce_loss(Tensor::from_values({17, 4, 4}, t), logits, w).item();
  const double b = wbce_loss(Tensor::from_values({17, 4, 4}, pt), Tensor::from_values({17, 4, 4}, pl), w).item();
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(WbceLoss, RejectsNonFiniteLogitsAndShapeMismatch) {
  const sc::CategoryWeights w(sc::SceneSchema::desk(), 20.0);
  std::vector<double> l(17, 0.0);
  l[3] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(wbce_loss(Tensor::zeros({17, 1, 1}), Tensor::from_values({17, 1, 1}, l), w), mas::Error);
  EXPECT_THROW(wbce_loss(Tensor::zeros({17, 1, 1}), Tensor::zeros({17, 1, 2}), w), mas::ShapeError);
}

TEST(HardReconstruction, TiesPickLowestChannelPerGroup) {
  const auto schema = sc::SceneSchema::desk();
  // All logits equal and positive: every group picks its first class.
  const auto s = hard_reconstruction(Tensor::full({17, 2, 2}, 1.0), schema);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.panoptic[i], 0);
    EXPECT_EQ(s.human[i], 0);
    EXPECT_EQ(s.face[i], 0);
    EXPECT_EQ(s.instance[i], 0);
  }
  const auto null = hard_reconstruction(Tensor::full({17, 1, 1}, -1.0), schema);
  EXPECT_EQ(null.panoptic[0], sc::kNullClass);
  EXPECT_EQ(null.face[0], sc::kNullClass);
}

TEST(VqSegModel, DeskShapesAndDeterminism) {
  const auto schema = sc::SceneSchema::desk();
  const VqSegModel model(schema, small_config());
  const auto scenes = synth_scenes(2, 7);
  const auto grids = seg_encode(scenes, model);
  ASSERT_EQ(grids.size(), 2u);
  EXPECT_EQ(grids[0].height, 8);
  EXPECT_EQ(grids[0].width, 8);
  EXPECT_EQ(grids[0].tokens.size(), 64u);
  for (int t : grids[0].tokens) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, 64);
  }
  EXPECT_EQ(seg_encode(scenes, model), grids);
  EXPECT_EQ(seg_encode(sc::encode_channels(scenes[1], schema), model), grids[1]);

  CounterRng rng(34);
  TokenGrid random{8, 8, std::vector<int>(64)};
  for (auto& t : random.tokens) t = static_cast<int>(rng.below(64));
  const auto logits = seg_decode(random, model);
  EXPECT_EQ(logits.shape(), (nd::Shape{17, 32, 32}));
}

TEST(VqSegModel, RoundTripPreservesSpatialDims) {
  const VqSegModel model(sc::SceneSchema::desk(), small_config());
  for (int side : {8, 16, 24}) {
    const auto z = model.encode_latents(Tensor::zeros({1, 17, static_cast<std::size_t>(side), static_cast<std::size_t>(side)}));
    EXPECT_EQ(z.dim(2), static_cast<std::size_t>(side / 4));
    EXPECT_EQ(model.decode_logits(z).dim(2), static_cast<std::size_t>(side));
  }
}

TEST(VqSegModel, InvalidInputsAreRejected) {
  const VqSegModel model(sc::SceneSchema::desk(), small_config());
  EXPECT_THROW(seg_encode(Tensor::zeros({16, 32, 32}), model), mas::ShapeError);
  EXPECT_THROW(seg_decode(TokenGrid{1, 1, {64}}, model), mas::RangeError);
  EXPECT_THROW(seg_decode(TokenGrid{2, 2, {0}}, model), mas::ShapeError);
}

TEST(SegTrainer, EmptyBatchIsAnError) {
  VqSegModel model(sc::SceneSchema::desk(), small_config());
  SegTrainer trainer(model, {}, 20.0);
  EXPECT_THROW(trainer.step({}), mas::Error);
}

TEST(SegTrainer, ReportSumsItsTerms) {
  VqSegModel model(sc::SceneSchema::desk(), small_config());
  SegTrainer trainer(model, {}, 20.0);
  const auto scenes = synth_scenes(2, 8);
  const auto r = trainer.step(scenes);
  EXPECT_NEAR(r.total, r.wbce + r.codebook + r.commitment, 1e-12);
  EXPECT_GT(r.wbce, 0.0);
}

// Overfit on a fixed 4-scene batch: loss falls over 200 steps, and every
// 40-step window mean is below the previous one.
TEST(SegTrainer, LossDecreasesOnFixedBatch) {
  VqSegModel model(sc::SceneSchema::desk(), small_config());
  mas::ndgrad::AdamConfig adam;
  adam.lr = 2e-3;
  SegTrainer trainer(model, adam, 20.0);
  const auto scenes = synth_scenes(4, 9);
  CounterRng rng(35);
  trainer.seed_codebook(scenes, rng);
  std::vector<double> losses;
  for (int s = 0; s < 200; ++s) losses.push_back(trainer.step(scenes).total);
  double prev = std::numeric_limits<double>::infinity();
  for (int w = 0; w < 5; ++w) {
    const double m = std::accumulate(losses.begin() + w * 40, losses.begin() + (w + 1) * 40, 0.0) / 40.0;
    EXPECT_LT(m, prev) << "window " << w;
    prev = m;
  }
  EXPECT_LT(losses.back(), 0.25 * losses.front());
}

// A single scene overfit until decode(encode(s)) reproduces every group's
// labels exactly.
TEST(SegTrainer, OverfitSingleSceneReproducesLabels) {
  const auto schema = sc::SceneSchema::desk();
  VqSegModel model(schema, small_config(16));
  mas::ndgrad::AdamConfig adam;
  adam.lr = 3e-3;
  SegTrainer trainer(model, adam, 20.0);
  const auto scenes = synth_scenes(1, 10);
  CounterRng rng(36);
  trainer.seed_codebook(scenes, rng);
  auto reproduced = [&] {
    const auto rec = hard_reconstruction(seg_decode(seg_encode(scenes, model)[0], model), schema);
    return rec.panoptic == scenes[0].panoptic && rec.human == scenes[0].human && rec.face == scenes[0].face;
  };
  int steps = 0;
  while (steps < 1500 && !(steps % 50 == 0 && steps > 0 && reproduced())) {
    trainer.step(scenes);
    ++steps;
  }
  EXPECT_TRUE(reproduced()) << "after " << steps << " steps";
  EXPECT_DOUBLE_EQ(label_accuracy(scenes, model), 1.0);
  EXPECT_DOUBLE_EQ(face_part_recall(scenes, model), 1.0);
}

}  // namespace
