#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mas/error.hpp"
#include "mas/harness/synth.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/vqimg/vqimg.hpp"
#include "mas/vqseg/vqseg.hpp"

namespace {

using mas::CounterRng;
using mas::ndgrad::Box;
using mas::ndgrad::Tensor;
namespace nd = mas::ndgrad;
namespace sc = mas::scene;
using namespace mas::vqimg;

VqImgConfig small_config() {
  VqImgConfig c;
  c.base_channels = 16;
  c.latent_dim = 16;
  c.codebook_size = 64;
  c.seed = 9;
  return c;
}

sc::SceneMap face_scene(int side, const std::vector<Box>& blobs) {
  sc::SceneMap s(side, side);
  for (const auto& b : blobs) {
    for (std::size_t y = b.y; y < b.y + b.h; ++y) {
      for (std::size_t x = b.x; x < b.x + b.w; ++x) s.face[s.index(static_cast<int>(y), static_cast<int>(x))] = 0;
    }
  }
  return s;
}

double mean_abs(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
  return s / static_cast<double>(a.numel());
}

TEST(VqImgModel, BaseModeShapes) {
  const VqImgModel model(small_config());
  EXPECT_EQ(model.config().stride(), 4u);
  const auto z = model.encode_latents(Tensor::zeros({2, 3, 32, 32}));
  EXPECT_EQ(z.shape(), (nd::Shape{2, 16, 8, 8}));
  EXPECT_EQ(model.decode(z).shape(), (nd::Shape{2, 3, 32, 32}));
}

TEST(VqImgModel, DoubledModeHasOneMoreStage) {
  const auto base = small_config();
  const auto dbl = VqImgConfig::doubled_from(base);
  EXPECT_EQ(dbl.mode, ResolutionMode::doubled);
  EXPECT_EQ(dbl.multipliers, (std::vector<std::size_t>{1, 1, 2, 2}));
  const VqImgModel a(base), b(dbl);
  EXPECT_EQ(b.downsample_layers(), a.downsample_layers() + 1);
  EXPECT_EQ(b.upsample_layers(), a.upsample_layers() + 1);
  const auto z = b.encode_latents(Tensor::zeros({1, 3, 64, 64}));
  EXPECT_EQ(z.shape(), (nd::Shape{1, 16, 8, 8}));
  EXPECT_EQ(b.decode(z).shape(), (nd::Shape{1, 3, 64, 64}));
}

TEST(VqImgModel, EncodeIsDeterministicAndDecodeInRange) {
  const VqImgModel model(small_config());
  mas::harness::SynthSpec spec;
  const auto samples = mas::harness::synth_generate(spec, 2, 4);
  std::vector<mas::io::Image> images{samples[0].image, samples[1].image};
  const auto g = img_encode(images, model);
  EXPECT_EQ(img_encode(images, model), g);
  EXPECT_EQ(g[0].height, 8);
  const auto out = img_decode(g[0], model);
  EXPECT_EQ(out.shape(), (nd::Shape{3, 32, 32}));
  for (double v : out.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(img_decode(mas::vqseg::TokenGrid{1, 1, {64}}, model), mas::RangeError);
}

// A grid of one repeated token is spatially constant in the latent, so the
// decoder output is constant wherever the zero padding cannot reach.
TEST(VqImgModel, RepeatedTokenDecodesToStationaryInterior) {
  const VqImgModel model(small_config());
  const auto out = img_decode(mas::vqseg::TokenGrid{8, 8, std::vector<int>(64, 7)}, model);
  for (std::size_t c = 0; c < 3; ++c) {
    const double ref = out.values()[c * 1024 + 16 * 32 + 16];
    for (std::size_t y = 12; y < 20; ++y) {
      for (std::size_t x = 12; x < 20; ++x) EXPECT_NEAR(out.values()[c * 1024 + y * 32 + x], ref, 1e-12);
    }
  }
}

TEST(LayerWeights, FaceAndObjectValues) {
  const auto f = face_layer_weights(0.1, 0.25);
  ASSERT_EQ(f.size(), 5u);
  const std::vector<double> want{0.1, 0.0025, 0.025, 0.05, 0.005};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(f[i], want[i], 1e-15);
  for (double a : object_layer_weights(4)) EXPECT_EQ(a, 0.25);
}

TEST(LocateFaces, EmptyWhenNoFacePixels) { EXPECT_TRUE(locate_faces(sc::SceneMap(16, 16), 4).empty()); }

TEST(LocateFaces, SingleBlobGivesExactBox) {
  const Box b{3, 5, 4, 4};
  const auto crops = locate_faces(face_scene(16, {b}), 4);
  ASSERT_EQ(crops.size(), 1u);
  EXPECT_EQ(crops[0].box, b);
  EXPECT_EQ(crops[0].role, CropRole::face);
}

TEST(LocateFaces, KeepsTheLargestK) {
  const std::vector<Box> blobs{{0, 0, 1, 1}, {0, 4, 3, 3}, {6, 0, 2, 2}, {10, 10, 5, 5}, {6, 6, 4, 2}};
  const auto crops = locate_faces(face_scene(16, blobs), 3);
  ASSERT_EQ(crops.size(), 3u);
  EXPECT_EQ(crops[0].box, blobs[3]);
  EXPECT_EQ(crops[1].box, blobs[1]);
  EXPECT_EQ(crops[2].box, blobs[4]);
}

TEST(ScaleCrops, MultipliesCoordinates) {
  const auto c = scale_crops({Crop{{1, 2, 3, 4}, CropRole::object, 0}}, 2, 5);
  EXPECT_EQ(c[0].box, (Box{2, 4, 6, 8}));
  EXPECT_EQ(c[0].image, 5u);
}

TEST(RegionLoss, ConstantHalfDifferenceIsHalf) {
  CounterRng rng(40);
  const auto a = Tensor::uniform({1, 4, 3, 3}, rng, -1.0, 1.0);
  std::vector<double> shifted(a.values().begin(), a.values().end());
  for (auto& v : shifted) v += 0.5;
  EXPECT_NEAR(nd::l1(Tensor::from_values(a.shape(), shifted), a).item(), 0.5, 1e-15);
}

TEST(RegionLoss, MatchesDirectFeatureSum) {
  const FeatureExtractor fe(CropRole::face, 77);
  CounterRng rng(41);
  const auto img = Tensor::uniform({2, 3, 32, 32}, rng, -1.0, 1.0);
  const auto rec = Tensor::uniform({2, 3, 32, 32}, rng, -1.0, 1.0);
  const CropSet crops{{{2, 3, 8, 6}, CropRole::face, 0}, {{10, 12, 5, 9}, CropRole::face, 1}};
  const auto alphas = face_layer_weights();
  double want = 0.0;
  for (const auto& c : crops) {
    const auto fr = fe.features(nd::crop_resize(rec, c.image, c.box, 16, 16));
    const auto fi = fe.features(nd::crop_resize(img, c.image, c.box, 16, 16));
    ASSERT_EQ(fr.size(), 5u);
    // Alphas are listed top-most level first; features largest first.
    for (std::size_t l = 0; l < 5; ++l) want += alphas[4 - l] * mean_abs(fr[l], fi[l]);
  }
  EXPECT_NEAR(region_loss(crops, img, rec, fe, alphas).item(), want, 1e-12);
}

TEST(RegionLoss, AdditiveOverDisjointCropSetsAndZeroWhenEqual) {
  const FeatureExtractor fe(CropRole::object, 78);
  CounterRng rng(42);
  const auto img = Tensor::uniform({1, 3, 32, 32}, rng, -1.0, 1.0);
  const auto rec = Tensor::uniform({1, 3, 32, 32}, rng, -1.0, 1.0);
  const auto alphas = object_layer_weights();
  const CropSet a{{{0, 0, 10, 10}, CropRole::object, 0}};
  const CropSet b{{{20, 18, 7, 12}, CropRole::object, 0}, {{5, 5, 3, 3}, CropRole::object, 0}};
  CropSet ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const double la = region_loss(a, img, rec, fe, alphas).item();
  const double lb = region_loss(b, img, rec, fe, alphas).item();
  EXPECT_GT(la, 0.0);
  EXPECT_NEAR(region_loss(ab, img, rec, fe, alphas).item(), la + lb, 1e-12);
  EXPECT_EQ(region_loss(ab, img, img, fe, alphas).item(), 0.0);
  EXPECT_EQ(region_loss({}, img, rec, fe, alphas).item(), 0.0);
}

TEST(ImgTrainer, EncoderReceivesGradients) {
  VqImgModel model(small_config());
  CounterRng rng(43);
  const auto x = Tensor::uniform({1, 3, 32, 32}, rng, -1.0, 1.0);
  const auto z = model.encode_latents(x);
  auto q = mas::vq::quantize(mas::vqseg::to_rows(z), model.codebook());
  const auto rec = model.decode(mas::vqseg::from_rows(q.quantized, 1, 8, 8));
  nd::add(nd::l1(rec, x), q.commitment_loss).backward();
  for (const auto& p : model.params().params()) {
    if (p.name.rfind("vqimg.enc", 0) != 0) continue;
    const auto g = p.tensor.grad();
    ASSERT_FALSE(g.empty()) << p.name;
    EXPECT_GT(std::accumulate(g.begin(), g.end(), 0.0, [](double s, double v) { return s + std::abs(v); }), 0.0) << p.name;
  }
}

TEST(ImgTrainer, EmptyBatchIsAnError) {
  VqImgModel model(small_config());
  const FeatureExtractor ff(CropRole::face, 1), fo(CropRole::object, 2);
  ImgTrainer t(model, ff, fo, {}, {});
  EXPECT_THROW(t.step({}), mas::Error);
}

// One image, trained alone, must reconstruct to a mean absolute error under
// 0.05 in [-1, 1] units.
TEST(ImgTrainer, OverfitsSingleImage) {
  VqImgModel model(small_config());
  const FeatureExtractor ff(CropRole::face, 1), fo(CropRole::object, 2);
  mas::ndgrad::AdamConfig adam;
  adam.lr = 3e-3;
  ImgTrainer trainer(model, ff, fo, adam, {});
  mas::harness::SynthSpec spec;
  spec.person_probability = 1.0;
  const auto s = mas::harness::synth_generate(spec, 1, 11);
  std::vector<mas::io::Image> images{s[0].image};
  CounterRng rng(44);
  trainer.seed_codebook(images, rng);
  const ImgSample sample{&s[0].image, &s[0].scene};
  int steps = 0;
  double mae = reconstruction_l1(images, model);
  const double before = mae;
  while (steps < 1500 && mae >= 0.05) {
    trainer.step(std::span<const ImgSample>(&sample, 1));
    if (++steps % 50 == 0) mae = reconstruction_l1(images, model);
  }
  EXPECT_LT(mae, 0.05) << "after " << steps << " steps, from " << before;
  EXPECT_LT(face_crop_l1(std::span<const ImgSample>(&sample, 1), model), 0.1);
}

}  // namespace
