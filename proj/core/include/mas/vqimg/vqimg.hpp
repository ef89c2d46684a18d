#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mas/io/image.hpp"
#include "mas/ndgrad/adam.hpp"
#include "mas/nn.hpp"
#include "mas/scene/scene.hpp"
#include "mas/vq/codebook.hpp"
#include "mas/vqseg/vqseg.hpp"

namespace mas::vqimg {

using ndgrad::Box;
using ndgrad::Tensor;
using vqseg::TokenGrid;

enum class ResolutionMode { base, doubled };

enum class CropRole { face, object };

/// Fixed random-weight conv pyramid. Level 0 is the input resolution; each
/// further level halves it, down to 1x1 for the default 16x16 input.
class FeatureExtractor {
 public:
  FeatureExtractor(CropRole role, std::uint64_t seed, std::size_t input_size = 16, std::size_t levels = 5);

  /// [N, 3, S, S] -> one activation tensor per level, largest first.
  std::vector<Tensor> features(const Tensor& crops) const;
  std::size_t levels() const { return convs_.size(); }
  std::size_t input_size() const { return input_size_; }
  CropRole role() const { return role_; }

 private:
  CropRole role_;
  std::size_t input_size_;
  nn::ParamStore params_;
  std::vector<nn::Conv> convs_;
};

/// Per-level face weights, listed from the top-most (1x1) level down to the
/// largest: {a1, 0.01 a2, 0.1 a2, 0.2 a2, 0.02 a2}.
std::vector<double> face_layer_weights(double alpha_f1 = 0.1, double alpha_f2 = 0.25);
/// Uniform 1/L.
std::vector<double> object_layer_weights(std::size_t levels = 5);

struct Crop {
  Box box;
  CropRole role = CropRole::face;
  std::size_t image = 0;  // batch index
};

using CropSet = std::vector<Crop>;

/// Tight boxes of the 4-connected components of face-group pixels, largest
/// box area first (ties by top-left position), at most k_f. Coordinates are
/// in scene pixels.
CropSet locate_faces(const scene::SceneMap& scene, std::size_t k_f);
/// Tight boxes of each nonzero panoptic instance ("things"), largest first,
/// at most k_o.
CropSet locate_objects(const scene::SceneMap& scene, std::size_t k_o);
/// Rescales scene-space boxes by an integer factor (image / scene size).
CropSet scale_crops(CropSet crops, std::size_t factor, std::size_t image_index);

/// Sum over crops and levels of alpha[l] * mean |FE_l(crop(recon)) - FE_l(crop(image))|.
/// `alphas` is ordered top-most level first; images are [B, 3, H, W]. The
/// ground-truth branch is treated as a constant. Empty crops contribute 0.
Tensor region_loss(const CropSet& crops, const Tensor& image, const Tensor& reconstruction,
                   const FeatureExtractor& fe, std::span<const double> alphas);
inline Tensor face_loss(const CropSet& crops, const Tensor& image, const Tensor& reconstruction,
                        const FeatureExtractor& fe, std::span<const double> alphas) {
  return region_loss(crops, image, reconstruction, fe, alphas);
}
inline Tensor object_loss(const CropSet& crops, const Tensor& image, const Tensor& reconstruction,
                          const FeatureExtractor& vgg, std::span<const double> alphas) {
  return region_loss(crops, image, reconstruction, vgg, alphas);
}

struct VqImgConfig {
  ResolutionMode mode = ResolutionMode::base;
  std::size_t base_channels = 32;
  /// One entry per resolution stage; base mode {1,1,2}, doubled {1,1,2,2}.
  std::vector<std::size_t> multipliers = {1, 1, 2};
  std::size_t latent_dim = 32;
  std::size_t codebook_size = 512;
  double beta_commit = 0.25;
  std::uint64_t seed = 2;

  /// Same stages as `base` with one extra stride-2 stage.
  static VqImgConfig doubled_from(const VqImgConfig& base);
  std::size_t stride() const { return std::size_t{1} << (multipliers.size() - 1); }
};

/// Image tokenizer. Encoder: input conv, one stride-2 conv per extra stage,
/// output conv. Decoder mirrors it with nearest upsampling and a tanh output.
class VqImgModel {
 public:
  explicit VqImgModel(const VqImgConfig& config);
  VqImgModel(const VqImgModel&) = delete;
  VqImgModel& operator=(const VqImgModel&) = delete;

  /// [B, 3, H, W] -> [B, latent, H/stride, W/stride]
  Tensor encode_latents(const Tensor& images) const;
  /// [B, latent, h, w] -> [B, 3, h*stride, w*stride] in [-1, 1]
  Tensor decode(const Tensor& latents) const;

  const VqImgConfig& config() const { return config_; }
  const vq::Codebook& codebook() const { return book_; }
  vq::Codebook& codebook() { return book_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::size_t downsample_layers() const { return down_.size(); }
  std::size_t upsample_layers() const { return up_.size(); }

 private:
  VqImgConfig config_;
  nn::ParamStore params_;
  nn::Conv enc_in_, enc_out_, dec_in_, dec_out_;
  std::vector<nn::Conv> down_, up_;
  vq::Codebook book_;
};

/// [B, 3, H, W] tensor of planar [-1, 1] images.
Tensor stack_images(std::span<const io::Image> images);

TokenGrid img_encode(const Tensor& image, const VqImgModel& model);
std::vector<TokenGrid> img_encode(std::span<const io::Image> images, const VqImgModel& model);
/// [3, H, W] values in [-1, 1].
Tensor img_decode(const TokenGrid& tokens, const VqImgModel& model);
io::Image img_decode_image(const TokenGrid& tokens, const VqImgModel& model);

struct RegionLossConfig {
  double face_weight = 1.0;  // 0 disables the face term
  double object_weight = 1.0;
  std::size_t k_f = 4;
  std::size_t k_o = 8;
  std::vector<double> face_alphas = face_layer_weights();
  std::vector<double> object_alphas = object_layer_weights();
};

struct ImgLossReport {
  double total = 0.0;
  double l1 = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double face = 0.0;
  double object = 0.0;
};

struct ImgSample {
  const io::Image* image = nullptr;
  const scene::SceneMap* scene = nullptr;
};

class ImgTrainer {
 public:
  ImgTrainer(VqImgModel& model, const FeatureExtractor& face_fe, const FeatureExtractor& object_fe,
             const ndgrad::AdamConfig& adam, RegionLossConfig regions);

  void seed_codebook(std::span<const io::Image> images, CounterRng& rng);
  /// One Adam step on L1 + codebook + commitment + face + object terms. Region
  /// terms are averaged over the batch.
  ImgLossReport step(std::span<const ImgSample> batch);
  long steps_taken() const { return step_; }

 private:
  VqImgModel& model_;
  const FeatureExtractor& face_fe_;
  const FeatureExtractor& object_fe_;
  ndgrad::Adam adam_;
  RegionLossConfig regions_;
  long step_ = 0;
};

/// Mean |recon - image| (in [-1, 1] units) over all pixels of the face boxes
/// of each sample after encode/decode; 0 if there are no faces.
double face_crop_l1(std::span<const ImgSample> samples, const VqImgModel& model, std::size_t k_f = 4);
/// Mean |recon - image| over whole images.
double reconstruction_l1(std::span<const io::Image> images, const VqImgModel& model);

}  // namespace mas::vqimg
