#include <string>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/vqimg/vqimg.hpp"

namespace mas::vqimg {

namespace ops = ndgrad;

FeatureExtractor::FeatureExtractor(CropRole role, std::uint64_t seed, std::size_t input_size, std::size_t levels)
    : role_(role), input_size_(input_size) {
  if (levels == 0 || levels > 16) throw RangeError("feature extractor: level count must be in [1,16]");
  if (input_size % (std::size_t{1} << (levels - 1)) != 0) {
    throw RangeError("feature extractor: input " + std::to_string(input_size) + " cannot be halved " +
                     std::to_string(levels - 1) + " times");
  }
  CounterRng rng(seed);
  const std::string tag = role == CropRole::face ? "fe" : "vgg";
  std::size_t in = 3, out = 8;
  for (std::size_t l = 0; l < levels; ++l) {
    convs_.push_back(nn::make_conv(params_, tag + ".l" + std::to_string(l), in, out, l == 0 ? 1 : 2, rng, false));
    in = out;
    if (l % 2 == 0) out = std::min<std::size_t>(out * 2, 64);
  }
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& crops) const {
  if (crops.rank() != 4 || crops.dim(1) != 3 || crops.dim(2) != input_size_ || crops.dim(3) != input_size_) {
    throw ShapeError("feature extractor: expected [N,3," + std::to_string(input_size_) + "," +
                     std::to_string(input_size_) + "], got " + ops::to_string(crops.shape()));
  }
  std::vector<Tensor> out;
  out.reserve(convs_.size());
  Tensor x = crops;
  for (const auto& c : convs_) {
    x = ops::relu(c(x));
    out.push_back(x);
  }
  return out;
}

std::vector<double> face_layer_weights(double alpha_f1, double alpha_f2) {
  return {alpha_f1, alpha_f2 * 0.01, alpha_f2 * 0.1, alpha_f2 * 0.2, alpha_f2 * 0.02};
}

std::vector<double> object_layer_weights(std::size_t levels) {
  if (levels == 0) throw RangeError("object weights: zero levels");
  return std::vector<double>(levels, 1.0 / static_cast<double>(levels));
}

Tensor region_loss(const CropSet& crops, const Tensor& image, const Tensor& reconstruction, const FeatureExtractor& fe,
                   std::span<const double> alphas) {
  if (alphas.size() != fe.levels()) {
    throw RangeError("region loss: " + std::to_string(alphas.size()) + " layer weights for " +
                     std::to_string(fe.levels()) + " levels");
  }
  if (image.shape() != reconstruction.shape() || image.rank() != 4) {
    throw ShapeError("region loss: image " + ops::to_string(image.shape()) + " vs reconstruction " +
                     ops::to_string(reconstruction.shape()));
  }
  const std::size_t s = fe.input_size();
  std::vector<Tensor> truth, recon;
  Tensor fixed = image.detach();
  for (const auto& c : crops) {
    if (c.box.area() == 0) continue;
    if (c.image >= image.dim(0) || c.box.y + c.box.h > image.dim(2) || c.box.x + c.box.w > image.dim(3)) {
      throw RangeError("region loss: crop (" + std::to_string(c.box.y) + "," + std::to_string(c.box.x) + "," +
                       std::to_string(c.box.h) + "," + std::to_string(c.box.w) + ") of image " +
                       std::to_string(c.image) + " outside " + ops::to_string(image.shape()));
    }
    truth.push_back(ops::crop_resize(fixed, c.image, c.box, s, s));
    recon.push_back(ops::crop_resize(reconstruction, c.image, c.box, s, s));
  }
  if (truth.empty()) return Tensor::scalar(0.0);
  const double n = static_cast<double>(truth.size());
  std::vector<Tensor> truth_feats;
  {
    ndgrad::NoGradGuard guard;
    truth_feats = fe.features(ops::concat(truth, 0));
  }
  const auto recon_feats = fe.features(ops::concat(recon, 0));
  const std::size_t levels = fe.levels();
  Tensor total;
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t l = levels - 1 - i;  // alphas run from the top-most level down
    Tensor term = ops::scale(ops::l1(recon_feats[l], truth_feats[l]), alphas[i] * n);
    total = i == 0 ? term : ops::add(total, term);
  }
  return total;
}

}  // namespace mas::vqimg
