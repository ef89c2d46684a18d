#include "mas/vqimg/vqimg.hpp"

#include <cmath>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"

namespace mas::vqimg {

namespace ops = ndgrad;

VqImgConfig VqImgConfig::doubled_from(const VqImgConfig& base) {
  VqImgConfig c = base;
  c.mode = ResolutionMode::doubled;
  c.multipliers.push_back(base.multipliers.back());
  return c;
}

VqImgModel::VqImgModel(const VqImgConfig& config) : config_(config) {
  if (config.multipliers.empty() || config.base_channels == 0 || config.latent_dim == 0) {
    throw RangeError("vqimg: empty multiplier list or zero width");
  }
  CounterRng rng(config.seed);
  std::vector<std::size_t> ch;
  for (auto m : config.multipliers) ch.push_back(config.base_channels * m);
  const std::size_t stages = ch.size();
  enc_in_ = nn::make_conv(params_, "vqimg.enc.in", 3, ch[0], 1, rng);
  for (std::size_t i = 1; i < stages; ++i) {
    down_.push_back(nn::make_conv(params_, "vqimg.enc.down" + std::to_string(i), ch[i - 1], ch[i], 2, rng));
  }
  enc_out_ = nn::make_conv(params_, "vqimg.enc.out", ch.back(), config.latent_dim, 1, rng);
  dec_in_ = nn::make_conv(params_, "vqimg.dec.in", config.latent_dim, ch.back(), 1, rng);
  for (std::size_t i = stages - 1; i >= 1; --i) {
    up_.push_back(nn::make_conv(params_, "vqimg.dec.up" + std::to_string(i), ch[i], ch[i - 1], 1, rng));
  }
  dec_out_ = nn::make_conv(params_, "vqimg.dec.out", ch[0], 3, 1, rng);
  book_ = vq::Codebook(params_, "vqimg.codebook", config.codebook_size, config.latent_dim, rng);
}

Tensor VqImgModel::encode_latents(const Tensor& images) const {
  const std::size_t s = config_.stride();
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("vqimg encode: expected [B,3,H,W], got " + ops::to_string(images.shape()));
  }
  if (images.dim(2) % s != 0 || images.dim(3) % s != 0) {
    throw ShapeError("vqimg encode: extents " + ops::to_string(images.shape()) + " not divisible by stride " +
                     std::to_string(s));
  }
  Tensor x = ops::relu(enc_in_(images));
  for (const auto& d : down_) x = ops::relu(d(x));
  return enc_out_(x);
}

Tensor VqImgModel::decode(const Tensor& latents) const {
  if (latents.rank() != 4 || latents.dim(1) != config_.latent_dim) {
    throw ShapeError("vqimg decode: expected [B," + std::to_string(config_.latent_dim) + ",h,w], got " +
                     ops::to_string(latents.shape()));
  }
  Tensor x = ops::relu(dec_in_(latents));
  for (const auto& u : up_) x = ops::relu(u(ops::upsample2x(x)));
  return ops::tanh(dec_out_(x));
}

Tensor stack_images(std::span<const io::Image> images) {
  if (images.empty()) throw RangeError("stack_images: empty batch");
  const int h = images.front().height, w = images.front().width;
  std::vector<double> values;
  values.reserve(images.size() * 3 * static_cast<std::size_t>(h * w));
  for (const auto& im : images) {
    if (im.height != h || im.width != w) throw ShapeError("stack_images: images differ in size");
    io::append_planar(im, values);
  }
  return Tensor::from_values({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                             std::move(values));
}

namespace {

std::vector<int> encode_indices(const Tensor& images, const VqImgModel& model) {
  ndgrad::NoGradGuard guard;
  Tensor rows = vqseg::to_rows(model.encode_latents(images));
  std::vector<int> idx(rows.dim(0));
  const std::size_t d = rows.dim(1);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = vq::nearest(rows.values().subspan(i * d, d), model.codebook());
  return idx;
}

void check_grid(const TokenGrid& t) {
  if (t.height <= 0 || t.width <= 0 ||
      t.tokens.size() != static_cast<std::size_t>(t.height) * static_cast<std::size_t>(t.width)) {
    throw ShapeError("img_decode: token grid " + std::to_string(t.height) + "x" + std::to_string(t.width) +
                     " holds " + std::to_string(t.tokens.size()) + " tokens");
  }
}

}  // namespace

TokenGrid img_encode(const Tensor& image, const VqImgModel& model) {
  if (image.rank() != 3) throw ShapeError("img_encode: expected [3,H,W], got " + ops::to_string(image.shape()));
  const std::size_t s = model.config().stride();
  Tensor batch = ops::reshape(image.detach(), {1, image.dim(0), image.dim(1), image.dim(2)});
  TokenGrid g;
  g.tokens = encode_indices(batch, model);
  g.height = static_cast<int>(image.dim(1) / s);
  g.width = static_cast<int>(image.dim(2) / s);
  return g;
}

std::vector<TokenGrid> img_encode(std::span<const io::Image> images, const VqImgModel& model) {
  constexpr std::size_t kChunk = 64;
  const auto s = static_cast<int>(model.config().stride());
  std::vector<TokenGrid> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    auto part = images.subspan(start, std::min(kChunk, images.size() - start));
    const auto idx = encode_indices(stack_images(part), model);
    const int gh = part.front().height / s, gw = part.front().width / s;
    const std::size_t per = static_cast<std::size_t>(gh * gw);
    for (std::size_t b = 0; b < part.size(); ++b) {
      out.push_back({gh, gw, std::vector<int>(idx.begin() + static_cast<long>(b * per),
                                              idx.begin() + static_cast<long>((b + 1) * per))});
    }
  }
  return out;
}

Tensor img_decode(const TokenGrid& tokens, const VqImgModel& model) {
  check_grid(tokens);
  ndgrad::NoGradGuard guard;
  Tensor q = vqseg::from_rows(vq::lookup(tokens.tokens, model.codebook()), 1, static_cast<std::size_t>(tokens.height),
                              static_cast<std::size_t>(tokens.width));
  Tensor x = model.decode(q);
  return ops::reshape(x, {3, x.dim(2), x.dim(3)});
}

io::Image img_decode_image(const TokenGrid& tokens, const VqImgModel& model) {
  Tensor x = img_decode(tokens, model);
  return io::from_planar(x.values(), static_cast<int>(x.dim(1)), static_cast<int>(x.dim(2)));
}

ImgTrainer::ImgTrainer(VqImgModel& model, const FeatureExtractor& face_fe, const FeatureExtractor& object_fe,
                       const ndgrad::AdamConfig& adam, RegionLossConfig regions)
    : model_(model), face_fe_(face_fe), object_fe_(object_fe), adam_(adam), regions_(std::move(regions)) {}

void ImgTrainer::seed_codebook(std::span<const io::Image> images, CounterRng& rng) {
  ndgrad::NoGradGuard guard;
  Tensor rows = vqseg::to_rows(model_.encode_latents(stack_images(images)));
  model_.codebook().seed_from(rows.values(), rng);
}

namespace {

std::size_t scene_factor(const io::Image& image, const scene::SceneMap& scene) {
  if (scene.height <= 0 || image.height % scene.height != 0 || image.width % scene.width != 0 ||
      image.height / scene.height != image.width / scene.width) {
    throw ShapeError("vqimg: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " is not an integer multiple of scene " + std::to_string(scene.height) + "x" +
                     std::to_string(scene.width));
  }
  return static_cast<std::size_t>(image.height / scene.height);
}

}  // namespace

ImgLossReport ImgTrainer::step(std::span<const ImgSample> batch) {
  if (batch.empty()) throw RangeError("img_train_step: empty batch");
  std::vector<io::Image> images;
  images.reserve(batch.size());
  CropSet faces, objects;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    images.push_back(*batch[b].image);
    if (batch[b].scene == nullptr) continue;
    const auto f = scene_factor(*batch[b].image, *batch[b].scene);
    for (auto& c : scale_crops(locate_faces(*batch[b].scene, regions_.k_f), f, b)) faces.push_back(c);
    for (auto& c : scale_crops(locate_objects(*batch[b].scene, regions_.k_o), f, b)) objects.push_back(c);
  }
  Tensor x = stack_images(images);
  Tensor latents = model_.encode_latents(x);
  const std::size_t n = latents.dim(0), gh = latents.dim(2), gw = latents.dim(3);
  auto q = vq::quantize(vqseg::to_rows(latents), model_.codebook(), model_.config().beta_commit);
  Tensor recon = model_.decode(vqseg::from_rows(q.quantized, n, gh, gw));
  Tensor rec = ops::l1(recon, x);
  Tensor total = ops::add(ops::add(rec, q.codebook_loss), q.commitment_loss);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ImgLossReport r;
  if (regions_.face_weight != 0.0 && !faces.empty()) {
    Tensor f = face_loss(faces, x, recon, face_fe_, regions_.face_alphas);
    r.face = f.item() * inv_b;
    total = ops::add(total, ops::scale(f, regions_.face_weight * inv_b));
  }
  if (regions_.object_weight != 0.0 && !objects.empty()) {
    Tensor o = object_loss(objects, x, recon, object_fe_, regions_.object_alphas);
    r.object = o.item() * inv_b;
    total = ops::add(total, ops::scale(o, regions_.object_weight * inv_b));
  }
  total.backward();
  adam_.step(model_.params().params(), ++step_);
  total.release_graph();
  r.total = total.item();
  r.l1 = rec.item();
  r.codebook = q.codebook_loss.item();
  r.commitment = q.commitment_loss.item();
  return r;
}

double face_crop_l1(std::span<const ImgSample> samples, const VqImgModel& model, std::size_t k_f) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const auto crops = scale_crops(locate_faces(*s.scene, k_f), scene_factor(*s.image, *s.scene), 0);
    if (crops.empty()) continue;
    Tensor truth = io::to_tensor(*s.image);
    Tensor recon = img_decode(img_encode(truth, model), model);
    const auto h = static_cast<std::size_t>(s.image->height), w = static_cast<std::size_t>(s.image->width);
    for (const auto& c : crops) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t y = c.box.y; y < c.box.y + c.box.h; ++y) {
          for (std::size_t x = c.box.x; x < c.box.x + c.box.w; ++x) {
            const std::size_t i = (ch * h + y) * w + x;
            sum += std::abs(recon.at(i) - truth.at(i));
            ++count;
          }
        }
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double reconstruction_l1(std::span<const io::Image> images, const VqImgModel& model) {
  double sum = 0.0;
  std::size_t count = 0;
  const auto grids = img_encode(images, model);
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tensor truth = io::to_tensor(images[i]);
    Tensor recon = img_decode(grids[i], model);
    for (std::size_t k = 0; k < truth.numel(); ++k) sum += std::abs(recon.at(k) - truth.at(k));
    count += truth.numel();
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace mas::vqimg
