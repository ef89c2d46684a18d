#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "mas/error.hpp"
#include "mas/sbt/sbt.hpp"

namespace mas::sbt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ndgrad::Buffer;

// out = in * W + b for W stored [in, out] row-major.
void affine(const nn::Linear& l, const Buffer& in, Buffer& out) {
  const auto w = l.weight.values();
  const auto rows = static_cast<Eigen::Index>(l.weight.dim(0)), cols = static_cast<Eigen::Index>(l.weight.dim(1));
  out.resize(static_cast<std::size_t>(cols));
  Eigen::Map<const RowMat> wm(w.data(), rows, cols);
  Eigen::Map<const RowVec> x(in.data(), rows);
  Eigen::Map<const RowVec> b(l.bias.values().data(), cols);
  Eigen::Map<RowVec> y(out.data(), cols);
  y.noalias() = x * wm;
  y += b;
}

void layernorm(const nn::LayerNorm& n, const Buffer& in, Buffer& out) {
  const std::size_t w = in.size();
  const auto g = n.gain.values(), b = n.bias.values();
  double mu = 0.0;
  for (double v : in) mu += v;
  mu /= static_cast<double>(w);
  double var = 0.0;
  for (double v : in) var += (v - mu) * (v - mu);
  var /= static_cast<double>(w);
  const double is = 1.0 / std::sqrt(var + 1e-5);
  out.resize(w);
  for (std::size_t j = 0; j < w; ++j) out[j] = (in[j] - mu) * is * g[j] + b[j];
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;
  constexpr double k = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
}

}  // namespace

IncrementalDecoder::IncrementalDecoder(const SbtModel& model) : model_(model) { reset(); }

void IncrementalDecoder::reset() {
  const auto& c = model_.config();
  pos_ = 0;
  keys_.assign(c.layers, Buffer(c.length() * c.dim));
  values_.assign(c.layers, Buffer(c.length() * c.dim));
  logits_.clear();
}

std::span<const double> IncrementalDecoder::push(int token) {
  const auto& c = model_.config();
  if (pos_ >= c.length()) throw RangeError("decoder: sequence already complete");
  const Segment seg = c.segment_of(pos_);
  if (token < 0 || static_cast<std::size_t>(token) >= c.vocab(seg)) {
    throw RangeError("decoder: token " + std::to_string(token) + " at position " + std::to_string(pos_) +
                     " outside vocabulary of " + std::to_string(c.vocab(seg)));
  }
  const std::size_t d = c.dim, hd = d / c.heads, t = pos_;
  const std::size_t uid = c.unified_offset(seg) + static_cast<std::size_t>(token);
  const auto tok = model_.token_embedding().values().subspan(uid * d, d);
  const auto pos = model_.position_embedding().values().subspan(t * d, d);
  const auto sg = model_.segment_embedding().values().subspan(static_cast<std::size_t>(seg) * d, d);
  x_.resize(d);
  for (std::size_t j = 0; j < d; ++j) x_[j] = tok[j] + pos[j] + sg[j];

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Buffer scores(t + 1), tmp;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const Block& blk = model_.blocks()[l];
    layernorm(blk.ln1, x_, h_);
    affine(blk.qkv, h_, qkv_);
    std::copy_n(qkv_.begin() + static_cast<long>(d), d, keys_[l].begin() + static_cast<long>(t * d));
    std::copy_n(qkv_.begin() + static_cast<long>(2 * d), d, values_[l].begin() + static_cast<long>(t * d));
    att_.assign(d, 0.0);
    for (std::size_t h = 0; h < c.heads; ++h) {
      const double* q = qkv_.data() + h * hd;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= t; ++j) {
        const double* k = keys_[l].data() + j * d + h * hd;
        double s = 0.0;
        for (std::size_t e = 0; e < hd; ++e) s += q[e] * k[e];
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= t; ++j) z += (scores[j] = std::exp(scores[j] - mx));
      double* o = att_.data() + h * hd;
      for (std::size_t j = 0; j <= t; ++j) {
        const double p = scores[j] / z;
        const double* v = values_[l].data() + j * d + h * hd;
        for (std::size_t e = 0; e < hd; ++e) o[e] += p * v[e];
      }
    }
    affine(blk.proj, att_, tmp);
    for (std::size_t j = 0; j < d; ++j) x_[j] += tmp[j];
    layernorm(blk.ln2, x_, h_);
    affine(blk.fc1, h_, mlp_);
    for (double& v : mlp_) v = gelu(v);
    affine(blk.fc2, mlp_, tmp);
    for (std::size_t j = 0; j < d; ++j) x_[j] += tmp[j];
  }
  ++pos_;
  if (pos_ == c.length()) {
    logits_.clear();
    return {};
  }
  layernorm(model_.final_norm(), x_, h_);
  affine(model_.head(c.segment_of(pos_)), h_, logits_);
  return logits_;
}

}  // namespace mas::sbt
