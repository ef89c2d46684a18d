#include <Eigen/Dense>
#include <cmath>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"

namespace mas::ndgrad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HeadLayout {
  std::size_t batch, steps, width, heads, head_dim;
  // Element (b, t, part, h, j) of the packed [B, T, 3D] input.
  std::size_t index(std::size_t b, std::size_t t, std::size_t part, std::size_t h, std::size_t j) const {
    return (b * steps + t) * 3 * width + part * width + h * head_dim + j;
  }
};

void gather(const Buffer& src, const HeadLayout& l, std::size_t b, std::size_t h, std::size_t part,
            RowMat& dst) {
  dst.resize(static_cast<Eigen::Index>(l.steps), static_cast<Eigen::Index>(l.head_dim));
  for (std::size_t t = 0; t < l.steps; ++t) {
    for (std::size_t j = 0; j < l.head_dim; ++j) dst(t, j) = src[l.index(b, t, part, h, j)];
  }
}

}  // namespace

Tensor causal_attention(const Tensor& qkv, std::size_t heads) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) {
    throw ShapeError("causal_attention: input must be [B,T,3D], got " + to_string(qkv.shape()));
  }
  const std::size_t width = qkv.dim(2) / 3;
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("causal_attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(width));
  }
  const HeadLayout l{qkv.dim(0), qkv.dim(1), width, heads, width / heads};
  const double scale = 1.0 / std::sqrt(static_cast<double>(l.head_dim));
  const std::size_t tt = l.steps * l.steps;

  const Buffer& in = qkv.impl()->values;
  Buffer out(l.batch * l.steps * width);
  Buffer probs(l.batch * heads * tt);
  RowMat q, k, v, s, o;
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      gather(in, l, b, h, 0, q);
      gather(in, l, b, h, 1, k);
      gather(in, l, b, h, 2, v);
      s.noalias() = q * k.transpose();
      double* p = probs.data() + (b * heads + h) * tt;
      for (std::size_t i = 0; i < l.steps; ++i) {
        // Masked entries stay exactly zero, so later positions cannot leak.
        const auto n = static_cast<Eigen::Index>(i + 1);
        Eigen::Map<Eigen::ArrayXd> row(p + i * l.steps, static_cast<Eigen::Index>(l.steps));
        const auto logits = s.row(static_cast<Eigen::Index>(i)).head(n).array() * scale;
        row.head(n) = (logits - logits.maxCoeff()).exp();
        row.head(n) /= row.head(n).sum();
        row.tail(static_cast<Eigen::Index>(l.steps) - n).setZero();
      }
      Eigen::Map<const RowMat> pm(p, l.steps, l.steps);
      o.noalias() = pm * v;
      for (std::size_t t = 0; t < l.steps; ++t) {
        for (std::size_t j = 0; j < l.head_dim; ++j) out[(b * l.steps + t) * width + h * l.head_dim + j] = o(t, j);
      }
    }
  }

  auto qi = qkv.impl();
  return detail::make_result(
      "causal_attention", {l.batch, l.steps, width}, std::move(out), {qi},
      [qi, l, scale, tt, probs = std::move(probs)](TensorImpl& res) {
        auto g = qi->grad_buffer();
        RowMat q, k, v, dout, dv, dp, ds, dq, dk;
        for (std::size_t b = 0; b < l.batch; ++b) {
          for (std::size_t h = 0; h < l.heads; ++h) {
            gather(qi->values, l, b, h, 0, q);
            gather(qi->values, l, b, h, 1, k);
            gather(qi->values, l, b, h, 2, v);
            dout.resize(static_cast<Eigen::Index>(l.steps), static_cast<Eigen::Index>(l.head_dim));
            for (std::size_t t = 0; t < l.steps; ++t) {
              for (std::size_t j = 0; j < l.head_dim; ++j) {
                dout(t, j) = res.grad[(b * l.steps + t) * l.width + h * l.head_dim + j];
              }
            }
            Eigen::Map<const RowMat> pm(probs.data() + (b * l.heads + h) * tt, l.steps, l.steps);
            dv.noalias() = pm.transpose() * dout;
            dp.noalias() = dout * v.transpose();
            ds.resize(dp.rows(), dp.cols());
            for (std::size_t i = 0; i < l.steps; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) dot += pm(i, j) * dp(i, j);
              for (std::size_t j = 0; j < l.steps; ++j) ds(i, j) = j <= i ? pm(i, j) * (dp(i, j) - dot) * scale : 0.0;
            }
            dq.noalias() = ds * k;
            dk.noalias() = ds.transpose() * q;
            for (std::size_t t = 0; t < l.steps; ++t) {
              for (std::size_t j = 0; j < l.head_dim; ++j) {
                g[l.index(b, t, 0, h, j)] += dq(t, j);
                g[l.index(b, t, 1, h, j)] += dk(t, j);
                g[l.index(b, t, 2, h, j)] += dv(t, j);
              }
            }
          }
        }
      });
}

}  // namespace mas::ndgrad
