#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"

namespace mas::ndgrad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ImplPtr = std::shared_ptr<TensorImpl>;

struct ConvGeometry {
  std::size_t batch, channels, height, width, out_channels, out_h, out_w, stride;
  std::size_t patch() const { return channels * 9; }
  std::size_t positions() const { return out_h * out_w; }
};

// cols is [C*9, OH*OW] for one image.
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
        double* row = cols + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ky - 1;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = plane + iy * w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + kx - 1;
            dst[ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
        const double* row =
            cols + ((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ky - 1;
          if (iy < 0 || iy >= h) continue;
          double* dst = plane + iy * w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride) + kx - 1;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride) {
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + to_string(x.shape()));
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3 || weight.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " must be [O," + std::to_string(x.dim(1)) +
                     ",3,3] for input " + to_string(x.shape()));
  }
  const bool has_bias = bias.numel() > 0;
  if (has_bias && bias.numel() != weight.dim(0)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(weight.dim(0)) +
                     " output channels");
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = weight.dim(0);
  g.stride = static_cast<std::size_t>(stride);
  g.out_h = (g.height - 1) / g.stride + 1;
  g.out_w = (g.width - 1) / g.stride + 1;

  const std::size_t in_plane = g.channels * g.height * g.width;
  const std::size_t out_plane = g.out_channels * g.positions();
  const std::size_t col_size = g.patch() * g.positions();
  Buffer cols(g.batch * col_size);
  Buffer out(g.batch * out_plane);
  ConstMap wmat(weight.values().data(), g.out_channels, g.patch());
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x.values().data() + b * in_plane, g, cols.data() + b * col_size);
    MutMap o(out.data() + b * out_plane, g.out_channels, g.positions());
    o.noalias() = wmat * ConstMap(cols.data() + b * col_size, g.patch(), g.positions());
    if (has_bias) {
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) o.row(oc).array() += bias.values()[oc];
    }
  }

  ImplPtr xi = x.impl(), wi = weight.impl(), bi = bias.impl();
  std::vector<ImplPtr> inputs{xi, wi};
  if (has_bias) inputs.push_back(bi);
  return detail::make_result(
      "conv2d", {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), std::move(inputs),
      [xi, wi, bi, has_bias, g, in_plane, out_plane, col_size, cols = std::move(cols)](TensorImpl& o) {
        ConstMap wmat(wi->values.data(), g.out_channels, g.patch());
        Buffer dcols(xi->requires_grad ? col_size : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          ConstMap gout(o.grad.data() + b * out_plane, g.out_channels, g.positions());
          if (wi->requires_grad) {
            MutMap(wi->grad_buffer().data(), g.out_channels, g.patch()).noalias() +=
                gout * ConstMap(cols.data() + b * col_size, g.patch(), g.positions()).transpose();
          }
          if (has_bias && bi->requires_grad) {
            auto gb = bi->grad_buffer();
            for (std::size_t oc = 0; oc < g.out_channels; ++oc) gb[oc] += gout.row(oc).sum();
          }
          if (xi->requires_grad) {
            MutMap(dcols.data(), g.patch(), g.positions()).noalias() = wmat.transpose() * gout;
            col2im_add(dcols.data(), g, xi->grad_buffer().data() + b * in_plane);
          }
        }
      });
}

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample2x: input must be [B,C,H,W], got " + to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto xv = x.values();
  Buffer out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
      }
    }
  }
  ImplPtr xi = x.impl();
  return detail::make_result("upsample2x", {x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {xi},
                             [xi, planes, h, w](TensorImpl& o) {
                               auto gx = xi->grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t y = 0; y < 2 * h; ++y) {
                                   for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                                     gx[(p * h + y / 2) * w + xx / 2] += o.grad[(p * 2 * h + y) * 2 * w + xx];
                                   }
                                 }
                               }
                             });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor crop_resize(const Tensor& x, std::size_t batch, const Box& box, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("crop_resize: input must be [B,C,H,W], got " + to_string(x.shape()));
  if (batch >= x.dim(0) || box.h == 0 || box.w == 0 || box.y + box.h > x.dim(2) || box.x + box.w > x.dim(3) ||
      out_h == 0 || out_w == 0) {
    throw ShapeError("crop_resize: box (" + std::to_string(box.y) + "," + std::to_string(box.x) + "," +
                     std::to_string(box.h) + "," + std::to_string(box.w) + ") of image " + std::to_string(batch) +
                     " is empty or outside " + to_string(x.shape()));
  }
  const std::size_t channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const auto ty = bilinear_taps(box.h, out_h);
  const auto tx = bilinear_taps(box.w, out_w);
  const double* base = x.values().data() + batch * channels * height * width;
  Buffer out(channels * out_h * out_w);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = base + c * height * width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double* r0 = plane + (box.y + ty[oy].i0) * width + box.x;
      const double* r1 = plane + (box.y + ty[oy].i1) * width + box.x;
      const double wy = ty[oy].w1;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& t = tx[ox];
        const double top = (1.0 - t.w1) * r0[t.i0] + t.w1 * r0[t.i1];
        const double bot = (1.0 - t.w1) * r1[t.i0] + t.w1 * r1[t.i1];
        out[(c * out_h + oy) * out_w + ox] = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  ImplPtr xi = x.impl();
  return detail::make_result(
      "crop_resize", {1, channels, out_h, out_w}, std::move(out), {xi},
      [xi, batch, box, channels, height, width, out_h, out_w, ty, tx](TensorImpl& o) {
        auto gx = xi->grad_buffer();
        double* base = gx.data() + batch * channels * height * width;
        for (std::size_t c = 0; c < channels; ++c) {
          double* plane = base + c * height * width;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            double* r0 = plane + (box.y + ty[oy].i0) * width + box.x;
            double* r1 = plane + (box.y + ty[oy].i1) * width + box.x;
            const double wy = ty[oy].w1;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const Tap& t = tx[ox];
              const double g = o.grad[(c * out_h + oy) * out_w + ox];
              r0[t.i0] += g * (1.0 - wy) * (1.0 - t.w1);
              r0[t.i1] += g * (1.0 - wy) * t.w1;
              r1[t.i0] += g * wy * (1.0 - t.w1);
              r1[t.i1] += g * wy * t.w1;
            }
          }
        }
      });
}

}  // namespace mas::ndgrad
