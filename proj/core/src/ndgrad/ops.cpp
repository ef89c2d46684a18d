#include "mas/ndgrad/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "mas/error.hpp"

namespace mas::ndgrad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using ImplPtr = std::shared_ptr<TensorImpl>;

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

// Right-operand index is i % b.numel() for the same-shape, scalar and
// leading-batch suffix cases alike.
void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return;
  if (b.numel() == 1 && b.rank() <= 1) return;
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() < as.size() && std::equal(bs.begin(), bs.end(), as.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    return;
  }
  shape_fail(op, "cannot broadcast " + to_string(bs) + " onto " + to_string(as));
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
  const auto av = a.values();
  Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  ImplPtr ai = a.impl();
  return detail::make_result(op, a.shape(), std::move(out), {ai}, [ai, dfdx](TensorImpl& o) {
    auto ga = ai->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * dfdx(ai->values[i], o.values[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcast("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t bn = bv.size();
  Buffer out(av.size());
  // b broadcasts as a suffix, so a is a whole number of bn-long blocks.
  for (std::size_t base = 0; base < av.size(); base += bn) {
    for (std::size_t j = 0; j < bn; ++j) out[base + j] = av[base + j] + bv[j];
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("add", a.shape(), std::move(out), {ai, bi}, [ai, bi, bn](TensorImpl& o) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t base = 0; base < o.grad.size(); base += bn) {
        for (std::size_t j = 0; j < bn; ++j) gb[j] += o.grad[base + j];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_broadcast("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t bn = bv.size();
  Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i % bn];
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("sub", a.shape(), std::move(out), {ai, bi}, [ai, bi, bn](TensorImpl& o) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % bn] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_broadcast("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t bn = bv.size();
  Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % bn];
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("mul", a.shape(), std::move(out), {ai, bi}, [ai, bi, bn](TensorImpl& o) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bi->values[i % bn];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % bn] += o.grad[i] * ai->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    shape_fail("matmul", "operands must have rank >= 2, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t k = a.shape().back();
  ImplPtr ai = a.impl(), bi = b.impl();

  if (b.rank() == 2) {
    if (b.dim(0) != k) {
      shape_fail("matmul", "inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t n = b.dim(1);
    const std::size_t m = a.numel() / std::max<std::size_t>(k, 1);
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(n);
    Buffer out(m * n);
    MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
    return detail::make_result("matmul", std::move(out_shape), std::move(out), {ai, bi}, [ai, bi, m, n, k](TensorImpl& o) {
      ConstMap g(o.grad.data(), m, n);
      if (ai->requires_grad) {
        MutMap(ai->grad_buffer().data(), m, k).noalias() += g * ConstMap(bi->values.data(), k, n).transpose();
      }
      if (bi->requires_grad) {
        MutMap(bi->grad_buffer().data(), k, n).noalias() += ConstMap(ai->values.data(), m, k).transpose() * g;
      }
    });
  }

  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || b.dim(1) != k) {
    shape_fail("matmul", "batched operands must be [B,M,K] x [B,K,N], got " + to_string(a.shape()) + " x " +
                             to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), n = b.dim(2);
  Buffer out(batch * m * n);
  for (std::size_t s = 0; s < batch; ++s) {
    MutMap(out.data() + s * m * n, m, n).noalias() =
        ConstMap(a.values().data() + s * m * k, m, k) * ConstMap(b.values().data() + s * k * n, k, n);
  }
  return detail::make_result("matmul", {batch, m, n}, std::move(out), {ai, bi}, [ai, bi, batch, m, n, k](TensorImpl& o) {
    for (std::size_t s = 0; s < batch; ++s) {
      ConstMap g(o.grad.data() + s * m * n, m, n);
      if (ai->requires_grad) {
        MutMap(ai->grad_buffer().data() + s * m * k, m, k).noalias() +=
            g * ConstMap(bi->values.data() + s * k * n, k, n).transpose();
      }
      if (bi->requires_grad) {
        MutMap(bi->grad_buffer().data() + s * k * n, k, n).noalias() +=
            ConstMap(ai->values.data() + s * m * k, m, k).transpose() * g;
      }
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double k = 0.044715;
  // tanh via exp keeps the whole thing in vectorised Eigen array code.
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  const auto av = a.values();
  const Eigen::Map<const Arr> x(av.data(), static_cast<Eigen::Index>(av.size()));
  auto t = std::make_shared<Arr>(1.0 - 2.0 / ((2.0 * c * (x + k * x.cube())).exp() + 1.0));
  Buffer out(av.size());
  Eigen::Map<Arr>(out.data(), static_cast<Eigen::Index>(out.size())) = 0.5 * x * (1.0 + *t);
  ImplPtr ai = a.impl();
  return detail::make_result("gelu", a.shape(), std::move(out), {ai}, [ai, t](TensorImpl& o) {
    const auto n = static_cast<Eigen::Index>(o.grad.size());
    const Eigen::Map<const Arr> xv(ai->values.data(), n), g(o.grad.data(), n);
    Eigen::Map<Arr>(ai->grad_buffer().data(), n) +=
        g * (0.5 * (1.0 + *t) + 0.5 * xv * (1.0 - t->square()) * c * (1.0 + 3.0 * k * xv.square()));
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) shape_fail("softmax", "needs at least one axis");
  const std::size_t width = a.shape().back();
  if (width == 0) shape_fail("softmax", "last axis is empty in " + to_string(a.shape()));
  const std::size_t rows = a.numel() / width;
  const auto av = a.values();
  Buffer out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[j] /= total;
  }
  ImplPtr ai = a.impl();
  return detail::make_result("softmax", a.shape(), std::move(out), {ai}, [ai, rows, width](TensorImpl& o) {
    auto ga = ai->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.values.data() + r * width;
      const double* g = o.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) shape_fail("layernorm", "needs at least one axis");
  const std::size_t width = x.shape().back();
  if (gain.numel() != width || bias.numel() != width) {
    shape_fail("layernorm", "gain/bias " + to_string(gain.shape()) + "/" + to_string(bias.shape()) +
                                " do not match last axis of " + to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / width;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  Buffer out(xv.size());
  Buffer xhat(xv.size());
  Buffer inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  ImplPtr xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  return detail::make_result(
      "layernorm", x.shape(), std::move(out), {xi, gi, bi},
      [xi, gi, bi, rows, width, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& o) {
        const double inv_w = 1.0 / static_cast<double>(width);
        Buffer dh(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = o.grad.data() + r * width;
          const double* h = xhat.data() + r * width;
          if (gi->requires_grad) {
            auto gg = gi->grad_buffer();
            for (std::size_t j = 0; j < width; ++j) gg[j] += g[j] * h[j];
          }
          if (bi->requires_grad) {
            auto gb = bi->grad_buffer();
            for (std::size_t j = 0; j < width; ++j) gb[j] += g[j];
          }
          if (xi->requires_grad) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
              dh[j] = g[j] * gi->values[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * h[j];
            }
            mean_dh *= inv_w;
            mean_dh_h *= inv_w;
            auto gx = xi->grad_buffer();
            for (std::size_t j = 0; j < width; ++j) {
              gx[r * width + j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& index_shape) {
  if (table.rank() != 2) shape_fail("embedding", "table must be [V, D], got " + to_string(table.shape()));
  if (element_count(index_shape) != ids.size()) {
    shape_fail("embedding", "index shape " + to_string(index_shape) + " does not hold " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t vocab = table.dim(0), width = table.dim(1);
  const auto tv = table.values();
  Buffer out(ids.size() * width);
  std::vector<int> kept(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw RangeError("embedding: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                       " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * width, width, out.data() + i * width);
  }
  Shape out_shape = index_shape;
  out_shape.push_back(width);
  ImplPtr ti = table.impl();
  return detail::make_result("embedding", std::move(out_shape), std::move(out), {ti},
                             [ti, width, kept = std::move(kept)](TensorImpl& o) {
                               auto gt = ti->grad_buffer();
                               for (std::size_t i = 0; i < kept.size(); ++i) {
                                 double* dst = gt.data() + static_cast<std::size_t>(kept[i]) * width;
                                 const double* src = o.grad.data() + i * width;
                                 for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                               }
                             });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank()) shape_fail("slice", "axis " + std::to_string(axis) + " out of range for " + to_string(a.shape()));
  const std::size_t extent = a.dim(axis);
  if (start + length > extent) {
    shape_fail("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") exceeds extent " +
                            std::to_string(extent) + " of axis " + std::to_string(axis) + " in " + to_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const auto av = a.values();
  Buffer out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + (o * extent + start) * inner, length * inner, out.data() + o * length * inner);
  }
  ImplPtr ai = a.impl();
  return detail::make_result("slice", std::move(out_shape), std::move(out), {ai},
                             [ai, outer, extent, start, length, inner](TensorImpl& o) {
                               auto ga = ai->grad_buffer();
                               for (std::size_t b = 0; b < outer; ++b) {
                                 const double* src = o.grad.data() + b * length * inner;
                                 double* dst = ga.data() + (b * extent + start) * inner;
                                 for (std::size_t j = 0; j < length * inner; ++j) dst[j] += src[j];
                               }
                             });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_fail("concat", "axis " + std::to_string(axis) + " out of range for " + to_string(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) shape_fail("concat", "shape " + to_string(s) + " incompatible with " + to_string(first) + " on axis " + std::to_string(axis));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total;
  Buffer out(outer * total * inner);
  std::vector<ImplPtr> inputs;
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * e * inner, e * inner, out.data() + (o * total + offset) * inner);
    }
    offset += e;
    inputs.push_back(p.impl());
    extents.push_back(e);
  }
  auto captured = inputs;
  return detail::make_result("concat", std::move(out_shape), std::move(out), std::move(inputs),
                             [captured, extents, outer, total, inner](TensorImpl& o) {
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < captured.size(); ++p) {
                                 const std::size_t e = extents[p];
                                 if (captured[p]->requires_grad) {
                                   auto g = captured[p]->grad_buffer();
                                   for (std::size_t b = 0; b < outer; ++b) {
                                     const double* src = o.grad.data() + (b * total + off) * inner;
                                     double* dst = g.data() + b * e * inner;
                                     for (std::size_t j = 0; j < e * inner; ++j) dst[j] += src[j];
                                   }
                                 }
                                 off += e;
                               }
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.numel()) {
    shape_fail("reshape", "cannot reshape " + to_string(a.shape()) + " into " + to_string(shape));
  }
  Buffer out(a.values().begin(), a.values().end());
  ImplPtr ai = a.impl();
  return detail::make_result("reshape", std::move(shape), std::move(out), {ai}, [ai](TensorImpl& o) {
    auto ga = ai->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  std::vector<bool> seen(r, false);
  bool valid = axes.size() == r;
  for (std::size_t i = 0; valid && i < r; ++i) {
    valid = axes[i] < r && !seen[axes[i]];
    if (valid) seen[axes[i]] = true;
  }
  if (!valid) shape_fail("permute", "axes do not form a permutation of rank " + std::to_string(r) + " for " + to_string(a.shape()));

  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * a.dim(i);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.dim(axes[i]);

  const std::size_t n = a.numel();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_stride[axes[i]];
    gather[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto av = a.values();
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[gather[i]];
  ImplPtr ai = a.impl();
  return detail::make_result("permute", std::move(out_shape), std::move(out), {ai},
                             [ai, gather = std::move(gather)](TensorImpl& o) {
                               auto ga = ai->grad_buffer();
                               for (std::size_t i = 0; i < gather.size(); ++i) ga[gather[i]] += o.grad[i];
                             });
}

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double s = std::accumulate(av.begin(), av.end(), 0.0);
  ImplPtr ai = a.impl();
  return detail::make_result("sum", {}, {s}, {ai}, [ai](TensorImpl& o) {
    auto ga = ai->grad_buffer();
    for (auto& g : ga) g += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) shape_fail("mean", "empty tensor");
  const auto av = a.values();
  const double n = static_cast<double>(av.size());
  const double s = std::accumulate(av.begin(), av.end(), 0.0) / n;
  ImplPtr ai = a.impl();
  return detail::make_result("mean", {}, {s}, {ai}, [ai, n](TensorImpl& o) {
    auto ga = ai->grad_buffer();
    const double g = o.grad[0] / n;
    for (auto& v : ga) v += g;
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const double> row_weights) {
  if (logits.rank() != 2) shape_fail("cross_entropy", "logits must be [N, V], got " + to_string(logits.shape()));
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != rows) {
    shape_fail("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  }
  if (!row_weights.empty() && row_weights.size() != rows) {
    shape_fail("cross_entropy", std::to_string(row_weights.size()) + " weights for " + std::to_string(rows) + " rows");
  }
  const auto lv = logits.values();
  Buffer probs(lv.size());
  Buffer weights(rows, 1.0);
  if (!row_weights.empty()) std::copy(row_weights.begin(), row_weights.end(), weights.begin());
  double total_w = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (weights[r] == 0.0) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw RangeError("cross_entropy: target " + std::to_string(t) + " at row " + std::to_string(r) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    const double* x = lv.data() + r * vocab;
    double* p = probs.data() + r * vocab;
    const double mx = *std::max_element(x, x + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < vocab; ++j) p[j] /= z;
    loss += weights[r] * (std::log(z) + mx - x[t]);
    total_w += weights[r];
  }
  const double value = total_w > 0.0 ? loss / total_w : 0.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  ImplPtr li = logits.impl();
  return detail::make_result(
      "cross_entropy", {}, {value}, {li},
      [li, rows, vocab, total_w, tgt = std::move(tgt), weights = std::move(weights), probs = std::move(probs)](TensorImpl& o) {
        auto gl = li->grad_buffer();
        if (total_w <= 0.0) return;
        for (std::size_t r = 0; r < rows; ++r) {
          if (weights[r] == 0.0) continue;
          const double c = o.grad[0] * weights[r] / total_w;
          const double* p = probs.data() + r * vocab;
          double* g = gl.data() + r * vocab;
          for (std::size_t j = 0; j < vocab; ++j) g[j] += c * p[j];
          g[tgt[r]] -= c;
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, std::span<const double> weights) {
  if (logits.shape() != targets.shape()) {
    shape_fail("bce", "logits " + to_string(logits.shape()) + " vs targets " + to_string(targets.shape()));
  }
  if (!weights.empty() && weights.size() != logits.numel()) {
    shape_fail("bce", std::to_string(weights.size()) + " weights for " + std::to_string(logits.numel()) + " elements");
  }
  if (logits.numel() == 0) shape_fail("bce", "empty input");
  const auto x = logits.values();
  const auto t = targets.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw RangeError("bce: non-finite logit at element " + std::to_string(i));
    const double w = weights.empty() ? 1.0 : weights[i];
    acc += w * (std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i]))));
  }
  const double n = static_cast<double>(x.size());
  Buffer w(weights.begin(), weights.end());
  ImplPtr li = logits.impl(), ti = targets.impl();
  return detail::make_result("bce", {}, {acc / n}, {li}, [li, ti, n, w = std::move(w)](TensorImpl& o) {
    auto g = li->grad_buffer();
    const double c = o.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-li->values[i]));
      g[i] += c * (w.empty() ? 1.0 : w[i]) * (s - ti->values[i]);
    }
  });
}

Tensor l1(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("l1", to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (a.numel() == 0) shape_fail("l1", "empty input");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  ImplPtr ai = a.impl(), bi = b.impl();
  return detail::make_result("l1", {}, {acc / n}, {ai, bi}, [ai, bi, n](TensorImpl& o) {
    const double c = o.grad[0] / n;
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * sign(ai->values[i] - bi->values[i]);
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c * sign(ai->values[i] - bi->values[i]);
    }
  });
}

Tensor straight_through(const Tensor& latents, const Tensor& quantized) {
  if (latents.shape() != quantized.shape()) {
    shape_fail("straight_through", to_string(latents.shape()) + " vs " + to_string(quantized.shape()));
  }
  Buffer out(quantized.values().begin(), quantized.values().end());
  ImplPtr li = latents.impl();
  return detail::make_result("straight_through", latents.shape(), std::move(out), {li}, [li](TensorImpl& o) {
    auto g = li->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

}  // namespace mas::ndgrad
