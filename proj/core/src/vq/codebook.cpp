#include "mas/vq/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mas/error.hpp"

namespace mas::vq {

namespace ops = ndgrad;

Codebook::Codebook(nn::ParamStore& store, const std::string& name, std::size_t size, std::size_t dim,
                   CounterRng& rng) {
  if (size < 2) throw RangeError("codebook: needs at least 2 entries");
  if (dim == 0) throw RangeError("codebook: dimension must be positive");
  const double bound = 1.0 / static_cast<double>(size);
  entries_ = store.add(name, Tensor::uniform({size, dim}, rng, -bound, bound));
}

void Codebook::seed_from(std::span<const double> rows, CounterRng& rng) {
  const std::size_t d = dim(), k = size();
  if (rows.size() % d != 0 || rows.empty()) throw ShapeError("codebook seed: pool is not a non-empty [n, dim] array");
  const std::size_t n = rows.size() / d;
  auto dist2 = [&](std::size_t r, const double* e) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = rows[r * d + j] - e[j];
      s += t * t;
    }
    return s;
  };
  auto out = entries_.mutable_values();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  double scale = 0.0;
  for (double v : rows) scale += v * v;
  scale = std::sqrt(scale / static_cast<double>(rows.size())) + 1e-12;

  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t e = 0; e < k; ++e) {
    if (e > 0) {
      double total = 0.0;
      for (double b : best) total += b;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t r = 0; r < n; ++r) {
          u -= best[r];
          if (u < 0.0) {
            pick = r;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(rng.below(n));
      }
    }
    double* dst = out.data() + e * d;
    std::copy_n(rows.data() + pick * d, d, dst);
    if (best[pick] == 0.0) {
      for (std::size_t j = 0; j < d; ++j) dst[j] += 1e-3 * scale * rng.normal();
    }
    for (std::size_t r = 0; r < n; ++r) best[r] = std::min(best[r], dist2(r, dst));
  }
}

int nearest(std::span<const double> row, const Codebook& book) {
  const std::size_t d = book.dim();
  const double* e = book.entries().values().data();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < book.size(); ++k, e += d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = row[j] - e[j];
      s += t * t;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

QuantizeResult quantize(const Tensor& latents, const Codebook& book, double beta_commit) {
  if (latents.rank() != 2 || latents.dim(1) != book.dim()) {
    throw ShapeError("quantize: latents " + ndgrad::to_string(latents.shape()) + " do not match codebook dim " +
                     std::to_string(book.dim()));
  }
  const std::size_t n = latents.dim(0), d = book.dim();
  QuantizeResult r;
  r.indices.resize(n);
  const auto lv = latents.values();
  for (std::size_t i = 0; i < n; ++i) r.indices[i] = nearest(lv.subspan(i * d, d), book);

  Tensor gathered = lookup(r.indices, book);
  r.quantized = ops::straight_through(latents, gathered.detach());
  if (n == 0) {
    r.codebook_loss = Tensor::scalar(0.0);
    r.commitment_loss = Tensor::scalar(0.0);
    return r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor to_entry = ops::sub(latents.detach(), gathered);
  r.codebook_loss = ops::scale(ops::sum(ops::mul(to_entry, to_entry)), inv_n);
  Tensor to_latent = ops::sub(latents, gathered.detach());
  r.commitment_loss = ops::scale(ops::sum(ops::mul(to_latent, to_latent)), beta_commit * inv_n);
  return r;
}

Tensor lookup(std::span<const int> indices, const Codebook& book) {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= book.size()) {
      throw RangeError("lookup: token " + std::to_string(indices[i]) + " at position " + std::to_string(i) +
                       " outside codebook of " + std::to_string(book.size()));
    }
  }
  return ops::embedding(book.entries(), indices, {indices.size()});
}

double usage(std::span<const int> indices, std::size_t book_size) {
  if (book_size == 0) return 0.0;
  std::vector<bool> seen(book_size, false);
  std::size_t used = 0;
  for (int i : indices) {
    if (i >= 0 && static_cast<std::size_t>(i) < book_size && !seen[static_cast<std::size_t>(i)]) {
      seen[static_cast<std::size_t>(i)] = true;
      ++used;
    }
  }
  return static_cast<double>(used) / static_cast<double>(book_size);
}

}  // namespace mas::vq
