#pragma once

#include <span>
#include <string>
#include <vector>

#include "mas/nn.hpp"

namespace mas::vq {

using ndgrad::Tensor;

/// Learnable embedding table used by both tokenizers. Entries live in the
/// owning model's ParamStore and are trained by gradient on the codebook loss.
class Codebook {
 public:
  Codebook() = default;
  Codebook(nn::ParamStore& store, const std::string& name, std::size_t size, std::size_t dim, CounterRng& rng);

  std::size_t size() const { return entries_.dim(0); }
  std::size_t dim() const { return entries_.dim(1); }
  const Tensor& entries() const { return entries_; }
  std::span<const double> entry(std::size_t k) const { return entries_.values().subspan(k * dim(), dim()); }

  /// D^2-weighted (k-means++) selection of entries from `rows` ([n, dim],
  /// row-major). Duplicate-exhausted pools are padded with jittered copies.
  void seed_from(std::span<const double> rows, CounterRng& rng);

 private:
  Tensor entries_;
};

struct QuantizeResult {
  std::vector<int> indices;
  Tensor quantized;        // [n, dim]; forward values are exact entry copies
  Tensor codebook_loss;    // mean over rows of |sg(latent) - entry|^2
  Tensor commitment_loss;  // beta * mean over rows of |latent - sg(entry)|^2
};

/// Index of the entry closest to `row` in squared Euclidean distance; ties
/// go to the lowest index.
int nearest(std::span<const double> row, const Codebook& book);

/// Quantizes each row of `latents` ([n, dim]) with a straight-through
/// gradient path back to the latents.
QuantizeResult quantize(const Tensor& latents, const Codebook& book, double beta_commit = 0.25);

/// Exact entry copies for `indices`, differentiable w.r.t. the entries.
Tensor lookup(std::span<const int> indices, const Codebook& book);

/// Fraction of entries that occur at least once in `indices`.
double usage(std::span<const int> indices, std::size_t book_size);

}  // namespace mas::vq
