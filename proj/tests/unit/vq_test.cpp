#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mas/error.hpp"
#include "mas/ndgrad/ops.hpp"
#include "mas/vq/codebook.hpp"

namespace {

using mas::CounterRng;
using mas::ndgrad::Tensor;
namespace nd = mas::ndgrad;
namespace vq = mas::vq;

vq::Codebook make_book(mas::nn::ParamStore& store, std::size_t size, std::size_t dim, std::vector<double> values = {}) {
  CounterRng rng(3);
  vq::Codebook book(store, "book", size, dim, rng);
  if (!values.empty()) {
    Tensor e = book.entries();
    auto v = e.mutable_values();
    std::copy(values.begin(), values.end(), v.begin());
  }
  return book;
}

int brute_nearest(std::span<const double> row, const vq::Codebook& book) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < book.size(); ++k) {
    double d = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) d += (row[j] - book.entry(k)[j]) * (row[j] - book.entry(k)[j]);
    if (d < best_d) {  // strict: the first minimum wins ties
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

TEST(Quantize, HandWorkedNearestAndTie) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 2, 2, {0, 0, 1, 1});
  const auto r = vq::quantize(Tensor::from_values({2, 2}, {0.9, 0.8, 0.5, 0.5}), book);
  EXPECT_EQ(r.indices, (std::vector<int>{1, 0}));
}

TEST(Quantize, LatentEqualToEntryIsFixedPointWithZeroLosses) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 8, 4);
  std::vector<double> rows(book.entry(5).begin(), book.entry(5).end());
  const auto r = vq::quantize(Tensor::from_values({1, 4}, rows), book);
  EXPECT_EQ(r.indices, std::vector<int>{5});
  EXPECT_EQ(r.codebook_loss.item(), 0.0);
  EXPECT_EQ(r.commitment_loss.item(), 0.0);
}

// Exact agreement with a brute-force scan on 10^4 (latent, codebook) pairs,
// half of them with deliberate duplicate entries to exercise the tie rule.
TEST(Quantize, MatchesBruteForceIncludingTies) {
  CounterRng rng(21);
  std::size_t checked = 0;
  for (int pair = 0; pair < 10000; ++pair) {
    mas::nn::ParamStore store;
    const std::size_t size = 2 + rng.below(7), dim = 1 + rng.below(4);
    std::vector<double> entries(size * dim);
    // Small integer grid makes equal distances common.
    for (auto& v : entries) v = static_cast<double>(rng.below(3));
    if (pair % 2 == 0) {
      const auto dup = rng.below(size - 1);
      std::copy_n(entries.begin() + static_cast<long>(dup * dim), dim, entries.begin() + static_cast<long>((size - 1) * dim));
    }
    const auto book = make_book(store, size, dim, entries);
    std::vector<double> latent(dim);
    for (auto& v : latent) v = static_cast<double>(rng.below(5)) * 0.5;
    const auto r = vq::quantize(Tensor::from_values({1, dim}, latent), book);
    ASSERT_EQ(r.indices[0], brute_nearest(latent, book)) << "pair " << pair;
    ASSERT_EQ(vq::nearest(latent, book), r.indices[0]);
    for (std::size_t j = 0; j < dim; ++j) ASSERT_EQ(r.quantized.values()[j], book.entry(static_cast<std::size_t>(r.indices[0]))[j]);
    ++checked;
  }
  EXPECT_EQ(checked, 10000u);
}

TEST(Quantize, IdempotentOnItsOwnOutput) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 16, 3);
  CounterRng rng(22);
  const auto x = Tensor::randn({20, 3}, rng, 1.0);
  const auto first = vq::quantize(x, book);
  const auto again = vq::quantize(Tensor::from_values({20, 3}, {first.quantized.values().begin(), first.quantized.values().end()}), book);
  EXPECT_EQ(again.indices, first.indices);
  EXPECT_EQ(again.codebook_loss.item(), 0.0);
  EXPECT_EQ(again.commitment_loss.item(), 0.0);
}

TEST(Quantize, StraightThroughGradientIsBitIdentical) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 16, 3);
  CounterRng rng(23);
  const auto x = Tensor::randn({10, 3}, rng, 1.0, true);
  const auto w = Tensor::randn({10, 3}, rng, 1.0);
  const auto r = vq::quantize(x, book);
  // Downstream loss sum(w * q^2): dL/dq = 2 w q.
  const auto q = r.quantized;
  nd::sum(nd::mul(w, nd::mul(q, q))).backward();
  ASSERT_FALSE(x.grad().empty());
  for (std::size_t i = 0; i < 30; ++i) {
    const double dq = 2.0 * w.values()[i] * q.values()[i];
    EXPECT_EQ(x.grad()[i], dq);
  }
}

TEST(Quantize, LossesMatchDefinitions) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 2, 2, {0, 0, 1, 1});
  const auto r = vq::quantize(Tensor::from_values({2, 2}, {0.9, 0.8, 0.0, 0.5}), book, 0.25);
  // Squared distances per row: 0.01+0.04 and 0.25, mean 0.15.
  EXPECT_NEAR(r.codebook_loss.item(), 0.15, 1e-15);
  EXPECT_NEAR(r.commitment_loss.item(), 0.25 * 0.15, 1e-15);
}

TEST(Quantize, DimensionMismatchIsAnError) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 4, 3);
  EXPECT_THROW(vq::quantize(Tensor::zeros({2, 2}), book), mas::ShapeError);
}

TEST(Lookup, ConsistentWithQuantize) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 32, 4);
  CounterRng rng(24);
  const auto r = vq::quantize(Tensor::randn({50, 4}, rng, 1.0), book);
  const auto l = vq::lookup(r.indices, book);
  EXPECT_EQ(std::vector<double>(l.values().begin(), l.values().end()),
            std::vector<double>(r.quantized.values().begin(), r.quantized.values().end()));
}

TEST(Lookup, RandomIndicesCopyEntriesAndEmptyGridIsEmpty) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 32, 4);
  CounterRng rng(25);
  std::vector<int> idx(40);
  for (auto& i : idx) i = static_cast<int>(rng.below(32));
  const auto l = vq::lookup(idx, book);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(l.values()[r * 4 + j], book.entry(static_cast<std::size_t>(idx[r]))[j]);
  }
  EXPECT_EQ(vq::lookup(std::vector<int>{}, book).numel(), 0u);
}

TEST(Lookup, OutOfRangeIndexIsAnError) {
  mas::nn::ParamStore store;
  const auto book = make_book(store, 4, 2);
  EXPECT_THROW(vq::lookup(std::vector<int>{4}, book), mas::RangeError);
  EXPECT_THROW(vq::lookup(std::vector<int>{-1}, book), mas::RangeError);
}

TEST(Usage, CountsDistinctEntries) {
  EXPECT_EQ(vq::usage(std::vector<int>{0, 0, 1, 3}, 8), 3.0 / 8.0);
  EXPECT_EQ(vq::usage(std::vector<int>{}, 8), 0.0);
}

TEST(SeedFrom, SelectsRowsFromThePool) {
  mas::nn::ParamStore store;
  auto book = make_book(store, 4, 2);
  std::vector<double> rows;
  for (int i = 0; i < 10; ++i) {
    rows.push_back(i);
    rows.push_back(-i);
  }
  CounterRng rng(26);
  book.seed_from(rows, rng);
  for (std::size_t k = 0; k < 4; ++k) {
    const double a = book.entry(k)[0];
    EXPECT_EQ(book.entry(k)[1], -a);
    EXPECT_EQ(a, std::round(a));
  }
}

}  // namespace
