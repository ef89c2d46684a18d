#include "mas/text/bpe.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mas/error.hpp"

namespace mas::text {

BpeVocab::BpeVocab() {
  bytes_.reserve(kAlphabetSize);
  for (int b = 0; b < 256; ++b) bytes_.emplace_back(1, static_cast<char>(b));
  for (int s = kPad; s < kAlphabetSize; ++s) bytes_.emplace_back();
}

BpeVocab::BpeVocab(std::vector<std::pair<int, int>> merges) : BpeVocab() {
  for (const auto& [l, r] : merges) {
    const int next = static_cast<int>(bytes_.size());
    for (int id : {l, r}) {
      if (id < 0 || id >= next || is_special(id)) {
        throw FormatError("bpe vocab: merge " + std::to_string(next) + " references invalid token " + std::to_string(id));
      }
    }
    bytes_.push_back(bytes_[static_cast<std::size_t>(l)] + bytes_[static_cast<std::size_t>(r)]);
  }
  merges_ = std::move(merges);
}

const std::string& BpeVocab::bytes_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= bytes_.size()) {
    throw RangeError("bpe: unknown token " + std::to_string(id) + " (vocab " + std::to_string(bytes_.size()) + ")");
  }
  return bytes_[static_cast<std::size_t>(id)];
}

namespace {

std::vector<int> to_bytes(std::string_view s) {
  std::vector<int> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<unsigned char>(s[i]);
  return out;
}

void apply_merge(std::vector<int>& seq, std::pair<int, int> pair, int id) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < seq.size(); ++r) {
    if (r + 1 < seq.size() && seq[r] == pair.first && seq[r + 1] == pair.second) {
      seq[w++] = id;
      ++r;
    } else {
      seq[w++] = seq[r];
    }
  }
  seq.resize(w);
}

}  // namespace

BpeVocab bpe_train(std::span<const std::string> corpus, std::size_t target_vocab) {
  if (corpus.empty()) throw RangeError("bpe_train: empty corpus");
  if (target_vocab < static_cast<std::size_t>(BpeVocab::kAlphabetSize)) {
    throw RangeError("bpe_train: target " + std::to_string(target_vocab) + " below alphabet size " +
                     std::to_string(BpeVocab::kAlphabetSize));
  }
  // Templated captions repeat heavily; work on unique strings with counts.
  std::map<std::string, long> unique;
  for (const auto& s : corpus) ++unique[s];
  std::vector<std::vector<int>> seqs;
  std::vector<long> weight;
  for (const auto& [s, c] : unique) {
    seqs.push_back(to_bytes(s));
    weight.push_back(c);
  }

  std::vector<std::pair<int, int>> merges;
  while (static_cast<std::size_t>(BpeVocab::kAlphabetSize) + merges.size() < target_vocab) {
    std::map<std::pair<int, int>, long> counts;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      for (std::size_t j = 0; j + 1 < seqs[i].size(); ++j) counts[{seqs[i][j], seqs[i][j + 1]}] += weight[i];
    }
    // std::map iterates pairs in ascending order, so strict > keeps the smallest on ties.
    std::pair<int, int> best{-1, -1};
    long best_count = 1;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    }
    if (best.first < 0) break;
    const int id = BpeVocab::kAlphabetSize + static_cast<int>(merges.size());
    merges.push_back(best);
    for (auto& s : seqs) apply_merge(s, best, id);
  }
  return BpeVocab(std::move(merges));
}

std::vector<int> bpe_tokenize(std::string_view text, const BpeVocab& vocab) {
  std::map<std::pair<int, int>, int> rank;
  const auto& merges = vocab.merges();
  for (std::size_t i = 0; i < merges.size(); ++i) rank.emplace(merges[i], static_cast<int>(i));
  std::vector<int> seq = to_bytes(text);
  while (seq.size() > 1) {
    int best = -1;
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
      auto it = rank.find({seq[j], seq[j + 1]});
      if (it != rank.end() && (best < 0 || it->second < best)) best = it->second;
    }
    if (best < 0) break;
    apply_merge(seq, merges[static_cast<std::size_t>(best)], BpeVocab::kAlphabetSize + best);
  }
  return seq;
}

std::vector<int> bpe_encode(std::string_view text, const BpeVocab& vocab, std::size_t n_x) {
  std::vector<int> seq = bpe_tokenize(text, vocab);
  seq.resize(n_x, BpeVocab::kPad);
  return seq;
}

std::string bpe_decode(std::span<const int> tokens, const BpeVocab& vocab) {
  std::string out;
  for (int t : tokens) out += vocab.bytes_of(t);
  return out;
}

void write_vocab(std::ostream& os, const BpeVocab& vocab) {
  os << "mas-bpe 1\n";
  for (const auto& [l, r] : vocab.merges()) os << l << ' ' << r << '\n';
}

BpeVocab read_vocab(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "mas-bpe 1") throw FormatError("bpe vocab: missing 'mas-bpe 1' header");
  std::vector<std::pair<int, int>> merges;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int l = 0, r = 0;
    std::string rest;
    if (!(ls >> l >> r) || (ls >> rest)) throw FormatError("bpe vocab: malformed line " + std::to_string(lineno));
    merges.emplace_back(l, r);
  }
  return BpeVocab(std::move(merges));
}

void save_vocab(const std::filesystem::path& path, const BpeVocab& vocab) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_vocab(os, vocab);
}

BpeVocab load_vocab(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return read_vocab(is);
}

}  // namespace mas::text
