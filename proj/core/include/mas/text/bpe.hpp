#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mas::text {

/// Byte-level BPE vocabulary. IDs 0..255 are raw bytes, 256..259 the special
/// tokens, and learned merges follow from 260 in merge order.
class BpeVocab {
 public:
  static constexpr int kPad = 256;
  static constexpr int kBosText = 257;
  static constexpr int kBosScene = 258;
  static constexpr int kBosImage = 259;
  static constexpr int kAlphabetSize = 260;

  BpeVocab();
  /// Merges must reference IDs that exist before them.
  explicit BpeVocab(std::vector<std::pair<int, int>> merges);

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  /// Byte string of `id`; specials map to the empty string.
  const std::string& bytes_of(int id) const;
  static bool is_special(int id) { return id >= kPad && id < kAlphabetSize; }

  friend bool operator==(const BpeVocab& a, const BpeVocab& b) { return a.merges_ == b.merges_; }

 private:
  std::vector<std::pair<int, int>> merges_;
  std::vector<std::string> bytes_;
};

/// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties to the
/// smallest (left, right) ID pair) until `target_vocab` entries exist or no
/// pair occurs twice.
BpeVocab bpe_train(std::span<const std::string> corpus, std::size_t target_vocab);

/// Applies merges in rank order, then truncates or right-pads with PAD to n_x.
std::vector<int> bpe_encode(std::string_view text, const BpeVocab& vocab, std::size_t n_x);
/// Unpadded token list.
std::vector<int> bpe_tokenize(std::string_view text, const BpeVocab& vocab);
/// Concatenated byte strings; PAD and the other specials decode to nothing.
std::string bpe_decode(std::span<const int> tokens, const BpeVocab& vocab);

/// "mas-bpe 1" header line, then one "left right" merge per line.
void write_vocab(std::ostream& os, const BpeVocab& vocab);
BpeVocab read_vocab(std::istream& is);
void save_vocab(const std::filesystem::path& path, const BpeVocab& vocab);
BpeVocab load_vocab(const std::filesystem::path& path);

}  // namespace mas::text
