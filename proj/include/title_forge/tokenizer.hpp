#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "title_forge/language.hpp"

namespace title_forge {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kCodeSep = 4;
inline constexpr TokenId kCount = 5;
/// Id of the base piece for byte value b is kByteBase + b.
inline constexpr TokenId kByteBase = kCount;
inline constexpr TokenId kBaseSize = kByteBase + 256;
inline constexpr std::string_view kCodeSepSurface = "<code>";
}  // namespace special

/// Byte-level BPE vocabulary: five reserved ids, one piece per byte value,
/// then one piece per learned merge in learning order. Immutable once built,
/// so encode/decode may run concurrently.
class Vocabulary {
 public:
  using Merge = std::pair<TokenId, TokenId>;

  /// Base vocabulary (specials and bytes, no merges).
  Vocabulary();

  std::size_t size() const noexcept { return pieces_.size(); }
  const std::vector<std::string>& pieces() const noexcept { return pieces_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }

  /// Never returns a reserved id; decode(encode(s)) == s for every byte string.
  std::vector<TokenId> encode(std::string_view text) const;

  /// Drops PAD/BOS/EOS, renders CODE_SEP as "<code>". Throws Error(UnknownId).
  std::string decode(std::span<const TokenId> ids) const;

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return pieces_ == other.pieces_ && merges_ == other.merges_;
  }

 private:
  friend Vocabulary train_vocabulary(std::span<const std::string> texts, std::size_t target_size);

  TokenId add_merge(TokenId left, TokenId right);
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  std::vector<std::string> pieces_;
  std::vector<Merge> merges_;
  // (left << 32 | right) -> merge rank
  std::unordered_map<std::uint64_t, std::uint32_t> merge_rank_;
};

/// Splits text into the units BPE merges never cross: a run of word
/// characters or of punctuation (optionally with one leading space), or a
/// run of whitespace. Concatenating the pieces reproduces the input.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Learns merges by repeatedly fusing the most frequent adjacent pair (ties:
/// lexicographically smallest merged string). Stops at target_size pieces, or
/// earlier if no adjacent pair is left anywhere in the corpus.
/// Throws Error(TargetTooSmall) when target_size ≤ 261, Error(EmptyCorpus)
/// when there is no text.
Vocabulary train_vocabulary(std::span<const std::string> texts, std::size_t target_size = 16000);

/// Encoder input: prefix ⊕ description ⊕ <code> ⊕ code.
struct ModelInput {
  std::vector<TokenId> token_ids;
  Language task = Language::Java;
};

/// Prefix and description are encoded separately so the sequence always
/// starts with exactly encode(prefix). Over-long inputs lose code tokens
/// first, then description tokens. Throws Error(EmptyInput) when both fields
/// are empty.
ModelInput build_model_input(const Vocabulary& vocab, Language task, std::string_view description,
                             std::string_view code, std::size_t max_len = 512);

}  // namespace title_forge
