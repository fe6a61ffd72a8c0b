#include "title_forge/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>

#include "title_forge/error.hpp"

namespace title_forge {
namespace {

constexpr std::string_view kMagic = "title_forge_vocab";
constexpr int kFormatVersion = 1;

std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

enum class CharClass { Word, Space, OtherSpace, Punct };

CharClass classify(unsigned char c) {
  if (c == ' ') return CharClass::Space;
  if (c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\v') return CharClass::OtherSpace;
  if (c >= 0x80 || c == '_' || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
    return CharClass::Word;
  }
  return CharClass::Punct;
}

bool is_ws(CharClass c) { return c == CharClass::Space || c == CharClass::OtherSpace; }

// Piece text is stored one per line: printable ASCII verbatim (except '\'),
// every other byte as \xHH.
std::string escape_piece(std::string_view piece) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : piece) {
    if (c >= 0x20 && c < 0x7f && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else {
      out += "\\x";
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string unescape_piece(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out.push_back(line[i]);
      continue;
    }
    if (i + 3 >= line.size()) throw Error(Errc::BadVocabularyFile, "truncated escape in piece");
    if (line[i + 1] != 'x') throw Error(Errc::BadVocabularyFile, "bad escape in piece");
    auto hex = [](char h) -> int {
      if (h >= '0' && h <= '9') return h - '0';
      if (h >= 'a' && h <= 'f') return h - 'a' + 10;
      if (h >= 'A' && h <= 'F') return h - 'A' + 10;
      throw Error(Errc::BadVocabularyFile, "bad hex digit in piece");
    };
    out.push_back(static_cast<char>(hex(line[i + 2]) * 16 + hex(line[i + 3])));
    i += 3;
  }
  return out;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto cls = [&](std::size_t k) { return classify(static_cast<unsigned char>(text[k])); };
  while (i < n) {
    std::size_t start = i;
    CharClass c = cls(i);
    if (c == CharClass::Space && i + 1 < n && !is_ws(cls(i + 1))) {
      // One space glued to the following word or punctuation run.
      CharClass run = cls(i + 1);
      i += 2;
      while (i < n && cls(i) == run) ++i;
    } else if (is_ws(c)) {
      while (i < n && is_ws(cls(i))) ++i;
      // Leave a trailing space for the next token when one follows.
      if (i < n && i - start > 1 && text[i - 1] == ' ') --i;
    } else {
      while (i < n && cls(i) == c) ++i;
    }
    out.push_back(text.substr(start, i - start));
  }
  return out;
}

Vocabulary::Vocabulary() {
  pieces_.reserve(special::kBaseSize);
  pieces_.emplace_back("<pad>");
  pieces_.emplace_back("<s>");
  pieces_.emplace_back("</s>");
  pieces_.emplace_back("<unk>");
  pieces_.emplace_back(special::kCodeSepSurface);
  for (int b = 0; b < 256; ++b) pieces_.emplace_back(1, static_cast<char>(b));
}

TokenId Vocabulary::add_merge(TokenId left, TokenId right) {
  auto id = static_cast<TokenId>(pieces_.size());
  merge_rank_.emplace(pair_key(left, right), static_cast<std::uint32_t>(merges_.size()));
  merges_.emplace_back(left, right);
  pieces_.push_back(pieces_[static_cast<std::size_t>(left)] + pieces_[static_cast<std::size_t>(right)]);
  return id;
}

void Vocabulary::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  std::vector<TokenId> symbols;
  symbols.reserve(word.size());
  for (unsigned char c : word) symbols.push_back(special::kByteBase + c);
  while (symbols.size() > 1) {
    std::uint32_t best_rank = UINT32_MAX;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = merge_rank_.find(pair_key(symbols[k], symbols[k + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == UINT32_MAX) break;
    const auto [left, right] = merges_[best_rank];
    const TokenId merged = special::kBaseSize + static_cast<TokenId>(best_rank);
    std::size_t w = 0;
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
        symbols[w++] = merged;
        ++k;
      } else {
        symbols[w++] = symbols[k];
      }
    }
    symbols.resize(w);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (auto word : pretokenize(text)) encode_word(word, ids);
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      throw Error(Errc::UnknownId, "token id " + std::to_string(id) + " outside vocabulary of " +
                                       std::to_string(pieces_.size()));
    }
    if (id == special::kPad || id == special::kBos || id == special::kEos) continue;
    out += pieces_[static_cast<std::size_t>(id)];
  }
  return out;
}

void Vocabulary::write(std::ostream& out) const {
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "pieces " << pieces_.size() << '\n';
  out << "merges " << merges_.size() << '\n';
  out << "special pad " << special::kPad << '\n';
  out << "special bos " << special::kBos << '\n';
  out << "special eos " << special::kEos << '\n';
  out << "special unk " << special::kUnk << '\n';
  out << "special code_sep " << special::kCodeSep << '\n';
  out << "%%pieces\n";
  for (const auto& piece : pieces_) out << escape_piece(piece) << '\n';
  out << "%%merges\n";
  for (const auto& [left, right] : merges_) out << left << ' ' << right << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  auto fail = [](const std::string& why) -> Error { return Error(Errc::BadVocabularyFile, why); };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty vocabulary file");
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kMagic || version != kFormatVersion) throw fail("unrecognised header: " + line);
  }
  std::size_t n_pieces = 0;
  std::size_t n_merges = 0;
  while (std::getline(in, line) && line != "%%pieces") {
    std::istringstream field(line);
    std::string key;
    field >> key;
    if (key == "pieces") field >> n_pieces;
    else if (key == "merges") field >> n_merges;
    else if (key == "special") {
      std::string name;
      TokenId id = -1;
      field >> name >> id;
      const std::map<std::string, TokenId> expected = {{"pad", special::kPad},
                                                       {"bos", special::kBos},
                                                       {"eos", special::kEos},
                                                       {"unk", special::kUnk},
                                                       {"code_sep", special::kCodeSep}};
      auto it = expected.find(name);
      if (it == expected.end() || it->second != id) throw fail("unexpected special id line: " + line);
    } else {
      throw fail("unknown manifest key: " + key);
    }
  }
  if (n_pieces != special::kBaseSize + n_merges) throw fail("piece count does not match merge count");

  std::vector<std::string> pieces;
  pieces.reserve(n_pieces);
  for (std::size_t i = 0; i < n_pieces; ++i) {
    if (!std::getline(in, line)) throw fail("truncated piece list");
    pieces.push_back(unescape_piece(line));
  }
  if (!std::getline(in, line) || line != "%%merges") throw fail("missing merges section");

  Vocabulary vocab;
  for (std::size_t i = 0; i < special::kBaseSize; ++i) {
    if (pieces[i] != vocab.pieces_[i]) throw fail("base piece " + std::to_string(i) + " differs");
  }
  for (std::size_t i = 0; i < n_merges; ++i) {
    if (!std::getline(in, line)) throw fail("truncated merge list");
    std::istringstream fields(line);
    TokenId left = -1;
    TokenId right = -1;
    fields >> left >> right;
    const auto limit = static_cast<TokenId>(vocab.size());
    if (!fields || left < special::kByteBase || right < special::kByteBase || left >= limit || right >= limit) {
      throw fail("bad merge line: " + line);
    }
    TokenId id = vocab.add_merge(left, right);
    if (vocab.pieces_[static_cast<std::size_t>(id)] != pieces[static_cast<std::size_t>(id)]) {
      throw fail("piece " + std::to_string(id) + " does not match its merge");
    }
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  write(out);
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  return read(in);
}

Vocabulary train_vocabulary(std::span<const std::string> texts, std::size_t target_size) {
  if (target_size <= static_cast<std::size_t>(special::kBaseSize)) {
    throw Error(Errc::TargetTooSmall, "target size " + std::to_string(target_size) +
                                          " must exceed the byte base plus specials (" +
                                          std::to_string(special::kBaseSize) + ")");
  }
  std::map<std::string_view, std::int64_t> word_freq;
  for (const auto& text : texts) {
    for (auto word : pretokenize(text)) ++word_freq[word];
  }
  if (word_freq.empty()) throw Error(Errc::EmptyCorpus, "no text to learn a vocabulary from");

  struct Word {
    std::vector<TokenId> symbols;
    std::int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [text, freq] : word_freq) {
    Word w{{}, freq};
    for (unsigned char c : text) w.symbols.push_back(special::kByteBase + c);
    words.push_back(std::move(w));
  }

  Vocabulary vocab;
  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> pair_words;
  for (std::uint32_t wi = 0; wi < words.size(); ++wi) {
    const auto& s = words[wi].symbols;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      auto key = pair_key(s[k], s[k + 1]);
      pair_count[key] += words[wi].freq;
      auto& where = pair_words[key];
      if (where.empty() || where.back() != wi) where.push_back(wi);
    }
  }

  struct Candidate {
    std::int64_t count;
    TokenId left;
    TokenId right;
  };
  // Priority: higher count, then smaller merged string, then smaller ids.
  auto worse = [&vocab](const Candidate& a, const Candidate& b) {
    if (a.count != b.count) return a.count < b.count;
    const auto& al = vocab.pieces_[static_cast<std::size_t>(a.left)];
    const auto& ar = vocab.pieces_[static_cast<std::size_t>(a.right)];
    const auto& bl = vocab.pieces_[static_cast<std::size_t>(b.left)];
    const auto& br = vocab.pieces_[static_cast<std::size_t>(b.right)];
    std::string am = al + ar;
    std::string bm = bl + br;
    if (am != bm) return am > bm;
    if (a.left != b.left) return a.left > b.left;
    return a.right > b.right;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
  for (const auto& [key, count] : pair_count) {
    heap.push({count, static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xFFFFFFFFu)});
  }

  std::vector<std::uint32_t> last_seen(words.size(), UINT32_MAX);
  std::vector<std::uint64_t> touched;
  while (vocab.size() < target_size && !heap.empty()) {
    Candidate top = heap.top();
    heap.pop();
    const auto key = pair_key(top.left, top.right);
    auto current = pair_count.find(key);
    if (current == pair_count.end() || current->second != top.count) continue;  // stale entry

    const auto step = static_cast<std::uint32_t>(vocab.merges_.size());
    const TokenId merged = vocab.add_merge(top.left, top.right);
    std::vector<std::uint32_t> affected = std::move(pair_words[key]);
    pair_words.erase(key);
    touched.clear();

    for (std::uint32_t wi : affected) {
      if (last_seen[wi] == step) continue;
      last_seen[wi] = step;
      auto& w = words[wi];
      auto& s = w.symbols;
      bool has_pair = false;
      for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        if (s[k] == top.left && s[k + 1] == top.right) {
          has_pair = true;
          break;
        }
      }
      if (!has_pair) continue;
      for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        auto old_key = pair_key(s[k], s[k + 1]);
        auto it = pair_count.find(old_key);
        it->second -= w.freq;
        touched.push_back(old_key);
      }
      std::vector<TokenId> next;
      next.reserve(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (k + 1 < s.size() && s[k] == top.left && s[k + 1] == top.right) {
          next.push_back(merged);
          ++k;
        } else {
          next.push_back(s[k]);
        }
      }
      s = std::move(next);
      for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        auto new_key = pair_key(s[k], s[k + 1]);
        pair_count[new_key] += w.freq;
        touched.push_back(new_key);
        if (s[k] == merged || s[k + 1] == merged) {
          auto& where = pair_words[new_key];
          if (where.empty() || where.back() != wi) where.push_back(wi);
        }
      }
    }

    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (auto k : touched) {
      auto it = pair_count.find(k);
      if (it == pair_count.end()) continue;
      if (it->second <= 0) {
        pair_count.erase(it);
        continue;
      }
      heap.push({it->second, static_cast<TokenId>(k >> 32), static_cast<TokenId>(k & 0xFFFFFFFFu)});
    }
  }
  return vocab;
}

ModelInput build_model_input(const Vocabulary& vocab, Language task, std::string_view description,
                             std::string_view code, std::size_t max_len) {
  if (description.empty() && code.empty()) {
    throw Error(Errc::EmptyInput, "empty input: description and code are both empty");
  }
  auto prefix = vocab.encode(task_prefix(task));
  auto desc = vocab.encode(description);
  auto code_ids = vocab.encode(code);
  if (prefix.size() + 1 > max_len) {
    throw Error(Errc::LengthExceeded, "max_len " + std::to_string(max_len) + " cannot hold the task prefix");
  }
  const std::size_t budget = max_len - prefix.size() - 1;
  if (desc.size() + code_ids.size() > budget) {
    if (desc.size() >= budget) {
      desc.resize(budget);
      code_ids.clear();
    } else {
      code_ids.resize(budget - desc.size());
    }
  }
  ModelInput input;
  input.task = task;
  input.token_ids.reserve(prefix.size() + desc.size() + 1 + code_ids.size());
  input.token_ids.insert(input.token_ids.end(), prefix.begin(), prefix.end());
  input.token_ids.insert(input.token_ids.end(), desc.begin(), desc.end());
  input.token_ids.push_back(special::kCodeSep);
  input.token_ids.insert(input.token_ids.end(), code_ids.begin(), code_ids.end());
  return input;
}

}  // namespace title_forge
