#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uvnmt/errors.hpp"
#include "uvnmt/rng.hpp"

namespace uvnmt {

struct LanguageId {
  std::string code;  // short lowercase tag, e.g. "en", "es"
  bool operator==(const LanguageId&) const = default;
};

// ---------------------------------------------------------------------------
// Text normalization.
//
// The corpus pipeline works on Latin-script text (the tab-delimited phrase
// datasets are Spanish/English). Normalization composes the combining marks
// that occur in those files (acute, grave, tilde, diaeresis over Latin
// letters), lowercases ASCII and Latin-1/Extended-A letters, separates the
// punctuation set . , ! ? ¿ ¡ ; : with spaces, maps everything else outside
// letters/digits to a space, and collapses whitespace. Accented letters are
// preserved.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
      cp = ((c & 0x1F) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3F);
      len = 2;
    } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
      cp = ((c & 0x0F) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
           (static_cast<unsigned char>(s[i + 2]) & 0x3F);
      len = 3;
    } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
      cp = ((c & 0x07) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
           ((static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
           (static_cast<unsigned char>(s[i + 3]) & 0x3F);
      len = 4;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void utf8_append(std::string& s, char32_t cp) {
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xF0 | (cp >> 18));
    s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Canonical composition for base + combining mark pairs over Latin letters.
inline char32_t compose(char32_t base, char32_t mark) {
  struct Entry {
    char32_t mark;
    char32_t base;
    char32_t composed;
  };
  static const Entry table[] = {
      // combining acute U+0301
      {0x301, U'a', 0xE1}, {0x301, U'e', 0xE9}, {0x301, U'i', 0xED},
      {0x301, U'o', 0xF3}, {0x301, U'u', 0xFA}, {0x301, U'y', 0xFD},
      {0x301, U'A', 0xC1}, {0x301, U'E', 0xC9}, {0x301, U'I', 0xCD},
      {0x301, U'O', 0xD3}, {0x301, U'U', 0xDA},
      // combining grave U+0300
      {0x300, U'a', 0xE0}, {0x300, U'e', 0xE8}, {0x300, U'i', 0xEC},
      {0x300, U'o', 0xF2}, {0x300, U'u', 0xF9},
      {0x300, U'A', 0xC0}, {0x300, U'E', 0xC8}, {0x300, U'I', 0xCC},
      {0x300, U'O', 0xD2}, {0x300, U'U', 0xD9},
      // combining tilde U+0303
      {0x303, U'n', 0xF1}, {0x303, U'N', 0xD1}, {0x303, U'a', 0xE3},
      {0x303, U'o', 0xF5}, {0x303, U'A', 0xC3}, {0x303, U'O', 0xD5},
      // combining diaeresis U+0308
      {0x308, U'u', 0xFC}, {0x308, U'U', 0xDC}, {0x308, U'o', 0xF6},
      {0x308, U'O', 0xD6}, {0x308, U'a', 0xE4}, {0x308, U'A', 0xC4},
      {0x308, U'e', 0xEB}, {0x308, U'E', 0xCB}, {0x308, U'i', 0xEF},
      {0x308, U'I', 0xCF},
  };
  for (const auto& e : table) {
    if (e.mark == mark && e.base == base) return e.composed;
  }
  return 0;
}

inline char32_t to_lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;  // Latin-1
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x100 && cp <= 0x177 && (cp % 2 == 0)) return cp + 1;  // Latin Ext-A pairs
  if ((cp == 0x179 || cp == 0x17B || cp == 0x17D)) return cp + 1;
  return cp;
}

inline bool is_letter_or_digit(char32_t cp) {
  if ((cp >= U'a' && cp <= U'z') || (cp >= U'0' && cp <= U'9')) return true;
  if (cp >= 0xC0 && cp <= 0xFF && cp != 0xD7 && cp != 0xF7) return true;
  if (cp >= 0x100 && cp <= 0x17F) return true;
  return false;
}

inline bool is_kept_punct(char32_t cp) {
  switch (cp) {
    case U'.': case U',': case U'!': case U'?':
    case 0xBF /* inverted ? */: case 0xA1 /* inverted ! */:
    case U';': case U':':
      return true;
    default:
      return false;
  }
}

}  // namespace detail

inline std::string normalize(const std::string& text) {
  std::vector<char32_t> cps = detail::utf8_decode(text);

  // Compose base + combining mark pairs, then lowercase.
  std::vector<char32_t> composed;
  composed.reserve(cps.size());
  for (char32_t cp : cps) {
    if (!composed.empty()) {
      if (char32_t c = detail::compose(composed.back(), cp); c != 0) {
        composed.back() = c;
        continue;
      }
    }
    composed.push_back(cp);
  }

  std::string out;
  out.reserve(text.size() + 8);
  bool pending_space = false;  // collapse runs, trim leading
  auto put = [&](char32_t cp) {
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    detail::utf8_append(out, cp);
  };
  for (char32_t cp : composed) {
    cp = detail::to_lower_cp(cp);
    if (detail::is_letter_or_digit(cp)) {
      put(cp);
    } else if (detail::is_kept_punct(cp)) {
      pending_space = true;
      put(cp);
      pending_space = true;
    } else {
      pending_space = true;  // whitespace and everything else
    }
  }
  return out;
}

inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(normalize(text));
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

// ---------------------------------------------------------------------------
// Parallel corpus.
// ---------------------------------------------------------------------------

struct ParallelCorpus {
  LanguageId lang_a;
  LanguageId lang_b;
  std::vector<std::pair<std::string, std::string>> pairs;  // raw phrase text
  std::size_t skipped_lines = 0;  // malformed or empty-after-normalization
};

// Reads a tab-delimited pair file: column 1 = language A phrase, column 2 =
// language B phrase, further columns (attribution etc.) ignored. Lines with
// fewer than two columns, or whose phrases normalize to nothing, are skipped
// and counted.
inline ParallelCorpus load_tsv(const std::string& path, LanguageId lang_a,
                               LanguageId lang_b) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  ParallelCorpus corpus{std::move(lang_a), std::move(lang_b), {}, 0};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab1 = line.find('\t');
    if (tab1 == std::string::npos) {
      ++corpus.skipped_lines;
      continue;
    }
    auto tab2 = line.find('\t', tab1 + 1);
    std::string a = line.substr(0, tab1);
    std::string b = tab2 == std::string::npos ? line.substr(tab1 + 1)
                                              : line.substr(tab1 + 1, tab2 - tab1 - 1);
    if (normalize(a).empty() || normalize(b).empty()) {
      ++corpus.skipped_lines;
      continue;
    }
    corpus.pairs.emplace_back(std::move(a), std::move(b));
  }
  if (corpus.pairs.empty()) throw EmptyCorpusError("no usable pairs in " + path);
  return corpus;
}

// ---------------------------------------------------------------------------
// Vocabulary.
// ---------------------------------------------------------------------------

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kStartId = 1;
inline constexpr std::int32_t kEndId = 2;
inline constexpr std::int32_t kUnkId = 3;
inline constexpr const char* kReservedTokens[4] = {"<pad>", "<start>", "<end>", "<unk>"};

class Vocabulary {
 public:
  explicit Vocabulary(LanguageId language) : language_(std::move(language)) {
    for (const char* t : kReservedTokens) {
      token_to_id_.emplace(t, static_cast<std::int32_t>(id_to_token_.size()));
      id_to_token_.emplace_back(t);
    }
  }

  const LanguageId& language() const { return language_; }
  std::size_t size() const { return id_to_token_.size(); }

  // Appends a non-reserved token; returns its id.
  std::int32_t add_token(const std::string& token) {
    auto [it, inserted] =
        token_to_id_.emplace(token, static_cast<std::int32_t>(id_to_token_.size()));
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  // Encode-time lookup: unknown tokens map to <unk>.
  std::int32_t id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
  }

  const std::string& token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw IndexError("token id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(id_to_token_.size()) + ")");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

 private:
  LanguageId language_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

enum class Side { a, b };

// Frequency-ranked vocabulary over one side of the corpus; ties break
// lexicographically. max_size caps the total size including the four reserved
// ids.
inline Vocabulary build_vocab(const ParallelCorpus& corpus, Side side,
                              std::optional<std::size_t> max_size = std::nullopt) {
  if (corpus.pairs.empty()) throw ContractError("build_vocab on empty corpus");
  if (max_size && *max_size < 5) {
    throw ContractError("vocabulary max_size must be at least 5, got " +
                        std::to_string(*max_size));
  }
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& [a, b] : corpus.pairs) {
    for (const auto& tok : tokenize(side == Side::a ? a : b)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  Vocabulary vocab(side == Side::a ? corpus.lang_a : corpus.lang_b);
  const std::size_t cap = max_size ? *max_size - 4 : ranked.size();
  for (std::size_t i = 0; i < ranked.size() && i < cap; ++i) {
    vocab.add_token(ranked[i].first);
  }
  return vocab;
}

// [start] + token ids + [end]; unknown tokens encode as <unk>. Sentences with
// more than max_len - 2 tokens are rejected.
inline std::vector<std::int32_t> encode_sentence(const std::string& text,
                                                 const Vocabulary& vocab,
                                                 std::size_t max_len) {
  std::vector<std::string> tokens = tokenize(text);
  if (max_len < 2 || tokens.size() > max_len - 2) {
    throw LengthError("sentence of " + std::to_string(tokens.size()) +
                          " tokens exceeds max_len " + std::to_string(max_len),
                      tokens.size());
  }
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kStartId);
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  ids.push_back(kEndId);
  return ids;
}

// Vocabulary file: one token per line, id = 0-based line number, first four
// lines are the reserved tokens.
inline void write_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file: " + path);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.token(static_cast<std::int32_t>(i)) << '\n';
  }
}

inline Vocabulary read_vocab(const std::string& path, LanguageId language) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary file: " + path);
  Vocabulary vocab(std::move(language));
  std::string line;
  std::size_t idx = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (idx < 4) {
      if (line != kReservedTokens[idx]) {
        throw IoError("vocabulary file " + path + " line " + std::to_string(idx) +
                      " must be " + kReservedTokens[idx] + ", got '" + line + "'");
      }
    } else {
      vocab.add_token(line);
    }
    ++idx;
  }
  if (idx < 4) throw IoError("vocabulary file " + path + " is truncated");
  return vocab;
}

// ---------------------------------------------------------------------------
// Batching.
// ---------------------------------------------------------------------------

struct IntMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::int32_t> v;

  IntMatrix() = default;
  IntMatrix(std::size_t r, std::size_t c, std::int32_t fill = 0)
      : rows(r), cols(c), v(r * c, fill) {}

  std::int32_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  std::vector<std::int32_t> col(std::size_t c) const {
    std::vector<std::int32_t> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
    return out;
  }
};

struct BoolMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> v;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), v(r * c, fill ? 1 : 0) {}

  bool at(std::size_t r, std::size_t c) const { return v[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool b) { v[r * cols + c] = b ? 1 : 0; }
};

// One translation direction over a group of pairs. Source rows carry the bare
// token ids; target rows are framed as start ... end. Both are right-padded
// with the pad id to the batch's own width.
struct Batch {
  LanguageId source_lang;
  LanguageId target_lang;
  IntMatrix source_ids;
  IntMatrix target_ids;
  BoolMatrix pad_mask_src;  // true at real source tokens
  BoolMatrix pad_mask_tgt;  // true at non-pad target positions
};

// The same pairs exposed in both directions, so one optimizer step can
// consume identical data for A->B and B->A.
struct PairBatch {
  Batch ab;
  Batch ba;
};

namespace detail {

struct EncodedSide {
  std::vector<std::vector<std::int32_t>> framed;  // start ... end
};

inline void fill_direction(Batch& batch, const EncodedSide& src, const EncodedSide& tgt,
                           const std::vector<std::size_t>& rows) {
  const std::size_t n = rows.size();
  std::size_t src_w = 1, tgt_w = 2;
  for (std::size_t r : rows) {
    src_w = std::max(src_w, src.framed[r].size() - 2);  // without start/end
    tgt_w = std::max(tgt_w, tgt.framed[r].size());
  }
  batch.source_ids = IntMatrix(n, src_w, kPadId);
  batch.target_ids = IntMatrix(n, tgt_w, kPadId);
  batch.pad_mask_src = BoolMatrix(n, src_w, false);
  batch.pad_mask_tgt = BoolMatrix(n, tgt_w, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = src.framed[rows[i]];
    const auto& t = tgt.framed[rows[i]];
    for (std::size_t j = 0; j + 2 < s.size(); ++j) {
      batch.source_ids.at(i, j) = s[j + 1];
      batch.pad_mask_src.set(i, j, true);
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
      batch.target_ids.at(i, j) = t[j];
      batch.pad_mask_tgt.set(i, j, true);
    }
  }
}

}  // namespace detail

// Splits the corpus into ceil(N / batch_size) batches. When shuffle is set the
// pair order is permuted with the caller's Rng, so batch order is a pure
// function of the seed.
inline std::vector<PairBatch> make_batches(const ParallelCorpus& corpus,
                                           const Vocabulary& vocab_a,
                                           const Vocabulary& vocab_b,
                                           std::size_t batch_size, std::size_t max_len,
                                           Rng& rng, bool shuffle) {
  if (batch_size < 1) throw ContractError("batch_size must be positive");
  const std::size_t n = corpus.pairs.size();

  detail::EncodedSide side_a, side_b;
  side_a.framed.reserve(n);
  side_b.framed.reserve(n);
  for (const auto& [a, b] : corpus.pairs) {
    side_a.framed.push_back(encode_sentence(a, vocab_a, max_len));
    side_b.framed.push_back(encode_sentence(b, vocab_b, max_len));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) rng.shuffle(order);

  std::vector<PairBatch> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> rows(
        order.begin() + start,
        order.begin() + std::min(n, start + batch_size));
    PairBatch pb;
    pb.ab.source_lang = corpus.lang_a;
    pb.ab.target_lang = corpus.lang_b;
    detail::fill_direction(pb.ab, side_a, side_b, rows);
    pb.ba.source_lang = corpus.lang_b;
    pb.ba.target_lang = corpus.lang_a;
    detail::fill_direction(pb.ba, side_b, side_a, rows);
    batches.push_back(std::move(pb));
  }
  return batches;
}

// Drops pairs that do not fit max_len on either side; returns the kept corpus
// and the number of dropped pairs.
inline std::pair<ParallelCorpus, std::size_t> filter_by_length(
    const ParallelCorpus& corpus, std::size_t max_len) {
  ParallelCorpus kept{corpus.lang_a, corpus.lang_b, {}, corpus.skipped_lines};
  std::size_t dropped = 0;
  for (const auto& p : corpus.pairs) {
    if (tokenize(p.first).size() <= max_len - 2 &&
        tokenize(p.second).size() <= max_len - 2) {
      kept.pairs.push_back(p);
    } else {
      ++dropped;
    }
  }
  return {std::move(kept), dropped};
}

}  // namespace uvnmt
