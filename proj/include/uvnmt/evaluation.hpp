#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "uvnmt/corpus.hpp"
#include "uvnmt/errors.hpp"
#include "uvnmt/inference.hpp"
#include "uvnmt/model.hpp"

namespace uvnmt {

// ---------------------------------------------------------------------------
// Sentence-level BLEU.
// ---------------------------------------------------------------------------

// Smallest positive normalized double: the substitute for zero n-gram
// precisions before the logarithm, so a score is always defined. Floored
// log terms are what produce the ~1e-155 magnitude scores short sentences get.
inline constexpr double kBleuFloor = 2.2250738585072014e-308;

struct BleuReport {
  std::vector<double> precisions;  // raw p_n, zero when no n-gram matched
  std::vector<double> weights;
  double bp = 0.0;
  double bleu = 0.0;
  double log_bleu = 0.0;
  std::vector<bool> floored;  // true where the floor replaced p_n
};

inline nlohmann::json to_json(const BleuReport& r) {
  nlohmann::json j;
  j["precisions"] = r.precisions;
  j["bp"] = r.bp;
  j["bleu"] = r.bleu;
  j["log_bleu"] = r.log_bleu;
  j["weights"] = r.weights;
  j["floored"] = r.floored;
  return j;
}

struct NgramCounts {
  std::size_t clipped = 0;  // candidate n-gram matches, clipped per reference
  std::size_t total = 0;    // candidate n-gram count
};

// Modified n-gram precision counts: each distinct candidate n-gram is credited
// at most its maximum count over the references.
inline NgramCounts modified_precision(const std::vector<std::string>& candidate,
                                      const std::vector<std::vector<std::string>>& references,
                                      std::size_t n) {
  if (n < 1) throw ContractError("n-gram order must be at least 1");
  auto count_ngrams = [n](const std::vector<std::string>& tokens) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (tokens.size() >= n) {
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        counts[{tokens.begin() + i, tokens.begin() + i + n}] += 1;
      }
    }
    return counts;
  };

  auto cand_counts = count_ngrams(candidate);
  NgramCounts out;
  out.total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  for (const auto& [gram, count] : cand_counts) {
    std::size_t best = 0;
    for (const auto& ref : references) {
      auto ref_counts = count_ngrams(ref);
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) best = std::max(best, it->second);
    }
    out.clipped += std::min(count, best);
  }
  return out;
}

// Reference length closest to the candidate length; ties prefer the shorter.
inline std::size_t effective_reference_length(
    std::size_t c, const std::vector<std::vector<std::string>>& references) {
  std::size_t best = references.front().size();
  for (const auto& ref : references) {
    const std::size_t r = ref.size();
    const auto dist = [c](std::size_t x) {
      return x > c ? x - c : c - x;
    };
    if (dist(r) < dist(best) || (dist(r) == dist(best) && r < best)) best = r;
  }
  return best;
}

// Brevity penalty: 1 if c > r, e^(1 - r/c) if c <= r.
inline double brevity_penalty(std::size_t c, std::size_t r) {
  if (c == 0) throw ContractError("brevity penalty needs a nonempty candidate");
  if (c > r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

inline BleuReport bleu(const std::vector<std::string>& candidate,
                       const std::vector<std::vector<std::string>>& references,
                       std::size_t max_n = 4, std::vector<double> weights = {},
                       double floor = kBleuFloor) {
  if (candidate.empty()) throw ContractError("bleu: candidate is empty");
  if (references.empty()) throw ContractError("bleu: no references");
  for (const auto& ref : references) {
    if (ref.empty()) throw ContractError("bleu: empty reference");
  }
  if (weights.empty()) {
    weights.assign(max_n, 1.0 / static_cast<double>(max_n));
  }
  if (weights.size() != max_n) {
    throw ContractError("bleu: expected " + std::to_string(max_n) + " weights");
  }

  BleuReport report;
  report.weights = weights;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    NgramCounts counts = modified_precision(candidate, references, n);
    double p = counts.total == 0
                   ? 0.0
                   : static_cast<double>(counts.clipped) / static_cast<double>(counts.total);
    report.precisions.push_back(p);
    const bool flo = p <= 0.0;
    report.floored.push_back(flo);
    log_sum += weights[n - 1] * std::log(flo ? floor : p);
  }
  const std::size_t c = candidate.size();
  const std::size_t r = effective_reference_length(c, references);
  report.bp = brevity_penalty(c, r);
  report.bleu = report.bp * std::exp(log_sum);
  report.log_bleu =
      std::min(1.0 - static_cast<double>(r) / static_cast<double>(c), 0.0) + log_sum;
  return report;
}

// ---------------------------------------------------------------------------
// Attention heatmap export.
// ---------------------------------------------------------------------------

struct AttentionMap {
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  std::vector<double> weights;  // row-major, |target| x |source|

  std::size_t rows() const { return target_tokens.size(); }
  std::size_t cols() const { return source_tokens.size(); }
  double at(std::size_t r, std::size_t c) const { return weights[r * cols() + c]; }
};

inline AttentionMap make_attention_map(const Translation& t) {
  AttentionMap map;
  map.source_tokens = t.source_tokens;
  map.target_tokens = t.tokens;
  map.weights.reserve(t.alpha.size() * t.source_tokens.size());
  for (const auto& row : t.alpha) {
    map.weights.insert(map.weights.end(), row.begin(), row.end());
  }
  return map;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Header row: empty cell then source tokens. Each body row: target token label
// then the attention weights with exactly six decimal places. LF line ends.
inline std::string attention_csv(const AttentionMap& map) {
  std::string out;
  for (const auto& tok : map.source_tokens) {
    out += ',';
    out += detail::csv_field(tok);
  }
  out += '\n';
  char buf[32];
  for (std::size_t r = 0; r < map.rows(); ++r) {
    out += detail::csv_field(map.target_tokens[r]);
    for (std::size_t c = 0; c < map.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.6f", map.at(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// Parses the format written by attention_csv (CRLF or LF accepted).
inline AttentionMap parse_attention_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&]() {
    if (field_started || !record.empty()) {
      end_field();
      records.push_back(record);
      record.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
      field_started = true;
    } else if (ch == '\n') {
      end_record();
    } else if (ch == '\r') {
      // swallowed; '\n' ends the record
    } else {
      field += ch;
      field_started = true;
    }
  }
  end_record();

  if (records.empty()) throw IoError("attention CSV has no header row");
  AttentionMap map;
  const auto& header = records.front();
  for (std::size_t i = 1; i < header.size(); ++i) map.source_tokens.push_back(header[i]);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& row = records[r];
    if (row.size() != header.size()) {
      throw IoError("attention CSV row " + std::to_string(r) + " has " +
                    std::to_string(row.size()) + " fields, header has " +
                    std::to_string(header.size()));
    }
    map.target_tokens.push_back(row.front());
    for (std::size_t c = 1; c < row.size(); ++c) {
      map.weights.push_back(std::stod(row[c]));
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation: greedy-translate each source, score against the
// gold side. The mean is the arithmetic mean of the sentence scores (not a
// standard corpus BLEU).
// ---------------------------------------------------------------------------

struct SentenceEval {
  std::string source;
  std::string reference;  // normalized
  std::string candidate;  // normalized tokens, joined
  BleuReport report;
};

struct EvalResult {
  std::vector<SentenceEval> sentences;
  double mean_bleu = 0.0;
};

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& s : r.sentences) {
    nlohmann::json j = to_json(s.report);
    j["source"] = s.source;
    j["reference"] = s.reference;
    j["candidate"] = s.candidate;
    reports.push_back(std::move(j));
  }
  return nlohmann::json{{"reports", std::move(reports)}, {"mean_bleu", r.mean_bleu}};
}

// An exact candidate/reference match scores 1 for every order, so the n-gram
// machinery (and its zero floor on short sentences) is bypassed.
inline BleuReport perfect_report(std::size_t max_n) {
  BleuReport r;
  r.precisions.assign(max_n, 1.0);
  r.weights.assign(max_n, 1.0 / static_cast<double>(max_n));
  r.floored.assign(max_n, false);
  r.bp = 1.0;
  r.bleu = 1.0;
  r.log_bleu = 0.0;
  return r;
}

// `pairs` holds (source text, gold text). With oracle set, the gold side is
// scored against itself (a scorer self-test).
template <typename S>
EvalResult evaluate_translation(const UniversalModel<S>& model,
                                const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                                const std::vector<std::pair<std::string, std::string>>& pairs,
                                std::size_t max_n, std::size_t max_len,
                                bool oracle = false) {
  if (pairs.empty()) throw ContractError("evaluation set is empty");
  EvalResult result;
  double sum = 0.0;
  for (const auto& [source, gold] : pairs) {
    SentenceEval s;
    s.source = source;
    std::vector<std::string> ref_tokens = tokenize(gold);
    s.reference = join_tokens(ref_tokens);
    std::vector<std::string> cand_tokens =
        oracle ? ref_tokens
               : greedy_translate(model, src_vocab, tgt_vocab, source, max_len).tokens;
    s.candidate = join_tokens(cand_tokens);
    if (cand_tokens == ref_tokens) {
      s.report = perfect_report(max_n);
    } else if (cand_tokens.empty()) {
      // An empty decode scores zero; nothing to feed the scorer.
      s.report.weights.assign(max_n, 1.0 / static_cast<double>(max_n));
      s.report.precisions.assign(max_n, 0.0);
      s.report.floored.assign(max_n, true);
      s.report.bp = 0.0;
      s.report.bleu = 0.0;
      s.report.log_bleu = -std::numeric_limits<double>::infinity();
    } else {
      s.report = bleu(cand_tokens, {ref_tokens}, max_n);
    }
    sum += s.report.bleu;
    result.sentences.push_back(std::move(s));
  }
  result.mean_bleu = sum / static_cast<double>(pairs.size());
  return result;
}

}  // namespace uvnmt
