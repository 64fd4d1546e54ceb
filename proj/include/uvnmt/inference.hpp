#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvnmt/corpus.hpp"
#include "uvnmt/model.hpp"
#include "uvnmt/tensor.hpp"

namespace uvnmt {

struct Translation {
  std::vector<std::string> source_tokens;  // normalized tokens fed to the encoder
  std::vector<std::string> tokens;         // predicted tokens, control tokens stripped
  std::vector<std::vector<double>> alpha;  // one attention row per predicted token
  bool reached_end = false;                // decoder emitted the end token
};

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Greedy decoding: starting from the start token, repeatedly take the argmax
// of the logits (ties break toward the lowest id) until the end token or the
// step limit. Attention rows are kept for each emitted token.
template <typename S>
Translation greedy_translate(const UniversalModel<S>& model, const Vocabulary& src_vocab,
                             const Vocabulary& tgt_vocab, const std::string& text,
                             std::size_t max_len) {
  Translation result;
  result.source_tokens = tokenize(text);
  if (result.source_tokens.empty()) {
    throw ContractError("cannot translate empty text");
  }
  if (max_len < 2 || result.source_tokens.size() > max_len - 2) {
    throw LengthError("source of " + std::to_string(result.source_tokens.size()) +
                          " tokens exceeds max_len " + std::to_string(max_len),
                      result.source_tokens.size());
  }

  const std::size_t steps = result.source_tokens.size();
  IntMatrix source_ids(1, steps);
  BoolMatrix src_mask(1, steps, true);
  for (std::size_t t = 0; t < steps; ++t) {
    source_ids.at(0, t) = src_vocab.id(result.source_tokens[t]);
  }

  Tape<S> tape;
  EncoderOut<S> enc = encode(tape, model, source_ids, src_mask, src_vocab.language());
  AttendedSource<S> att =
      prepare_attended(tape, model, enc, src_mask, tgt_vocab.language());
  DecoderState<S> state{enc.h_final, Tensor<S>({1, model.d_h})};

  std::int32_t prev = kStartId;
  for (std::size_t i = 0; i < max_len; ++i) {
    DecodeStep<S> step = decode_step(tape, model, {prev}, att, state);
    const S* row = step.logits.data();
    std::int32_t best = 0;
    for (std::size_t j = 1; j < step.logits.shape()[1]; ++j) {
      if (row[j] > row[best]) best = static_cast<std::int32_t>(j);
    }
    if (best == kEndId) {
      result.reached_end = true;
      break;
    }
    prev = best;
    if (best == kPadId || best == kStartId) continue;  // not a word; keep decoding
    result.tokens.push_back(tgt_vocab.token(best));
    std::vector<double> arow(steps);
    for (std::size_t s = 0; s < steps; ++s) {
      arow[s] = static_cast<double>(step.alpha.at(0, s));
    }
    result.alpha.push_back(std::move(arow));
  }
  return result;
}

}  // namespace uvnmt
