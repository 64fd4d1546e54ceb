#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uvnmt/corpus.hpp"
#include "uvnmt/tensor.hpp"

namespace uvnmt {

// ---------------------------------------------------------------------------
// Parameters.
//
// One encoder GRU and one decoder GRU are shared by every language; each
// registered language owns an embedding table, an output head, and the
// attention parameters used when that language is the translation target.
// ---------------------------------------------------------------------------

template <typename S>
struct GateParams {
  Tensor<S> W;  // d_in x d_h
  Tensor<S> U;  // d_h x d_h
  Tensor<S> b;  // d_h
};

template <typename S>
struct GruParams {
  std::size_t d_in = 0;
  std::size_t d_h = 0;
  GateParams<S> update;
  GateParams<S> relevance;
  GateParams<S> candidate;
};

template <typename S>
struct AttentionParams {
  Tensor<S> W_a;  // d_h x d_h
  Tensor<S> v_a;  // d_h x 1
};

template <typename S>
struct LanguagePack {
  LanguageId language;
  Tensor<S> embedding;  // V x d_e, shared between source and target roles
  Tensor<S> head_W;     // 2*d_h x V; the head reads concat(hidden, context)
  Tensor<S> head_b;     // V
  AttentionParams<S> attention;  // used when this language is the target

  std::size_t vocab_size() const { return embedding.shape()[0]; }
};

template <typename S>
struct UniversalModel {
  std::size_t d_e = 0;
  std::size_t d_h = 0;
  GruParams<S> encoder;  // d_in = d_e
  GruParams<S> decoder;  // d_in = d_e + d_h (previous context is fed back in)
  std::vector<LanguagePack<S>> packs;

  bool has_language(const LanguageId& lang) const {
    for (const auto& p : packs) {
      if (p.language == lang) return true;
    }
    return false;
  }

  const LanguagePack<S>& pack(const LanguageId& lang) const {
    for (const auto& p : packs) {
      if (p.language == lang) return p;
    }
    throw RegistryError("language '" + lang.code + "' is not registered");
  }

  LanguagePack<S>& pack(const LanguageId& lang) {
    for (auto& p : packs) {
      if (p.language == lang) return p;
    }
    throw RegistryError("language '" + lang.code + "' is not registered");
  }
};

// ---------------------------------------------------------------------------
// Initialization. Weight matrices draw from the Glorot uniform distribution;
// biases start at zero. The draw order below matches the parameter visiting
// order, so a seed fixes every value.
// ---------------------------------------------------------------------------

template <typename S>
GateParams<S> init_gate(std::size_t d_in, std::size_t d_h, Rng& rng) {
  GateParams<S> g;
  g.W = glorot_uniform<S>({d_in, d_h}, rng).set_requires_grad(true);
  g.U = glorot_uniform<S>({d_h, d_h}, rng).set_requires_grad(true);
  g.b = Tensor<S>({d_h}).set_requires_grad(true);
  return g;
}

template <typename S>
GruParams<S> init_gru(std::size_t d_in, std::size_t d_h, Rng& rng) {
  GruParams<S> gru;
  gru.d_in = d_in;
  gru.d_h = d_h;
  gru.update = init_gate<S>(d_in, d_h, rng);
  gru.relevance = init_gate<S>(d_in, d_h, rng);
  gru.candidate = init_gate<S>(d_in, d_h, rng);
  return gru;
}

template <typename S>
LanguagePack<S> init_pack(const LanguageId& lang, std::size_t vocab_size,
                          std::size_t d_e, std::size_t d_h, Rng& rng) {
  LanguagePack<S> p;
  p.language = lang;
  p.embedding = glorot_uniform<S>({vocab_size, d_e}, rng).set_requires_grad(true);
  p.head_W = glorot_uniform<S>({2 * d_h, vocab_size}, rng).set_requires_grad(true);
  p.head_b = Tensor<S>({vocab_size}).set_requires_grad(true);
  p.attention.W_a = glorot_uniform<S>({d_h, d_h}, rng).set_requires_grad(true);
  p.attention.v_a = glorot_uniform<S>({d_h, 1}, rng).set_requires_grad(true);
  return p;
}

template <typename S>
UniversalModel<S> init_model(std::size_t d_e, std::size_t d_h,
                             const std::vector<std::pair<LanguageId, std::size_t>>& langs,
                             Rng& rng) {
  UniversalModel<S> m;
  m.d_e = d_e;
  m.d_h = d_h;
  m.encoder = init_gru<S>(d_e, d_h, rng);
  m.decoder = init_gru<S>(d_e + d_h, d_h, rng);
  for (const auto& [lang, vocab_size] : langs) {
    m.packs.push_back(init_pack<S>(lang, vocab_size, d_e, d_h, rng));
  }
  return m;
}

// Registers one more language against the existing shared encoder/decoder.
template <typename S>
void add_language(UniversalModel<S>& model, const LanguageId& lang,
                  std::size_t vocab_size, Rng& rng) {
  model.packs.push_back(init_pack<S>(lang, vocab_size, model.d_e, model.d_h, rng));
}

// Visits every parameter as (name, tensor) in the fixed checkpoint order.
template <typename S, typename F>
void visit_parameters(UniversalModel<S>& model, F&& f) {
  auto visit_gru = [&](const std::string& prefix, GruParams<S>& g) {
    const std::pair<std::string, GateParams<S>*> gates[] = {
        {"update", &g.update}, {"relevance", &g.relevance}, {"candidate", &g.candidate}};
    for (auto& [name, gate] : gates) {
      f(prefix + "." + name + ".W", gate->W);
      f(prefix + "." + name + ".U", gate->U);
      f(prefix + "." + name + ".b", gate->b);
    }
  };
  visit_gru("encoder", model.encoder);
  visit_gru("decoder", model.decoder);
  for (auto& p : model.packs) {
    const std::string prefix = "lang." + p.language.code;
    f(prefix + ".embedding", p.embedding);
    f(prefix + ".head.W", p.head_W);
    f(prefix + ".head.b", p.head_b);
    f(prefix + ".attn.W_a", p.attention.W_a);
    f(prefix + ".attn.v_a", p.attention.v_a);
  }
}

template <typename S>
std::size_t parameter_count(const GruParams<S>& g) {
  std::size_t n = 0;
  for (const GateParams<S>* gate : {&g.update, &g.relevance, &g.candidate}) {
    n += gate->W.size() + gate->U.size() + gate->b.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Forward computation.
// ---------------------------------------------------------------------------

// One GRU step over a batch of rows:
//   u = sigmoid(x W_u + h U_u + b_u)
//   r = sigmoid(x W_r + h U_r + b_r)
//   c = tanh(x W_c + (r . h) U_c + b_c)
//   h' = u . c + (1 - u) . h
template <typename S>
Tensor<S> gru_step(Tape<S>& tape, const GruParams<S>& gru, const Tensor<S>& x,
                   const Tensor<S>& h_prev) {
  if (x.ndim() != 2 || x.shape()[1] != gru.d_in || h_prev.ndim() != 2 ||
      h_prev.shape()[1] != gru.d_h || x.shape()[0] != h_prev.shape()[0]) {
    throw ShapeError("gru_step got x " + shape_str(x.shape()) + ", h " +
                     shape_str(h_prev.shape()) + " for d_in=" + std::to_string(gru.d_in) +
                     " d_h=" + std::to_string(gru.d_h));
  }
  auto pre = [&](const GateParams<S>& g, const Tensor<S>& h_term) {
    return add(tape, add(tape, matmul(tape, x, g.W), matmul(tape, h_term, g.U)), g.b);
  };
  Tensor<S> u = sigmoid(tape, pre(gru.update, h_prev));
  Tensor<S> r = sigmoid(tape, pre(gru.relevance, h_prev));
  Tensor<S> rh = mul(tape, r, h_prev);
  Tensor<S> c = tanh(tape, pre(gru.candidate, rh));
  Tensor<S> ones = Tensor<S>::full({x.shape()[0], gru.d_h}, S{1});
  return add(tape, mul(tape, u, c), mul(tape, sub(tape, ones, u), h_prev));
}

template <typename S>
struct EncoderOut {
  std::vector<Tensor<S>> states;  // one B x d_h tensor per source position
  Tensor<S> h_final;              // state at each row's last real token
};

// Runs the shared encoder over the source ids, embedding through the source
// language's pack, h_0 = 0. Pad positions are processed like any other input;
// they are excluded later by the attention mask, and h_final is taken at each
// row's last real token so trailing padding cannot leak into the decoder.
template <typename S>
EncoderOut<S> encode(Tape<S>& tape, const UniversalModel<S>& model,
                     const IntMatrix& source_ids, const BoolMatrix& pad_mask_src,
                     const LanguageId& source_lang) {
  const LanguagePack<S>& pack = model.pack(source_lang);
  const std::size_t batch = source_ids.rows, steps = source_ids.cols;

  EncoderOut<S> out;
  Tensor<S> h({batch, model.d_h});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<S> x = gather_rows(tape, pack.embedding, source_ids.col(t));
    h = gru_step(tape, model.encoder, x, h);
    out.states.push_back(h);
  }

  std::vector<std::size_t> last(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t idx = steps;
    for (std::size_t t = 0; t < steps; ++t) {
      if (pad_mask_src.at(r, t)) idx = t;
    }
    if (idx == steps) throw ContractError("source row " + std::to_string(r) + " is empty");
    last[r] = idx;
  }
  Tensor<S> h_final({batch, model.d_h});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor<S> pick({batch, 1});
    bool any = false;
    for (std::size_t r = 0; r < batch; ++r) {
      if (last[r] == t) {
        pick.at(r) = S{1};
        any = true;
      }
    }
    if (any) h_final = add(tape, h_final, scale_rows(tape, out.states[t], pick));
  }
  out.h_final = h_final;
  return out;
}

// Multiplicative attention score with a learned per-dimension weighting:
//   score(h_t, hbar_s) = v_a . (h_t . (W_a hbar_s))
// With W_a = I and v_a = 1 this reduces to the plain dot product.
template <typename S>
S attention_score(const AttentionParams<S>& ap, const Tensor<S>& h_t,
                  const Tensor<S>& h_bar) {
  const std::size_t d = ap.W_a.shape()[0];
  if (h_t.size() != d || h_bar.size() != d) {
    throw ShapeError("attention_score got " + shape_str(h_t.shape()) + " and " +
                     shape_str(h_bar.shape()) + " for d_h=" + std::to_string(d));
  }
  S score{0};
  for (std::size_t i = 0; i < d; ++i) {
    S proj{0};
    for (std::size_t j = 0; j < d; ++j) proj += ap.W_a.at(i, j) * h_bar.at(j);
    score += ap.v_a.at(i) * h_t.at(i) * proj;
  }
  return score;
}

namespace detail {

// Additive mask: 0 at real source positions, -inf at padding.
template <typename S>
Tensor<S> attention_mask(const BoolMatrix& pad_mask_src) {
  Tensor<S> m({pad_mask_src.rows, pad_mask_src.cols});
  for (std::size_t r = 0; r < pad_mask_src.rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < pad_mask_src.cols; ++c) {
      if (pad_mask_src.at(r, c)) {
        any = true;
      } else {
        m.at(r, c) = -std::numeric_limits<S>::infinity();
      }
    }
    if (!any) {
      throw ContractError("attention row " + std::to_string(r) +
                          " has every position masked");
    }
  }
  return m;
}

}  // namespace detail

// Source-side view prepared once per (encoded batch, target language):
// encoder states projected through the target's W_a, plus the pad mask.
template <typename S>
struct AttendedSource {
  std::vector<Tensor<S>> states;
  std::vector<Tensor<S>> projected;  // states[s] * W_a^T
  Tensor<S> mask;                    // additive, 0 or -inf
  const LanguagePack<S>* target_pack = nullptr;
};

template <typename S>
AttendedSource<S> prepare_attended(Tape<S>& tape, const UniversalModel<S>& model,
                                   const EncoderOut<S>& enc,
                                   const BoolMatrix& pad_mask_src,
                                   const LanguageId& target_lang) {
  const LanguagePack<S>& pack = model.pack(target_lang);
  AttendedSource<S> att;
  att.states = enc.states;
  Tensor<S> w_t = transpose(tape, pack.attention.W_a);
  att.projected.reserve(enc.states.size());
  for (const auto& s : enc.states) att.projected.push_back(matmul(tape, s, w_t));
  att.mask = detail::attention_mask<S>(pad_mask_src);
  att.target_pack = &pack;
  return att;
}

template <typename S>
struct Attention {
  Tensor<S> context;  // B x d_h
  Tensor<S> alpha;    // B x T over source positions
};

template <typename S>
Attention<S> attend_prepared(Tape<S>& tape, const AttendedSource<S>& att,
                             const Tensor<S>& h_t) {
  const std::size_t steps = att.states.size();
  std::vector<Tensor<S>> cols;
  cols.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    cols.push_back(
        matmul(tape, mul(tape, h_t, att.projected[s]), att.target_pack->attention.v_a));
  }
  Tensor<S> scores = add(tape, concat_cols(tape, cols), att.mask);
  Tensor<S> alpha = softmax(tape, scores, 1);
  Tensor<S> context({h_t.shape()[0], h_t.shape()[1]});
  for (std::size_t s = 0; s < steps; ++s) {
    context = add(tape, context, scale_rows(tape, att.states[s], slice_col(tape, alpha, s)));
  }
  return {context, alpha};
}

// Attention over raw encoder states: pad positions score -inf before the
// softmax, alpha rows sum to one, context = sum_s alpha_s * state_s.
template <typename S>
Attention<S> attend(Tape<S>& tape, const AttentionParams<S>& ap, const Tensor<S>& h_t,
                    const std::vector<Tensor<S>>& states,
                    const BoolMatrix& pad_mask_src) {
  AttendedSource<S> att;
  att.states = states;
  Tensor<S> w_t = transpose(tape, ap.W_a);
  for (const auto& s : states) att.projected.push_back(matmul(tape, s, w_t));
  att.mask = detail::attention_mask<S>(pad_mask_src);
  // attend_prepared only touches the attention parameters through the pack.
  LanguagePack<S> tmp;
  tmp.attention = ap;
  att.target_pack = &tmp;
  return attend_prepared(tape, att, h_t);
}

template <typename S>
struct DecoderState {
  Tensor<S> h;        // B x d_h
  Tensor<S> context;  // B x d_h, fed into the next step's input
};

template <typename S>
struct DecodeStep {
  Tensor<S> logits;  // B x V_target
  Tensor<S> alpha;   // B x T_src
};

// One decoder step: embed the previous target token, concatenate the previous
// context (input feeding), advance the shared GRU, attend with the target
// language's parameters, and project concat(hidden, context) through the
// target head.
template <typename S>
DecodeStep<S> decode_step(Tape<S>& tape, const UniversalModel<S>& model,
                          const std::vector<std::int32_t>& prev_ids,
                          const AttendedSource<S>& att, DecoderState<S>& state) {
  const LanguagePack<S>& pack = *att.target_pack;
  Tensor<S> e = gather_rows(tape, pack.embedding, prev_ids);
  Tensor<S> x = concat_cols(tape, e, state.context);
  Tensor<S> h_new = gru_step(tape, model.decoder, x, state.h);
  Attention<S> a = attend_prepared(tape, att, h_new);
  Tensor<S> logits =
      add(tape, matmul(tape, concat_cols(tape, h_new, a.context), pack.head_W), pack.head_b);
  state.h = h_new;
  state.context = a.context;
  return {logits, a.alpha};
}

template <typename S>
struct ForwardResult {
  std::vector<Tensor<S>> logits;  // T_tgt - 1 tensors of B x V
  std::vector<Tensor<S>> alpha;   // T_tgt - 1 tensors of B x T_src
};

// Teacher-forced pass over one direction of a batch: the decoder consumes the
// gold token at position j-1 and its logits at output index j-1 predict the
// gold token at position j. The decoder starts from the encoder's final state
// and a zero context.
template <typename S>
ForwardResult<S> forward_teacher_forced(Tape<S>& tape, const UniversalModel<S>& model,
                                        const Batch& batch) {
  EncoderOut<S> enc =
      encode(tape, model, batch.source_ids, batch.pad_mask_src, batch.source_lang);
  AttendedSource<S> att =
      prepare_attended(tape, model, enc, batch.pad_mask_src, batch.target_lang);
  DecoderState<S> state{enc.h_final,
                        Tensor<S>({batch.target_ids.rows, model.d_h})};
  ForwardResult<S> out;
  for (std::size_t j = 0; j + 1 < batch.target_ids.cols; ++j) {
    DecodeStep<S> step = decode_step(tape, model, batch.target_ids.col(j), att, state);
    out.logits.push_back(step.logits);
    out.alpha.push_back(step.alpha);
  }
  return out;
}

}  // namespace uvnmt
