#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uvnmt/corpus.hpp"
#include "uvnmt/io.hpp"
#include "uvnmt/model.hpp"
#include "uvnmt/tensor.hpp"

namespace uvnmt {

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  std::size_t d_e = 128;
  std::size_t d_h = 256;
  double alpha = 1e-3;   // base learning rate
  double gamma = 1.0;    // per-epoch decay factor; 1 means constant rate
  std::uint64_t seed = 42;
  std::size_t max_len = 16;
  std::optional<double> grad_clip = 5.0;  // global-norm clip; nullopt disables
  int precision = 32;                     // 32 or 64
  std::optional<std::size_t> subset;      // optional pair-count cap

  void validate() const {
    if (batch_size < 1) throw ContractError("batch_size must be positive");
    if (d_e < 1 || d_h < 1) throw ContractError("d_e and d_h must be positive");
    if (!(alpha > 0)) throw ContractError("alpha must be > 0");
    if (!(gamma > 0) || gamma > 1.0) throw ContractError("gamma must be in (0, 1]");
    if (max_len < 3) throw ContractError("max_len must be at least 3");
    if (grad_clip && !(*grad_clip > 0)) throw ContractError("grad_clip must be positive");
    if (precision != 32 && precision != 64) throw ContractError("precision must be 32 or 64");
    if (subset && *subset < 1) throw ContractError("subset must be positive");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["d_e"] = c.d_e;
  j["d_h"] = c.d_h;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["max_len"] = c.max_len;
  if (c.grad_clip) j["grad_clip"] = *c.grad_clip; else j["grad_clip"] = nullptr;
  j["precision"] = c.precision;
  if (c.subset) j["subset"] = *c.subset; else j["subset"] = nullptr;
  return j;
}

// Applies the keys present in j on top of `base`; unknown keys are an error so
// that a typo in a config file cannot pass silently.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  static const char* known[] = {"epochs", "batch_size", "d_e",     "d_h",
                                "alpha",  "gamma",      "seed",    "max_len",
                                "grad_clip", "precision", "subset"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ContractError("unknown config key: " + it.key());
  }
  if (j.contains("epochs")) base.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("d_e")) base.d_e = j["d_e"].get<std::size_t>();
  if (j.contains("d_h")) base.d_h = j["d_h"].get<std::size_t>();
  if (j.contains("alpha")) base.alpha = j["alpha"].get<double>();
  if (j.contains("gamma")) base.gamma = j["gamma"].get<double>();
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("max_len")) base.max_len = j["max_len"].get<std::size_t>();
  if (j.contains("grad_clip")) {
    base.grad_clip = j["grad_clip"].is_null()
                         ? std::nullopt
                         : std::optional<double>(j["grad_clip"].get<double>());
  }
  if (j.contains("precision")) base.precision = j["precision"].get<int>();
  if (j.contains("subset")) {
    base.subset = j["subset"].is_null()
                      ? std::nullopt
                      : std::optional<std::size_t>(j["subset"].get<std::size_t>());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Loss.
// ---------------------------------------------------------------------------

// Sparse softmax cross-entropy over the masked-true positions, averaged over
// their count. step_logits[k] holds the B x V logits predicting labels(:, k).
// Pad positions contribute nothing.
template <typename S>
Tensor<S> masked_sparse_ce(Tape<S>& tape, const std::vector<Tensor<S>>& step_logits,
                           const IntMatrix& labels, const BoolMatrix& mask) {
  const std::size_t steps = step_logits.size();
  if (labels.cols != steps || mask.cols != steps || labels.rows != mask.rows) {
    throw ShapeError("masked_sparse_ce got " + std::to_string(steps) +
                     " logit steps for labels " + std::to_string(labels.rows) + "x" +
                     std::to_string(labels.cols));
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Tensor<S>& logits = step_logits[k];
    const std::size_t batch = logits.shape()[0], vocab = logits.shape()[1];
    if (batch != labels.rows) throw ShapeError("masked_sparse_ce batch mismatch");
    for (std::size_t r = 0; r < batch; ++r) {
      if (!mask.at(r, k)) continue;
      const std::int32_t label = labels.at(r, k);
      if (label < 0 || static_cast<std::size_t>(label) >= vocab) {
        throw IndexError("label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(vocab) + ")");
      }
      const S* row = logits.data() + r * vocab;
      S mx = row[0];
      for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
      S sum{0};
      for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(row[j] - mx);
      total += static_cast<double>(mx + std::log(sum) - row[label]);
      ++count;
    }
  }
  if (count == 0) throw ContractError("masked_sparse_ce: every position is masked");

  Tensor<S> loss = Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(count)));
  bool track = false;
  for (const auto& t : step_logits) track = track || t.requires_grad();
  if (track) {
    loss.set_requires_grad(true);
    tape.record(step_logits, loss, [step_logits, labels, mask, loss, count]() mutable {
      if (!loss.has_grad()) return;
      const S g = loss.grad_view()[0] / static_cast<S>(count);
      for (std::size_t k = 0; k < step_logits.size(); ++k) {
        const Tensor<S>& logits = step_logits[k];
        if (!logits.requires_grad()) continue;
        const std::size_t batch = logits.shape()[0], vocab = logits.shape()[1];
        S* grad = logits.grad().data();
        for (std::size_t r = 0; r < batch; ++r) {
          if (!mask.at(r, k)) continue;
          const S* row = logits.data() + r * vocab;
          S mx = row[0];
          for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
          S sum{0};
          for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(row[j] - mx);
          const std::size_t label = static_cast<std::size_t>(labels.at(r, k));
          for (std::size_t j = 0; j < vocab; ++j) {
            S p = std::exp(row[j] - mx) / sum;
            grad[r * vocab + j] += g * (p - (j == label ? S{1} : S{0}));
          }
        }
      }
    });
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

template <typename S>
struct AdamState {
  std::vector<S> m;  // first moment, congruent with the parameter
  std::vector<S> v;  // second moment
  std::size_t t = 0;
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

template <typename S>
void adam_update(std::span<S> param, std::span<const S> grad, AdamState<S>& state,
                 double lr) {
  const std::size_t n = param.size();
  if (state.m.empty()) {
    state.m.assign(n, S{0});
    state.v.assign(n, S{0});
  }
  state.t += 1;
  const double b1 = AdamState<S>::beta1, b2 = AdamState<S>::beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = static_cast<double>(grad.empty() ? S{0} : grad[i]);
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    state.m[i] = static_cast<S>(m);
    state.v[i] = static_cast<S>(v);
    const double m_hat = m / corr1;
    const double v_hat = v / corr2;
    param[i] -= static_cast<S>(lr * m_hat / (std::sqrt(v_hat) + AdamState<S>::eps));
  }
}

// Owns handles to the model parameters plus their Adam state, in the fixed
// parameter order.
template <typename S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(UniversalModel<S>& model) {
    visit_parameters(model, [this](const std::string& name, Tensor<S>& t) {
      names_.push_back(name);
      params_.push_back(t);
      states_.emplace_back();
    });
  }

  double global_grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) {
      for (S g : p.grad_view()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
  }

  // Scales every gradient so the global norm does not exceed max_norm.
  void clip_global_norm(double max_norm) {
    const double norm = global_grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const S scale = static_cast<S>(max_norm / norm);
    for (auto& p : params_) {
      if (!p.has_grad()) continue;
      for (S& g : p.grad()) g *= scale;
    }
  }

  void step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adam_update<S>(params_[i].values(), params_[i].grad_view(), states_[i], lr);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.clear_grad();
  }

  std::size_t size() const { return params_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<S>> params_;
  std::vector<AdamState<S>> states_;
};

inline double lr_schedule(const TrainConfig& config, std::size_t epoch) {
  return config.alpha * std::pow(config.gamma, static_cast<double>(epoch));
}

// ---------------------------------------------------------------------------
// Dual training step.
// ---------------------------------------------------------------------------

struct DualLoss {
  double total = 0.0;  // L = L1 + L2
  double forward = 0.0;
  double reverse = 0.0;
};

// Labels and mask for teacher forcing: output index j predicts target position
// j + 1.
inline std::pair<IntMatrix, BoolMatrix> shifted_targets(const Batch& batch) {
  const std::size_t rows = batch.target_ids.rows;
  const std::size_t cols = batch.target_ids.cols - 1;
  IntMatrix labels(rows, cols);
  BoolMatrix mask(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      labels.at(r, c) = batch.target_ids.at(r, c + 1);
      mask.set(r, c, batch.pad_mask_tgt.at(r, c + 1));
    }
  }
  return {std::move(labels), std::move(mask)};
}

template <typename S>
Tensor<S> direction_loss(Tape<S>& tape, const UniversalModel<S>& model,
                         const Batch& batch) {
  ForwardResult<S> fwd = forward_teacher_forced(tape, model, batch);
  auto [labels, mask] = shifted_targets(batch);
  return masked_sparse_ce(tape, fwd.logits, labels, mask);
}

// Algorithm: run A->B and B->A over the same pairs, sum the two losses, run
// one backward pass, and take a single Adam step. The shared encoder and
// decoder accumulate gradient from both directions.
template <typename S>
DualLoss dual_train_step(UniversalModel<S>& model, const PairBatch& pair_batch,
                         AdamOptimizer<S>& opt, double lr,
                         std::optional<double> grad_clip) {
  Tape<S> tape;
  Tensor<S> l1 = direction_loss(tape, model, pair_batch.ab);
  Tensor<S> l2 = direction_loss(tape, model, pair_batch.ba);
  Tensor<S> total = add(tape, l1, l2);
  tape.backward(total);
  if (grad_clip) opt.clip_global_norm(*grad_clip);
  opt.step(lr);
  opt.zero_grad();
  return {static_cast<double>(total.at(0)), static_cast<double>(l1.at(0)),
          static_cast<double>(l2.at(0))};
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

using LossHistory = std::vector<EpochRecord>;

inline std::string loss_history_csv(const LossHistory& history) {
  std::string out = "epoch,loss,seconds\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.3f\n", e.epoch, e.mean_loss, e.seconds);
    out += buf;
  }
  return out;
}

template <typename S>
struct TrainOutcome {
  UniversalModel<S> model;
  std::vector<Vocabulary> vocabs;  // language A then language B
  LossHistory history;
};

// Called after each completed epoch (checkpoint flushing, progress output).
template <typename S>
using EpochHook = std::function<void(std::size_t epoch, const UniversalModel<S>&,
                                     const std::vector<Vocabulary>&, const LossHistory&)>;

template <typename S>
TrainOutcome<S> train(const TrainConfig& config, const ParallelCorpus& corpus,
                      EpochHook<S> hook = nullptr) {
  config.validate();
  auto [kept, dropped] = filter_by_length(corpus, config.max_len);
  (void)dropped;
  if (config.subset && kept.pairs.size() > *config.subset) {
    kept.pairs.resize(*config.subset);
  }
  if (kept.pairs.empty()) {
    throw EmptyCorpusError("no pairs fit max_len " + std::to_string(config.max_len));
  }

  Rng rng(config.seed);
  TrainOutcome<S> out;
  out.vocabs.push_back(build_vocab(kept, Side::a));
  out.vocabs.push_back(build_vocab(kept, Side::b));
  out.model = init_model<S>(
      config.d_e, config.d_h,
      {{kept.lang_a, out.vocabs[0].size()}, {kept.lang_b, out.vocabs[1].size()}}, rng);

  AdamOptimizer<S> opt(out.model);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_schedule(config, epoch);
    std::vector<PairBatch> batches = make_batches(kept, out.vocabs[0], out.vocabs[1],
                                                  config.batch_size, config.max_len,
                                                  rng, /*shuffle=*/true);
    double sum = 0.0;
    for (const auto& pb : batches) {
      sum += dual_train_step(out.model, pb, opt, lr, config.grad_clip).total;
    }
    const auto end = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = sum / static_cast<double>(batches.size());
    rec.seconds = std::chrono::duration<double>(end - start).count();
    out.history.push_back(rec);
    if (hook) hook(epoch, out.model, out.vocabs, out.history);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint persistence.
//
// A checkpoint is a directory holding manifest.json, params.bin (little-endian
// IEEE-754 values concatenated in manifest order, no padding), and one
// vocabulary file per language.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <typename S>
void append_le(std::string& out, S value) {
  if constexpr (sizeof(S) == 4) {
    auto bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
  } else {
    auto bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
}

template <typename S>
S read_le(const char* p) {
  if constexpr (sizeof(S) == 4) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return std::bit_cast<S>(bits);
  } else {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return std::bit_cast<S>(bits);
  }
}

}  // namespace detail

template <typename S>
void save_checkpoint(UniversalModel<S>& model, const std::vector<Vocabulary>& vocabs,
                     const TrainConfig& config, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const char* dtype = sizeof(S) == 4 ? "f32" : "f64";
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["d_e"] = model.d_e;
  manifest["d_h"] = model.d_h;
  manifest["precision"] = sizeof(S) == 4 ? 32 : 64;
  manifest["config"] = to_json(config);

  nlohmann::json languages = nlohmann::json::array();
  nlohmann::json vocab_files = nlohmann::json::object();
  for (const auto& pack : model.packs) {
    const std::string& code = pack.language.code;
    languages.push_back(code);
    const std::string vocab_name = "vocab." + code + ".txt";
    vocab_files[code] = vocab_name;
    const Vocabulary* vocab = nullptr;
    for (const auto& v : vocabs) {
      if (v.language() == pack.language) vocab = &v;
    }
    if (!vocab || vocab->size() != pack.vocab_size()) {
      throw ContractError("vocabulary for language '" + code +
                          "' missing or inconsistent with the model");
    }
    std::string text;
    for (std::size_t i = 0; i < vocab->size(); ++i) {
      text += vocab->token(static_cast<std::int32_t>(i));
      text += '\n';
    }
    write_file_atomic(dir / vocab_name, text);
  }
  manifest["languages"] = languages;
  manifest["vocab_files"] = vocab_files;

  std::string blob;
  nlohmann::json tensors = nlohmann::json::array();
  visit_parameters(model, [&](const std::string& name, Tensor<S>& t) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["dtype"] = dtype;
    entry["file"] = "params.bin";
    entry["byte_offset"] = blob.size();
    entry["byte_length"] = t.size() * sizeof(S);
    tensors.push_back(entry);
    for (S v : t.values()) detail::append_le(blob, v);
  });
  manifest["tensors"] = tensors;

  write_file_atomic(dir / "params.bin", blob);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Reads just the manifest (callers dispatch on its precision field).
inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw PersistenceError(std::string("checkpoint manifest unreadable: ") + e.what());
  }
  nlohmann::json manifest = nlohmann::json::parse(text, nullptr, false);
  if (manifest.is_discarded()) {
    throw CheckpointVersionError("checkpoint manifest is not valid JSON: " +
                                 path.string());
  }
  if (!manifest.contains("version") || !manifest["version"].is_number_integer() ||
      manifest["version"].get<int>() != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version in " + path.string());
  }
  return manifest;
}

template <typename S>
struct LoadedCheckpoint {
  UniversalModel<S> model;
  std::vector<Vocabulary> vocabs;  // in manifest language order
  TrainConfig config;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest = read_manifest(dir);
  const int precision = manifest["precision"].get<int>();
  if ((sizeof(S) == 4 && precision != 32) || (sizeof(S) == 8 && precision != 64)) {
    throw CheckpointConsistencyError("checkpoint precision " + std::to_string(precision) +
                                     " does not match the requested scalar type");
  }

  LoadedCheckpoint<S> out;
  out.config = config_from_json(manifest["config"]);
  const std::size_t d_e = manifest["d_e"].get<std::size_t>();
  const std::size_t d_h = manifest["d_h"].get<std::size_t>();

  std::vector<std::pair<LanguageId, std::size_t>> langs;
  for (const auto& code : manifest["languages"]) {
    const std::string c = code.get<std::string>();
    const std::string vocab_file = manifest["vocab_files"][c].get<std::string>();
    Vocabulary vocab = read_vocab((dir / vocab_file).string(), LanguageId{c});
    langs.emplace_back(LanguageId{c}, vocab.size());
    out.vocabs.push_back(std::move(vocab));
  }

  // Structure only; every value is overwritten from the blob below.
  Rng scratch(0);
  out.model = init_model<S>(d_e, d_h, langs, scratch);

  std::string blob;
  try {
    blob = read_file(dir / "params.bin");
  } catch (const IoError& e) {
    throw PersistenceError(std::string("checkpoint blob unreadable: ") + e.what());
  }

  std::unordered_map<std::string, const nlohmann::json*> by_name;
  for (const auto& entry : manifest["tensors"]) {
    by_name[entry["name"].get<std::string>()] = &entry;
  }

  std::size_t expected_bytes = 0;
  visit_parameters(out.model, [&](const std::string& name, Tensor<S>& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointConsistencyError("manifest is missing tensor '" + name + "'");
    }
    const nlohmann::json& entry = *it->second;
    const Shape shape = entry["shape"].get<Shape>();
    if (shape != t.shape()) {
      throw CheckpointConsistencyError("tensor '" + name + "' has shape " +
                                       shape_str(shape) + ", expected " +
                                       shape_str(t.shape()));
    }
    const std::string dtype = entry["dtype"].get<std::string>();
    if (dtype != (sizeof(S) == 4 ? "f32" : "f64")) {
      throw CheckpointConsistencyError("tensor '" + name + "' has dtype " + dtype);
    }
    const std::size_t offset = entry["byte_offset"].get<std::size_t>();
    const std::size_t length = entry["byte_length"].get<std::size_t>();
    if (length != t.size() * sizeof(S) || offset + length > blob.size()) {
      throw CheckpointConsistencyError("tensor '" + name +
                                       "' byte range is outside params.bin");
    }
    const char* p = blob.data() + offset;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.values()[i] = detail::read_le<S>(p + i * sizeof(S));
    }
    expected_bytes += length;
    by_name.erase(it);
  });
  if (!by_name.empty()) {
    throw CheckpointConsistencyError("manifest lists unknown tensor '" +
                                     by_name.begin()->first + "'");
  }
  if (expected_bytes != blob.size()) {
    throw CheckpointConsistencyError("params.bin has " + std::to_string(blob.size()) +
                                     " bytes, manifest accounts for " +
                                     std::to_string(expected_bytes));
  }
  return out;
}

}  // namespace uvnmt
