// Command-line front end: train / translate / evaluate / attention over the
// single-model bidirectional translation library.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uvnmt/uvnmt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
  std::string data;
  std::string lang_a;
  std::string lang_b;
  std::string out;
  std::string config_file;
  std::size_t epochs = 40;
  std::size_t batch = 64;
  std::size_t hidden = 256;
  std::size_t embed = 128;
  double lr = 1e-3;
  double decay = 1.0;
  std::uint64_t seed = 42;
  std::size_t max_len = 16;
  std::size_t subset = 0;
};

// Config-file values sit between the built-in defaults and explicit flags.
uvnmt::TrainConfig resolve_config(const TrainArgs& a, const CLI::App* cmd) {
  uvnmt::TrainConfig config;
  if (!a.config_file.empty()) {
    json j = json::parse(uvnmt::read_file(a.config_file), nullptr, false);
    if (j.is_discarded()) {
      throw uvnmt::ContractError("config file is not valid JSON: " + a.config_file);
    }
    config = uvnmt::config_from_json(j, config);
  }
  if (cmd->count("--epochs")) config.epochs = a.epochs;
  if (cmd->count("--batch")) config.batch_size = a.batch;
  if (cmd->count("--hidden")) config.d_h = a.hidden;
  if (cmd->count("--embed")) config.d_e = a.embed;
  if (cmd->count("--lr")) config.alpha = a.lr;
  if (cmd->count("--decay")) config.gamma = a.decay;
  if (cmd->count("--seed")) config.seed = a.seed;
  if (cmd->count("--max-len")) config.max_len = a.max_len;
  if (cmd->count("--subset")) config.subset = a.subset;
  config.validate();
  return config;
}

template <typename S>
int run_train(const TrainArgs& args, const uvnmt::TrainConfig& config) {
  uvnmt::ParallelCorpus corpus = uvnmt::load_tsv(args.data, uvnmt::LanguageId{args.lang_a},
                                                 uvnmt::LanguageId{args.lang_b});
  if (corpus.skipped_lines > 0) {
    std::cerr << "skipped " << corpus.skipped_lines << " malformed line(s)\n";
  }
  const fs::path out_dir(args.out);

  uvnmt::EpochHook<S> hook = [&](std::size_t epoch, const uvnmt::UniversalModel<S>& model,
                                 const std::vector<uvnmt::Vocabulary>& vocabs,
                                 const uvnmt::LossHistory& history) {
    uvnmt::UniversalModel<S> snapshot = model;  // handles share the parameters
    uvnmt::save_checkpoint(snapshot, vocabs, config, out_dir);
    uvnmt::write_file_atomic(out_dir / "loss_history.csv",
                             uvnmt::loss_history_csv(history));
    std::cerr << "epoch " << epoch << " loss " << history.back().mean_loss << " ("
              << history.back().seconds << "s)\n";
  };

  uvnmt::TrainOutcome<S> outcome = uvnmt::train<S>(config, corpus, hook);
  // epochs = 0 still persists the initialization and an empty history.
  uvnmt::save_checkpoint(outcome.model, outcome.vocabs, config, out_dir);
  uvnmt::write_file_atomic(out_dir / "loss_history.csv",
                           uvnmt::loss_history_csv(outcome.history));
  if (outcome.history.empty()) {
    std::cout << "final loss: n/a (0 epochs)\n";
  } else {
    std::cout << "final loss: " << outcome.history.back().mean_loss << "\n";
  }
  return kExitOk;
}

struct ModelRef {
  std::string dir;
  int precision = 32;
};

ModelRef probe_model(const std::string& dir) {
  json manifest = uvnmt::read_manifest(dir);
  return {dir, manifest["precision"].get<int>()};
}

template <typename S>
const uvnmt::Vocabulary& vocab_for(const uvnmt::LoadedCheckpoint<S>& ckpt,
                                   const std::string& code) {
  for (const auto& v : ckpt.vocabs) {
    if (v.language().code == code) return v;
  }
  throw uvnmt::RegistryError("language '" + code + "' is not in this checkpoint");
}

template <typename S>
int run_translate(const std::string& model_dir, const std::string& from,
                  const std::string& to, const std::optional<std::string>& text,
                  std::size_t max_len) {
  uvnmt::LoadedCheckpoint<S> ckpt = uvnmt::load_checkpoint<S>(model_dir);
  const uvnmt::Vocabulary& src = vocab_for(ckpt, from);
  const uvnmt::Vocabulary& tgt = vocab_for(ckpt, to);

  auto translate_line = [&](const std::string& line) {
    if (uvnmt::normalize(line).empty()) {
      std::cout << "\n";
      return;
    }
    uvnmt::Translation t = uvnmt::greedy_translate(ckpt.model, src, tgt, line, max_len);
    std::cout << uvnmt::join_tokens(t.tokens) << "\n";
  };

  if (text) {
    translate_line(*text);
  } else {
    std::string line;
    while (std::getline(std::cin, line)) translate_line(line);
  }
  return kExitOk;
}

template <typename S>
int run_evaluate(const std::string& model_dir, const std::string& data,
                 const std::string& direction, std::size_t max_n,
                 const std::string& out_file, bool oracle) {
  uvnmt::LoadedCheckpoint<S> ckpt = uvnmt::load_checkpoint<S>(model_dir);
  if (ckpt.vocabs.size() < 2) {
    throw uvnmt::RegistryError("checkpoint does not hold two languages");
  }
  const std::string code_a = ckpt.vocabs[0].language().code;
  const std::string code_b = ckpt.vocabs[1].language().code;
  uvnmt::ParallelCorpus corpus =
      uvnmt::load_tsv(data, uvnmt::LanguageId{code_a}, uvnmt::LanguageId{code_b});
  auto [kept, dropped] = uvnmt::filter_by_length(corpus, ckpt.config.max_len);
  if (dropped > 0) {
    std::cerr << "skipped " << dropped << " pair(s) over max_len "
              << ckpt.config.max_len << "\n";
  }

  const bool a2b = direction == "a2b";
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(kept.pairs.size());
  for (const auto& [a, b] : kept.pairs) {
    pairs.emplace_back(a2b ? a : b, a2b ? b : a);
  }
  const uvnmt::Vocabulary& src = vocab_for(ckpt, a2b ? code_a : code_b);
  const uvnmt::Vocabulary& tgt = vocab_for(ckpt, a2b ? code_b : code_a);

  uvnmt::EvalResult result = uvnmt::evaluate_translation(
      ckpt.model, src, tgt, pairs, max_n, ckpt.config.max_len, oracle);
  if (!out_file.empty()) {
    uvnmt::write_file_atomic(out_file, uvnmt::to_json(result).dump(2) + "\n");
  }
  std::cout << "mean BLEU: " << result.mean_bleu << "\n";
  return kExitOk;
}

template <typename S>
int run_attention(const std::string& model_dir, const std::string& from,
                  const std::string& to, const std::string& text,
                  const std::string& out_file, std::size_t max_len) {
  uvnmt::LoadedCheckpoint<S> ckpt = uvnmt::load_checkpoint<S>(model_dir);
  const uvnmt::Vocabulary& src = vocab_for(ckpt, from);
  const uvnmt::Vocabulary& tgt = vocab_for(ckpt, to);
  uvnmt::Translation t = uvnmt::greedy_translate(ckpt.model, src, tgt, text, max_len);
  uvnmt::AttentionMap map = uvnmt::make_attention_map(t);
  uvnmt::write_file_atomic(out_file, uvnmt::attention_csv(map));
  std::cout << uvnmt::join_tokens(t.tokens) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-model bidirectional neural machine translation"};
  app.require_subcommand(1);

  // --- train ---
  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model on a tab-separated pair file");
  train->add_option("--data", train_args.data, "pair file (lang A<TAB>lang B per line)")
      ->required();
  train->add_option("--lang-a", train_args.lang_a, "language A code")->required();
  train->add_option("--lang-b", train_args.lang_b, "language B code")->required();
  train->add_option("--out", train_args.out, "checkpoint output directory")->required();
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--batch", train_args.batch, "batch size");
  train->add_option("--hidden", train_args.hidden, "hidden state width");
  train->add_option("--embed", train_args.embed, "embedding width");
  train->add_option("--lr", train_args.lr, "base learning rate");
  train->add_option("--decay", train_args.decay, "per-epoch learning-rate decay");
  train->add_option("--seed", train_args.seed, "random seed");
  train->add_option("--max-len", train_args.max_len, "maximum tokens per sentence");
  train->add_option("--subset", train_args.subset, "use only the first N usable pairs");
  train->add_option("--config", train_args.config_file, "JSON config file");

  // --- translate ---
  std::string tr_model, tr_from, tr_to;
  std::optional<std::string> tr_text;
  std::size_t tr_max_len = 16;
  CLI::App* translate = app.add_subcommand("translate", "greedy-decode text");
  translate->add_option("--model", tr_model, "checkpoint directory")->required();
  translate->add_option("--from", tr_from, "source language code")->required();
  translate->add_option("--to", tr_to, "target language code")->required();
  translate->add_option("--text", tr_text, "text to translate (otherwise stdin lines)");
  translate->add_option("--max-len", tr_max_len, "decoding step limit");

  // --- evaluate ---
  std::string ev_model, ev_data, ev_direction, ev_out;
  std::size_t ev_n = 4;
  bool ev_oracle = false;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score translations with BLEU");
  evaluate->add_option("--model", ev_model, "checkpoint directory")->required();
  evaluate->add_option("--data", ev_data, "pair file to score")->required();
  evaluate->add_option("--direction", ev_direction, "a2b or b2a")
      ->required()
      ->check(CLI::IsMember({"a2b", "b2a"}));
  evaluate->add_option("--n", ev_n, "maximum n-gram order");
  evaluate->add_option("--out", ev_out, "write per-sentence reports JSON here");
  evaluate->add_flag("--oracle", ev_oracle, "score the gold side against itself");

  // --- attention ---
  std::string at_model, at_from, at_to, at_text, at_out;
  std::size_t at_max_len = 16;
  CLI::App* attention = app.add_subcommand("attention", "export an attention heatmap CSV");
  attention->add_option("--model", at_model, "checkpoint directory")->required();
  attention->add_option("--from", at_from, "source language code")->required();
  attention->add_option("--to", at_to, "target language code")->required();
  attention->add_option("--text", at_text, "sentence to decode")->required();
  attention->add_option("--out", at_out, "CSV output path")->required();
  attention->add_option("--max-len", at_max_len, "decoding step limit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return kExitUsage;
  }

  try {
    if (*train) {
      uvnmt::TrainConfig config = resolve_config(train_args, train);
      if (train_args.lang_a == train_args.lang_b) {
        std::cerr << "--lang-a and --lang-b must differ\n";
        return kExitUsage;
      }
      return config.precision == 64 ? run_train<double>(train_args, config)
                                    : run_train<float>(train_args, config);
    }
    if (*translate) {
      if (tr_from == tr_to) {
        std::cerr << "--from and --to must differ\n";
        return kExitUsage;
      }
      ModelRef ref = probe_model(tr_model);
      return ref.precision == 64
                 ? run_translate<double>(tr_model, tr_from, tr_to, tr_text, tr_max_len)
                 : run_translate<float>(tr_model, tr_from, tr_to, tr_text, tr_max_len);
    }
    if (*evaluate) {
      ModelRef ref = probe_model(ev_model);
      return ref.precision == 64
                 ? run_evaluate<double>(ev_model, ev_data, ev_direction, ev_n, ev_out,
                                        ev_oracle)
                 : run_evaluate<float>(ev_model, ev_data, ev_direction, ev_n, ev_out,
                                       ev_oracle);
    }
    if (*attention) {
      if (at_from == at_to) {
        std::cerr << "--from and --to must differ\n";
        return kExitUsage;
      }
      if (at_text.empty()) {
        std::cerr << "--text must not be empty\n";
        return kExitUsage;
      }
      ModelRef ref = probe_model(at_model);
      return ref.precision == 64
                 ? run_attention<double>(at_model, at_from, at_to, at_text, at_out,
                                         at_max_len)
                 : run_attention<float>(at_model, at_from, at_to, at_text, at_out,
                                        at_max_len);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
