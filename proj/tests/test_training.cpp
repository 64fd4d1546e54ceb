#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "support/temp_dir.hpp"
#include "uvnmt/training.hpp"

using namespace uvnmt;
using uvnmt_test::TempDir;
using Td = Tensor<double>;
namespace fs = std::filesystem;

namespace {

ParallelCorpus toy_corpus() {
  return ParallelCorpus{
      LanguageId{"en"},
      LanguageId{"es"},
      {{"go", "ve"},
       {"run", "corre"},
       {"stop", "para"},
       {"come here", "ven aqui"},
       {"this is my life", "esta es mi vida"},
       {"i see a cat", "veo un gato"},
       {"we read books", "leemos libros"},
       {"they sing well", "cantan bien"}},
      0};
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.d_e = 8;
  c.d_h = 12;
  c.alpha = 1e-3;
  c.gamma = 1.0;
  c.seed = 7;
  c.max_len = 12;
  c.precision = 64;
  return c;
}

UniversalModel<double> random_model(std::uint64_t seed) {
  Rng rng(seed);
  return init_model<double>(3, 4, {{LanguageId{"en"}, 6}, {LanguageId{"es"}, 7}}, rng);
}

PairBatch toy_pair_batch(const ParallelCorpus& corpus, std::size_t take) {
  ParallelCorpus sub = corpus;
  sub.pairs.resize(take);
  Vocabulary va = build_vocab(sub, Side::a);
  Vocabulary vb = build_vocab(sub, Side::b);
  Rng rng(3);
  return make_batches(sub, va, vb, take, 12, rng, false).at(0);
}

}  // namespace

TEST(MaskedSparseCe, UniformLogitsGiveLogV) {
  Tape<double> tape;
  std::vector<Td> logits{Td({2, 8})};
  IntMatrix labels(2, 1);
  labels.at(0, 0) = 3;
  labels.at(1, 0) = 7;
  BoolMatrix mask(2, 1, true);
  Td loss = masked_sparse_ce(tape, logits, labels, mask);
  EXPECT_NEAR(loss.at(0), std::log(8.0), 1e-12);
}

TEST(MaskedSparseCe, SaturatedCorrectClassNearZero) {
  Tape<double> tape;
  Td l({1, 4});
  l.at(0, 2) = 30.0;
  std::vector<Td> logits{l};
  IntMatrix labels(1, 1);
  labels.at(0, 0) = 2;
  BoolMatrix mask(1, 1, true);
  EXPECT_LT(masked_sparse_ce(tape, logits, labels, mask).at(0), 1e-9);
}

TEST(MaskedSparseCe, MaskedPositionContributesNothing) {
  Tape<double> tape;
  Td l0({1, 4});
  l0.at(0, 1) = 2.0;
  Td l1({1, 4});
  l1.at(0, 0) = -5.0;  // would add a large loss if unmasked
  std::vector<Td> logits{l0, l1};
  IntMatrix labels(1, 2);
  labels.at(0, 0) = 1;
  labels.at(0, 1) = 0;
  BoolMatrix mask(1, 2);
  mask.set(0, 0, true);

  Td both = masked_sparse_ce(tape, logits, labels, mask);
  std::vector<Td> only{l0};
  IntMatrix labels1(1, 1);
  labels1.at(0, 0) = 1;
  BoolMatrix mask1(1, 1, true);
  Td solo = masked_sparse_ce(tape, only, labels1, mask1);
  EXPECT_DOUBLE_EQ(both.at(0), solo.at(0));
}

TEST(MaskedSparseCe, AllMaskedIsContractError) {
  Tape<double> tape;
  std::vector<Td> logits{Td({1, 4})};
  IntMatrix labels(1, 1);
  BoolMatrix mask(1, 1, false);
  EXPECT_THROW(masked_sparse_ce(tape, logits, labels, mask), ContractError);
}

TEST(MaskedSparseCe, LabelOutOfRangeIsIndexError) {
  Tape<double> tape;
  std::vector<Td> logits{Td({1, 4})};
  IntMatrix labels(1, 1);
  labels.at(0, 0) = 4;
  BoolMatrix mask(1, 1, true);
  EXPECT_THROW(masked_sparse_ce(tape, logits, labels, mask), IndexError);
}

TEST(AdamUpdate, FirstStepHasLearningRateMagnitude) {
  std::vector<double> param{0.0};
  std::vector<double> grad{10.0};
  AdamState<double> state;
  adam_update<double>(param, grad, state, 1e-3);
  EXPECT_NEAR(param[0], -1e-3, 1e-6 * 1e-3 + 1e-12);
}

TEST(AdamUpdate, ZeroGradZeroStateLeavesParamUnchanged) {
  std::vector<double> param{1.5};
  std::vector<double> grad{0.0};
  AdamState<double> state;
  adam_update<double>(param, grad, state, 1e-3);
  EXPECT_DOUBLE_EQ(param[0], 1.5);
}

TEST(AdamUpdate, FirstStepScaleInvariant) {
  std::vector<double> p1{0.0}, p2{0.0};
  std::vector<double> g1{0.3}, g2{30.0};
  AdamState<double> s1, s2;
  adam_update<double>(p1, g1, s1, 1e-3);
  adam_update<double>(p2, g2, s2, 1e-3);
  EXPECT_NEAR(std::abs(p1[0]), std::abs(p2[0]), 1e-9);
}

TEST(AdamUpdate, StepMagnitudeBoundedByLearningRate) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> param{rng.uniform(-1, 1)};
    const double before = param[0];
    std::vector<double> grad{rng.uniform(-100, 100)};
    AdamState<double> state;
    adam_update<double>(param, grad, state, 1e-3);
    EXPECT_LE(std::abs(param[0] - before), 1e-3 * (1.0 + 1e-6));
  }
}

TEST(LrSchedule, ConstantWhenGammaOne) {
  TrainConfig c;
  c.alpha = 1e-3;
  c.gamma = 1.0;
  EXPECT_DOUBLE_EQ(lr_schedule(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(c, 17), 1e-3);
}

TEST(LrSchedule, ExponentialDecay) {
  TrainConfig c;
  c.alpha = 1e-3;
  c.gamma = 0.95;
  EXPECT_NEAR(lr_schedule(c, 2), 9.025e-4, 1e-12);
  EXPECT_DOUBLE_EQ(lr_schedule(c, 0), 1e-3);
}

TEST(DualTrainStep, ZeroInitLossIsTwiceLogV) {
  // Zero parameters give uniform logits in both directions.
  UniversalModel<double> m;
  m.d_e = 2;
  m.d_h = 3;
  auto zero_gate = [](std::size_t d_in, std::size_t d_h) {
    GateParams<double> g;
    g.W = Td({d_in, d_h});
    g.U = Td({d_h, d_h});
    g.b = Td({d_h});
    return g;
  };
  for (auto* gru : {&m.encoder, &m.decoder}) {
    gru->d_h = 3;
    gru->d_in = gru == &m.encoder ? 2 : 5;
    gru->update = zero_gate(gru->d_in, 3);
    gru->relevance = zero_gate(gru->d_in, 3);
    gru->candidate = zero_gate(gru->d_in, 3);
  }
  const std::size_t v = 6;
  for (const char* code : {"en", "es"}) {
    LanguagePack<double> p;
    p.language = LanguageId{code};
    p.embedding = Td({v, 2});
    p.head_W = Td({6, v});
    p.head_b = Td({v});
    p.attention.W_a = Td({3, 3});
    p.attention.v_a = Td({3, 1});
    m.packs.push_back(p);
  }
  PairBatch pb = toy_pair_batch(toy_corpus(), 4);
  // The toy vocab is larger than 6; rebuild a batch that fits V = 6.
  for (auto* mtx : {&pb.ab.source_ids, &pb.ab.target_ids, &pb.ba.source_ids,
                    &pb.ba.target_ids}) {
    for (auto& id : mtx->v) id = id % static_cast<std::int32_t>(v);
  }
  // Re-frame targets so rows stay well-formed after the clamp.
  for (auto* b : {&pb.ab, &pb.ba}) {
    for (std::size_t r = 0; r < b->target_ids.rows; ++r) b->target_ids.at(r, 0) = kStartId;
  }

  Tape<double> tape;
  Td l1 = direction_loss(tape, m, pb.ab);
  Td l2 = direction_loss(tape, m, pb.ba);
  EXPECT_NEAR(l1.at(0), std::log(static_cast<double>(v)), 1e-12);
  EXPECT_NEAR(l2.at(0), std::log(static_cast<double>(v)), 1e-12);
}

TEST(DualTrainStep, TotalIsExactSumOfDirections) {
  UniversalModel<double> m = random_model(101);
  PairBatch pb = toy_pair_batch(toy_corpus(), 4);
  for (auto* mtx : {&pb.ab.source_ids, &pb.ab.target_ids, &pb.ba.source_ids,
                    &pb.ba.target_ids}) {
    for (auto& id : mtx->v) id = id % 6;
  }
  for (auto* b : {&pb.ab, &pb.ba}) {
    for (std::size_t r = 0; r < b->target_ids.rows; ++r) b->target_ids.at(r, 0) = kStartId;
  }
  pb.ba.target_ids.v = pb.ab.target_ids.v;  // keep ids within both vocabs
  pb.ba.target_ids.rows = pb.ab.target_ids.rows;
  pb.ba.target_ids.cols = pb.ab.target_ids.cols;
  pb.ba.pad_mask_tgt = pb.ab.pad_mask_tgt;

  AdamOptimizer<double> opt(m);
  DualLoss loss = dual_train_step(m, pb, opt, 1e-3, std::nullopt);
  EXPECT_DOUBLE_EQ(loss.total, loss.forward + loss.reverse);
}

TEST(DualTrainStep, SharedGradientsAreSumOfBlockGradients) {
  UniversalModel<double> m = random_model(55);
  ParallelCorpus corpus{LanguageId{"en"},
                        LanguageId{"es"},
                        {{"a b", "c"}, {"b", "c d"}},
                        0};
  // Rebuild ids against the tiny model vocab sizes (V_en = 6, V_es = 7).
  Vocabulary va = build_vocab(corpus, Side::a);
  Vocabulary vb = build_vocab(corpus, Side::b);
  Rng rng(1);
  PairBatch pb = make_batches(corpus, va, vb, 2, 8, rng, false).at(0);

  auto grads_of = [&](bool run_ab, bool run_ba) {
    Tape<double> tape;
    Td loss;
    if (run_ab && run_ba) {
      loss = add(tape, direction_loss(tape, m, pb.ab), direction_loss(tape, m, pb.ba));
    } else if (run_ab) {
      loss = direction_loss(tape, m, pb.ab);
    } else {
      loss = direction_loss(tape, m, pb.ba);
    }
    tape.backward(loss);
    std::vector<double> g(m.encoder.update.W.grad_view().begin(),
                          m.encoder.update.W.grad_view().end());
    visit_parameters(m, [](const std::string&, Td& t) { t.clear_grad(); });
    return g;
  };

  std::vector<double> dual = grads_of(true, true);
  std::vector<double> ab = grads_of(true, false);
  std::vector<double> ba = grads_of(false, true);
  ASSERT_EQ(dual.size(), ab.size());
  for (std::size_t i = 0; i < dual.size(); ++i) {
    EXPECT_NEAR(dual[i], ab[i] + ba[i], 1e-12);
  }
}

TEST(DualTrainStep, LossDecreasesOnRepeatedPair) {
  TrainConfig c = tiny_config();
  ParallelCorpus corpus{LanguageId{"en"}, LanguageId{"es"}, {{"hello world", "hola mundo"}}, 0};
  Rng rng(c.seed);
  Vocabulary va = build_vocab(corpus, Side::a);
  Vocabulary vb = build_vocab(corpus, Side::b);
  UniversalModel<double> m = init_model<double>(
      c.d_e, c.d_h, {{corpus.lang_a, va.size()}, {corpus.lang_b, vb.size()}}, rng);
  AdamOptimizer<double> opt(m);
  PairBatch pb = make_batches(corpus, va, vb, 1, 8, rng, false).at(0);
  DualLoss first = dual_train_step(m, pb, opt, 1e-3, std::nullopt);
  DualLoss second = dual_train_step(m, pb, opt, 1e-3, std::nullopt);
  EXPECT_LT(second.total, first.total);
}

TEST(DualTrainStep, LossInvariantUnderRowPermutation) {
  UniversalModel<double> m = random_model(77);
  ParallelCorpus corpus{LanguageId{"en"},
                        LanguageId{"es"},
                        {{"a b", "c d"}, {"b a a", "d"}},
                        0};
  Vocabulary va = build_vocab(corpus, Side::a);
  Vocabulary vb = build_vocab(corpus, Side::b);
  Rng rng(1);
  PairBatch pb = make_batches(corpus, va, vb, 2, 8, rng, false).at(0);

  ParallelCorpus flipped = corpus;
  std::swap(flipped.pairs[0], flipped.pairs[1]);
  Rng rng2(1);
  PairBatch pb2 = make_batches(flipped, va, vb, 2, 8, rng2, false).at(0);

  Tape<double> t1, t2;
  Td a = direction_loss(t1, m, pb.ab);
  Td b = direction_loss(t2, m, pb2.ab);
  EXPECT_NEAR(a.at(0), b.at(0), 1e-12);
}

TEST(Train, ZeroEpochsGivesInitializationAndEmptyHistory) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  EXPECT_TRUE(out.history.empty());
  EXPECT_EQ(out.model.packs.size(), 2u);
  EXPECT_EQ(out.vocabs.size(), 2u);
}

TEST(Train, FixedSeedBitIdenticalHistory) {
  TrainConfig c = tiny_config();
  TrainOutcome<double> a = train<double>(c, toy_corpus());
  TrainOutcome<double> b = train<double>(c, toy_corpus());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].mean_loss, b.history[i].mean_loss);
  }
}

TEST(Train, SubsetCapsPairCount) {
  TrainConfig c = tiny_config();
  c.subset = 3;
  c.epochs = 1;
  c.batch_size = 1;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  EXPECT_EQ(out.history.size(), 1u);
  // 3 pairs at batch 1: covered via determinism of history; the real check is
  // that training ran and produced a finite loss.
  EXPECT_TRUE(std::isfinite(out.history[0].mean_loss));
}

TEST(Train, EpochHookSeesEveryEpoch) {
  TrainConfig c = tiny_config();
  c.epochs = 3;
  std::vector<std::size_t> seen;
  train<double>(c, toy_corpus(),
                [&](std::size_t epoch, const UniversalModel<double>&,
                    const std::vector<Vocabulary>&, const LossHistory& h) {
                  seen.push_back(epoch);
                  EXPECT_EQ(h.size(), epoch + 1);
                });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Checkpoint, RoundTripBitIdentical) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 1;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  LoadedCheckpoint<double> loaded = load_checkpoint<double>(tmp.path() / "ckpt");

  std::vector<std::pair<std::string, Td>> orig, back;
  visit_parameters(out.model, [&](const std::string& n, Td& t) { orig.emplace_back(n, t); });
  visit_parameters(loaded.model, [&](const std::string& n, Td& t) { back.emplace_back(n, t); });
  ASSERT_EQ(orig.size(), back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_EQ(orig[i].first, back[i].first);
    ASSERT_EQ(orig[i].second.size(), back[i].second.size());
    for (std::size_t j = 0; j < orig[i].second.size(); ++j) {
      EXPECT_EQ(orig[i].second.at(j), back[i].second.at(j)) << orig[i].first;
    }
  }
  EXPECT_EQ(loaded.config.seed, c.seed);
  EXPECT_EQ(loaded.vocabs.size(), 2u);
}

TEST(Checkpoint, CorruptManifestIsVersionError) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  std::ofstream(tmp.path() / "ckpt" / "manifest.json", std::ios::binary) << "XXXX garbage";
  EXPECT_THROW(load_checkpoint<double>(tmp.path() / "ckpt"), CheckpointVersionError);
}

TEST(Checkpoint, WrongVersionIsVersionError) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  std::string manifest = read_file(tmp.path() / "ckpt" / "manifest.json");
  auto j = nlohmann::json::parse(manifest);
  j["version"] = 9;
  std::ofstream(tmp.path() / "ckpt" / "manifest.json", std::ios::binary) << j.dump();
  EXPECT_THROW(load_checkpoint<double>(tmp.path() / "ckpt"), CheckpointVersionError);
}

TEST(Checkpoint, TruncatedBlobIsConsistencyError) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  std::string blob = read_file(tmp.path() / "ckpt" / "params.bin");
  blob.resize(blob.size() / 2);
  std::ofstream(tmp.path() / "ckpt" / "params.bin", std::ios::binary) << blob;
  EXPECT_THROW(load_checkpoint<double>(tmp.path() / "ckpt"), CheckpointConsistencyError);
}

TEST(Checkpoint, ManifestMissingTensorIsConsistencyError) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  auto j = nlohmann::json::parse(read_file(tmp.path() / "ckpt" / "manifest.json"));
  nlohmann::json kept = nlohmann::json::array();
  for (const auto& t : j["tensors"]) {
    if (t["name"] != "decoder.candidate.U") kept.push_back(t);
  }
  j["tensors"] = kept;
  std::ofstream(tmp.path() / "ckpt" / "manifest.json", std::ios::binary) << j.dump();
  EXPECT_THROW(load_checkpoint<double>(tmp.path() / "ckpt"), CheckpointConsistencyError);
}

TEST(Checkpoint, PrecisionMismatchIsConsistencyError) {
  TempDir tmp;
  TrainConfig c = tiny_config();
  c.epochs = 0;
  TrainOutcome<double> out = train<double>(c, toy_corpus());
  save_checkpoint(out.model, out.vocabs, c, tmp.path() / "ckpt");
  EXPECT_THROW(load_checkpoint<float>(tmp.path() / "ckpt"), CheckpointConsistencyError);
}

TEST(LossHistoryCsv, HeaderAndRows) {
  LossHistory h{{0, 2.5, 1.25}, {1, 1.75, 1.5}};
  std::string csv = loss_history_csv(h);
  EXPECT_EQ(csv.rfind("epoch,loss,seconds\n", 0), 0u);
  EXPECT_NE(csv.find("0,2.5,1.250"), std::string::npos);
  EXPECT_NE(csv.find("1,1.75,1.500"), std::string::npos);
}

TEST(ConfigJson, RoundTripAndUnknownKey) {
  TrainConfig c = tiny_config();
  c.grad_clip = std::nullopt;
  c.subset = 1000;
  TrainConfig back = config_from_json(to_json(c));
  EXPECT_EQ(back.epochs, c.epochs);
  EXPECT_EQ(back.d_h, c.d_h);
  EXPECT_FALSE(back.grad_clip.has_value());
  ASSERT_TRUE(back.subset.has_value());
  EXPECT_EQ(*back.subset, 1000u);

  nlohmann::json j{{"epohcs", 3}};
  EXPECT_THROW(config_from_json(j), ContractError);
}

TEST(ConfigJson, ValidateRejectsBadValues) {
  TrainConfig c = tiny_config();
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ContractError);
  c = tiny_config();
  c.precision = 16;
  EXPECT_THROW(c.validate(), ContractError);
  c = tiny_config();
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
}
