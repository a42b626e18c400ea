// Copyright 2026 The notakit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "notakit/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "reference_model.hpp"

namespace nk = notakit;

namespace {

std::vector<nk::EncodedSample> micro_batch() {
  nk::EncodedSample a;
  a.context = {3, 4, 5};
  a.candidates = {{6, 7}, {8}, {9, 10}};
  a.label = nk::Label::ground_truth(1);
  nk::EncodedSample b;
  b.context = {11, 3};
  b.candidates = {{4, 9, 6}, {7}, {10, 11}};
  b.label = nk::Label::ground_truth(0);
  return {a, b};
}

// Mean batch loss recomputed from the public forward path.
double reference_loss(const nk::EncoderParams& p, const std::vector<nk::EncodedSample>& batch,
                      nk::Objective objective, double keep, std::uint64_t seed) {
  double total = 0.0;
  for (const auto& s : batch) {
    std::optional<nk::DropoutSpec> dropout;
    if (objective == nk::Objective::kDropout) dropout = nk::DropoutSpec{keep, seed};
    total += nk::sample_loss(nk::forward_sample(p, s, dropout), s.label, objective);
  }
  return total / static_cast<double>(batch.size());
}

nk::SyntheticCorpus tiny_corpus(std::uint64_t seed) {
  nk::SyntheticConfig cfg;
  cfg.n_samples = 200;
  cfg.x = 5;
  cfg.vocab_size = 200;
  cfg.seed = seed;
  return nk::generate_synthetic_corpus(cfg);
}

}  // namespace

TEST(SelectionLoss, UniformLogitsGiveLogX) {
  for (std::size_t x : {2u, 10u, 100u}) {
    std::vector<double> logits(x, 0.37);
    EXPECT_NEAR(nk::selection_loss(logits, 0), std::log(static_cast<double>(x)), 1e-9);
  }
}

TEST(SelectionLoss, ConfidentCorrectCase) {
  std::vector<double> logits(10, 0.0);
  logits[0] = 10.0;
  const double want = std::log1p(9.0 * std::exp(-10.0));
  EXPECT_NEAR(nk::selection_loss(logits, 0), want, 1e-15);
  // ln(1 + 9 e^-10) = 4.0851591387e-4: confident but not saturated.
  EXPECT_NEAR(want, 4.085159138727126e-4, 1e-15);
}

TEST(SelectionLoss, ShiftInvariantAndNonNegative) {
  nk::Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> l(2 + rng.below(20));
    for (auto& v : l) v = rng.uniform(-5, 5);
    const std::size_t truth = rng.below(l.size());
    const double base = nk::selection_loss(l, truth);
    for (auto& v : l) v += 100.0;
    EXPECT_NEAR(nk::selection_loss(l, truth), base, 1e-9);
    EXPECT_GE(base, 0.0);
  }
}

TEST(BinaryLoss, ClosedForms) {
  EXPECT_NEAR(nk::binary_loss(0.0, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(nk::binary_loss(0.0, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(nk::binary_loss(3.0, 1), 0.048587351573742, 1e-12);
  EXPECT_NEAR(nk::binary_loss(-3.0, 0), nk::binary_loss(3.0, 1), 1e-15);
  // Stable far from zero.
  EXPECT_NEAR(nk::binary_loss(800.0, 0), 800.0, 1e-9);
  EXPECT_EQ(nk::binary_loss(-800.0, 0), 0.0);
}

TEST(Backward, LossMatchesForwardPath) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 2);
  auto batch = micro_batch();
  for (auto obj : {nk::Objective::kBinary, nk::Objective::kSelection, nk::Objective::kDropout}) {
    auto r = nk::backward(p, batch, obj, 0.5, 9);
    EXPECT_NEAR(r.loss, reference_loss(p, batch, obj, 0.5, 9), 1e-12) << nk::to_string(obj);
  }
}

TEST(Backward, ReferenceModelAgreesOnLoss) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 3);
  auto batch = micro_batch();
  for (auto obj : {nk::Objective::kBinary, nk::Objective::kSelection, nk::Objective::kDropout}) {
    nk::testing::ReferenceModel ref(p, obj, 0.5, 21);
    EXPECT_NEAR(static_cast<double>(ref.loss(batch)), nk::backward(p, batch, obj, 0.5, 21).loss, 1e-12);
  }
}

TEST(Backward, MatchesCentralDifferences) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 3);
  for (double& v : p.values()) v *= 5.0;  // push gates out of their linear regime
  auto batch = micro_batch();
  for (auto obj : {nk::Objective::kBinary, nk::Objective::kSelection, nk::Objective::kDropout}) {
    auto check = nk::testing::check_gradients(p, batch, obj, 0.5, 21, 1e-5, 1e-4);
    EXPECT_EQ(check.failures, 0u) << nk::to_string(obj) << " worst " << check.worst_relative_error << " at "
                                  << check.worst_index;
    EXPECT_EQ(check.checked, p.parameter_count());
  }
}

TEST(Backward, SingleCandidateSelectionHasZeroGradient) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 4);
  nk::EncodedSample s;
  s.context = {3, 4};
  s.candidates = {{5, 6}};
  s.label = nk::Label::ground_truth(0);
  std::vector<nk::EncodedSample> batch{s};
  auto r = nk::backward(p, batch, nk::Objective::kSelection);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_LT(nk::global_norm(r.gradients.values()), 1e-6);
}

TEST(Backward, DuplicatedSampleContributesTwice) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 5);
  auto batch = micro_batch();
  std::vector<nk::EncodedSample> one{batch[0]};
  std::vector<nk::EncodedSample> twice{batch[0], batch[0]};
  auto g1 = nk::backward(p, one, nk::Objective::kSelection).gradients;
  auto g2 = nk::backward(p, twice, nk::Objective::kSelection).gradients;
  // Sum over the batch doubles, the mean does not move.
  for (std::size_t k = 0; k < g1.parameter_count(); ++k) {
    EXPECT_NEAR(2.0 * g2.values()[k], 2.0 * g1.values()[k], 1e-15 + 1e-12 * std::abs(g1.values()[k]));
  }
  // Rows the batch never touches get no gradient.
  auto untouched = g1.embedding_row(11);
  for (double v : untouched) EXPECT_EQ(v, 0.0);
}

TEST(Clip, BelowCapIsIdentity) {
  std::vector<double> g{1.5, 2.0};  // norm 2.5
  EXPECT_DOUBLE_EQ(nk::clip_gradients(g, 5.0), 2.5);
  EXPECT_EQ(g, (std::vector<double>{1.5, 2.0}));
}

TEST(Clip, AboveCapScalesToCap) {
  std::vector<double> g{6.0, 8.0};  // norm 10
  const auto before = g;
  EXPECT_DOUBLE_EQ(nk::clip_gradients(g, 5.0), 10.0);
  EXPECT_NEAR(nk::global_norm(g), 5.0, 1e-9);
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  const double cosine = (g[0] * before[0] + g[1] * before[1]) / (nk::global_norm(g) * nk::global_norm(before));
  EXPECT_NEAR(cosine, 1.0, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  std::vector<double> p{1.0, -2.0};
  nk::AdamState st(2);
  st.m = {0.5, -0.5};
  st.v = {0.25, 0.25};
  std::vector<double> zero{0.0, 0.0};
  nk::AdamConfig cfg;
  nk::adam_step(p, zero, st, cfg);
  EXPECT_DOUBLE_EQ(st.m[0], 0.45);
  EXPECT_DOUBLE_EQ(st.v[0], 0.25 * 0.999);
  // Stale moments still move the parameters; from a zero state they do not.
  nk::AdamState fresh(2);
  std::vector<double> q{1.0, -2.0};
  nk::adam_step(q, zero, fresh, cfg);
  EXPECT_EQ(q, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nk::AdamConfig cfg;
  for (double g : {1e-3, 0.7, -42.0}) {
    std::vector<double> p{0.0};
    std::vector<double> grad{g};
    nk::AdamState st(1);
    nk::adam_step(p, grad, st, cfg);
    EXPECT_LE(std::abs(p[0]), cfg.learning_rate * (1.0 + 1e-12));
    EXPECT_NEAR(p[0], -cfg.learning_rate * g / (std::abs(g) + 1e-8), 1e-12);
  }
}

TEST(Adam, TwoStepScalarTrace) {
  const double lr = 0.005, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.3;
  // Hand trace.
  double theta = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
  std::vector<double> p{1.0};
  std::vector<double> grad{g};
  nk::AdamState st(1);
  nk::adam_step(p, grad, st, {lr, b1, b2, eps});
  nk::adam_step(p, grad, st, {lr, b1, b2, eps});
  EXPECT_NEAR(p[0], theta, 1e-12);
  EXPECT_EQ(st.step, 2u);
  // Same-gradient steps each move by ~lr.
  EXPECT_NEAR(p[0], 1.0 - 2 * lr, 1e-9);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<double> p{1.0, 2.0};
  std::vector<double> g{1.0};
  nk::AdamState st(2);
  EXPECT_THROW(nk::adam_step(p, g, st, {}), nk::Error);
}

TEST(TrainConfigJson, DefaultsAndRoundTrip) {
  nk::TrainConfig c;
  EXPECT_EQ(c.learning_rate, 0.005);
  EXPECT_EQ(c.clip_norm, 5.0);
  EXPECT_EQ(c.batch_size, 128u);
  EXPECT_EQ(c.epochs, 20u);
  EXPECT_EQ(c.dropout_keep, 0.5);
  c.objective = nk::Objective::kDropout;
  c.seed = 99;
  nlohmann::json j = c;
  auto d = j.get<nk::TrainConfig>();
  EXPECT_EQ(d.objective, nk::Objective::kDropout);
  EXPECT_EQ(d.seed, 99u);
  EXPECT_TRUE(d.violations().empty());
}

TEST(TrainConfigJson, EveryViolationIsReported) {
  nk::TrainConfig c;
  c.learning_rate = -1;
  c.batch_size = 0;
  c.dropout_keep = 1.5;
  EXPECT_EQ(c.violations().size(), 3u);
  nlohmann::json j = {{"lr", 1}, {"epochs", "many"}};
  try {
    (void)j.get<nk::TrainConfig>();
    FAIL() << "expected ConfigError";
  } catch (const nk::ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

TEST(BinaryPairs, OnePositiveAndOneForeignNegative) {
  auto corpus = tiny_corpus(6);
  nk::Vocabulary v;
  auto enc = nk::encode_split(corpus.train, v);
  std::vector<nk::TokenSeq> texts;
  for (const auto& s : corpus.train.samples) {
    texts.push_back(s.context);
    for (const auto& c : s.candidates) texts.push_back(c);
  }
  auto vocab = nk::Vocabulary::build(texts, 1000);
  enc = nk::encode_split(corpus.train, vocab);
  auto pairs = nk::make_binary_pairs(enc, 3);
  ASSERT_EQ(pairs.size(), 2 * enc.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ASSERT_EQ(pairs[i].candidates.size(), 1u);
    if (!pairs[i].label.is_nota()) {
      ++positives;
    }
  }
  EXPECT_EQ(positives, enc.size());
  EXPECT_EQ(nk::make_binary_pairs(enc, 3).size(), pairs.size());
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  auto corpus = tiny_corpus(7);
  std::vector<nk::TokenSeq> texts;
  for (const auto& s : corpus.train.samples) texts.push_back(s.context);
  auto vocab = nk::Vocabulary::build(texts, 1000);
  auto tr = nk::encode_split(corpus.train, vocab);
  auto va = nk::encode_split(corpus.validation, vocab);
  nk::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 5;
  nk::EncoderDims dims{vocab.size(), 8, 8};
  auto result = nk::train(cfg, dims, tr, va);
  EXPECT_EQ(result.best_epoch, 0u);
  EXPECT_EQ(result.log.size(), 1u);
  EXPECT_EQ(result.best, nk::EncoderParams::random_init(dims, nk::derive_seed(5, "init")));
}

TEST(Train, SameSeedSameParameters) {
  auto corpus = tiny_corpus(8);
  std::vector<nk::TokenSeq> texts;
  for (const auto& s : corpus.train.samples) {
    texts.push_back(s.context);
    for (const auto& c : s.candidates) texts.push_back(c);
  }
  auto vocab = nk::Vocabulary::build(texts, 1000);
  auto tr = nk::encode_split(corpus.train, vocab);
  auto va = nk::encode_split(corpus.validation, vocab);
  nk::EncoderDims dims{vocab.size(), 8, 8};
  for (auto obj : {nk::Objective::kBinary, nk::Objective::kSelection, nk::Objective::kDropout}) {
    nk::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.objective = obj;
    cfg.seed = 11;
    auto a = nk::train(cfg, dims, tr, va);
    auto b = nk::train(cfg, dims, tr, va);
    EXPECT_EQ(a.best, b.best) << nk::to_string(obj);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    ASSERT_EQ(a.log.size(), 3u);
    for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].train_loss, b.log[e].train_loss);
  }
}

TEST(Train, LogCsvHasOneRowPerEpoch) {
  std::vector<nk::EpochLog> log{{0, 2.3, 0.1, 0.5}, {1, 1.9, 0.4, 1.0}};
  std::ostringstream out;
  nk::write_train_log_csv(log, out);
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_R,wall_time");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(RecallAt1, SkipsNotaSamples) {
  auto p = nk::EncoderParams::random_init({12, 5, 4}, 9);
  auto batch = micro_batch();
  nk::EncodedSample n = batch[0];
  n.label = nk::Label::nota();
  std::vector<nk::EncodedSample> only_nota{n};
  EXPECT_FALSE(nk::recall_at_1(p, only_nota).has_value());
  std::vector<nk::EncodedSample> mixed{batch[0], n};
  const auto sv = nk::forward_sample(p, batch[0]);
  const double want = sv.argmax() == batch[0].label.truth() ? 1.0 : 0.0;
  EXPECT_EQ(nk::recall_at_1(p, mixed), std::optional<double>(want));
}
