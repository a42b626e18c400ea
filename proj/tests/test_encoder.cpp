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

#include "notakit/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

namespace nk = notakit;
namespace fs = std::filesystem;

namespace {

nk::EncoderDims tiny_dims() { return {12, 5, 4}; }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent single step from the zero state, written against the gate
// layout only: pre = W x + b (the recurrent term vanishes at h = 0).
std::vector<double> one_step_oracle(const nk::EncoderParams& p, nk::EncoderSide side, nk::TokenId token) {
  const std::size_t E = p.dims().d_emb, H = p.dims().d_hid;
  auto cell = p.cell(side);
  auto x = p.embedding_row(token);
  std::vector<double> pre(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    long double acc = cell.bias[r];
    for (std::size_t k = 0; k < E; ++k) acc += static_cast<long double>(cell.w_input[r * E + k]) * x[k];
    pre[r] = static_cast<double>(acc);
  }
  std::vector<double> h(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sigmoid(pre[j]);
    const double g = std::tanh(pre[2 * H + j]);
    const double o = sigmoid(pre[3 * H + j]);
    h[j] = o * std::tanh(i * g);  // forget gate multiplies a zero cell
  }
  return h;
}

double kahan_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double y = a[i] * b[i] - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

nk::EncodedSample sample_with(std::vector<nk::IdSeq> candidates) {
  nk::EncodedSample s;
  s.context = {3, 4, 5};
  s.candidates = std::move(candidates);
  s.label = nk::Label::ground_truth(0);
  return s;
}

}  // namespace

TEST(EncoderParams, InitRanges) {
  auto p = nk::EncoderParams::random_init({50, 8, 6}, 1);
  for (double v : p.embedding()) {
    EXPECT_LE(std::abs(v), 0.1);
  }
  for (auto side : {nk::EncoderSide::kContext, nk::EncoderSide::kResponse}) {
    auto c = p.cell(side);
    for (double v : c.w_input) EXPECT_LE(std::abs(v), 0.08);
    for (double v : c.w_recurrent) EXPECT_LE(std::abs(v), 0.08);
    for (std::size_t r = 0; r < c.bias.size(); ++r) {
      if (r >= 6 && r < 12) {
        EXPECT_EQ(c.bias[r], 1.0);
      } else {
        EXPECT_LE(std::abs(c.bias[r]), 0.08);
      }
    }
  }
  EXPECT_EQ(p.parameter_count(), 50u * 8 + 2 * (4 * 6 * 8 + 4 * 6 * 6 + 4 * 6));
}

TEST(EncoderParams, CellsAreIndependent) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 2);
  auto a = p.cell(nk::EncoderSide::kContext);
  auto b = p.cell(nk::EncoderSide::kResponse);
  EXPECT_NE(a.w_input.data(), b.w_input.data());
  EXPECT_FALSE(std::equal(a.w_input.begin(), a.w_input.end(), b.w_input.begin()));
}

TEST(EncoderParams, NotaRowCopiesUnkRow) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 3);
  auto q = p.with_nota_as_unk();
  auto unk = q.embedding_row(nk::Vocabulary::kUnk);
  auto nota = q.embedding_row(nk::Vocabulary::kNota);
  EXPECT_TRUE(std::equal(unk.begin(), unk.end(), nota.begin()));
  auto orig = p.embedding_row(nk::Vocabulary::kNota);
  EXPECT_FALSE(std::equal(orig.begin(), orig.end(), nota.begin()));
}

TEST(EncodeSequence, ZeroParamsGiveZeroState) {
  nk::EncoderParams p(tiny_dims());
  std::vector<nk::TokenId> tokens{3, 7, 1, 9};
  for (double v : nk::encode_sequence(p, nk::EncoderSide::kContext, tokens)) EXPECT_EQ(v, 0.0);
}

TEST(EncodeSequence, DeterministicForIdenticalInput) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 4);
  std::vector<nk::TokenId> tokens{3, 7, 1, 9};
  EXPECT_EQ(nk::encode_sequence(p, nk::EncoderSide::kResponse, tokens),
            nk::encode_sequence(p, nk::EncoderSide::kResponse, tokens));
}

TEST(EncodeSequence, SingleTokenMatchesOneStepOracle) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 5);
  // Larger weights so gates leave their linear regime.
  for (double& v : p.values()) v *= 10.0;
  for (auto side : {nk::EncoderSide::kContext, nk::EncoderSide::kResponse}) {
    for (nk::TokenId t = 0; t < 12; ++t) {
      std::vector<nk::TokenId> tokens{t};
      auto got = nk::encode_sequence(p, side, tokens);
      auto want = one_step_oracle(p, side, t);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
    }
  }
}

TEST(EncodeSequence, RejectsOutOfRangeTokens) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 6);
  std::vector<nk::TokenId> bad{3, 12};
  EXPECT_THROW(nk::encode_sequence(p, nk::EncoderSide::kContext, bad), nk::Error);
  std::vector<nk::TokenId> negative{-1};
  EXPECT_THROW(nk::encode_sequence(p, nk::EncoderSide::kContext, negative), nk::Error);
  std::vector<nk::TokenId> empty;
  EXPECT_THROW(nk::encode_sequence(p, nk::EncoderSide::kContext, empty), nk::Error);
}

TEST(EncodeSequence, MaskScalesOutput) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 7);
  std::vector<nk::TokenId> tokens{3, 4};
  auto plain = nk::encode_sequence(p, nk::EncoderSide::kContext, tokens);
  std::vector<double> mask{2.0, 0.0, 2.0, 0.0};
  auto masked = nk::encode_sequence(p, nk::EncoderSide::kContext, tokens, mask);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(masked[j], plain[j] * mask[j]);
}

TEST(Score, SmallCases) {
  std::vector<double> c{1, 0}, r{0, 1};
  EXPECT_EQ(nk::score(c, r), 0.0);
  std::vector<double> a{1, 2}, b{3, 4};
  EXPECT_EQ(nk::score(a, b), 11.0);
  std::vector<double> short_vec{1};
  EXPECT_THROW(nk::score(a, short_vec), nk::Error);
}

TEST(Score, MatchesCompensatedSum) {
  nk::Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(600);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = rng.uniform(-10, 10);
    for (auto& v : b) v = rng.uniform(-10, 10);
    const double na = std::sqrt(kahan_dot(a, a)), nb = std::sqrt(kahan_dot(b, b));
    EXPECT_LE(std::abs(nk::score(a, b) - kahan_dot(a, b)), 1e-10 * na * nb);
  }
}

TEST(Softmax, ClosedForm) {
  std::vector<double> l{0.0, std::log(3.0)};
  auto p = nk::softmax(l);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  nk::Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(2 + rng.below(40));
    for (auto& v : l) v = rng.uniform(-20, 20);
    auto p = nk::softmax(l);
    std::vector<double> shifted = l;
    for (auto& v : shifted) v += 100.0;
    auto q = nk::softmax(shifted);
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (std::size_t i = 0; i < l.size(); ++i) {
      EXPECT_NEAR(p[i], q[i], 1e-12);
      EXPECT_GT(p[i], 0.0);
      EXPECT_LT(p[i], 1.0);
    }
    auto sv = nk::make_score_vector(l, std::vector<bool>(l.size(), false));
    EXPECT_EQ(std::max_element(sv.probs.begin(), sv.probs.end()) - sv.probs.begin(),
              static_cast<std::ptrdiff_t>(sv.argmax()));
  }
}

TEST(ForwardSample, IdenticalCandidatesGiveUniformProbs) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 10);
  auto s = sample_with({{6, 7}, {6, 7}, {6, 7}, {6, 7}});
  auto sv = nk::forward_sample(p, s);
  for (double v : sv.probs) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(ForwardSample, LogitsAreContextDotResponse) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 11);
  auto s = sample_with({{6, 7}, {8}, {9, 10, 11}});
  auto sv = nk::forward_sample(p, s);
  auto c = nk::encode_sequence(p, nk::EncoderSide::kContext, s.context);
  for (std::size_t i = 0; i < 3; ++i) {
    auto r = nk::encode_sequence(p, nk::EncoderSide::kResponse, s.candidates[i]);
    EXPECT_EQ(sv.logits[i], nk::score(c, r));
  }
}

TEST(ForwardSample, PermutingCandidatesPermutesLogits) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 12);
  auto s = sample_with({{6, 7}, {8}, {9, 10, 11}, {2}});
  std::vector<std::size_t> perm{2, 0, 3, 1};
  nk::EncodedSample t = s;
  for (std::size_t i = 0; i < perm.size(); ++i) t.candidates[i] = s.candidates[perm[i]];
  for (std::optional<nk::DropoutSpec> dropout :
       {std::optional<nk::DropoutSpec>{}, std::optional<nk::DropoutSpec>{nk::DropoutSpec{0.5, 77}}}) {
    auto a = nk::forward_sample(p, s, dropout);
    auto b = nk::forward_sample(p, t, dropout);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      EXPECT_EQ(b.logits[i], a.logits[perm[i]]);
      EXPECT_EQ(b.probs[i], a.probs[perm[i]]);
    }
  }
  auto sv = nk::forward_sample(p, s);
  EXPECT_EQ(sv.nota_index(), std::optional<std::size_t>(3));
}

TEST(ForwardSample, DropoutDeterminism) {
  auto p = nk::EncoderParams::random_init(tiny_dims(), 13);
  auto s = sample_with({{6, 7}, {8}, {9, 10, 11}});
  EXPECT_EQ(nk::forward_sample(p, s).logits, nk::forward_sample(p, s).logits);
  nk::DropoutSpec a{0.5, 1}, b{0.5, 2};
  EXPECT_EQ(nk::forward_sample(p, s, a).logits, nk::forward_sample(p, s, a).logits);
  EXPECT_NE(nk::forward_sample(p, s, a).logits, nk::forward_sample(p, s, b).logits);
  nk::DropoutSpec keep_all{1.0, 5};
  EXPECT_EQ(nk::forward_sample(p, s, keep_all).logits, nk::forward_sample(p, s).logits);
}

TEST(DropoutMask, ValuesAreZeroOrInverseKeep) {
  auto m = nk::dropout_mask(1000, {0.5, 3});
  std::size_t kept = 0;
  for (double v : m) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_GT(kept, 430u);
  EXPECT_LT(kept, 570u);
  EXPECT_EQ(m, nk::dropout_mask(1000, {0.5, 3}));
}

TEST(Checkpoint, RoundTripAndValidation) {
  auto dir = fs::temp_directory_path() / "notakit_encoder_ckpt";
  fs::create_directories(dir);
  nk::Checkpoint ck;
  ck.params = nk::EncoderParams::random_init(tiny_dims(), 14);
  std::vector<std::string> tokens{"_PAD", "_UNK", "_NOTA"};
  for (int i = 3; i < 12; ++i) tokens.push_back("t" + std::to_string(i));
  auto vocab = nk::Vocabulary::from_tokens(tokens);
  ck.vocab_fingerprint = vocab.fingerprint();
  ck.epoch = 3;
  ck.objective = "selection";
  nk::save_checkpoint(ck, dir / "ck.json");
  auto loaded = nk::load_checkpoint(dir / "ck.json", tiny_dims(), &vocab);
  EXPECT_EQ(loaded.params, ck.params);
  EXPECT_EQ(loaded.epoch, 3u);
  nk::EncoderDims other{12, 5, 5};
  EXPECT_THROW(nk::load_checkpoint(dir / "ck.json", other), nk::Error);
  auto wrong_vocab = nk::Vocabulary::from_tokens({"_PAD", "_UNK", "_NOTA", "z"});
  EXPECT_THROW(nk::load_checkpoint(dir / "ck.json", std::nullopt, &wrong_vocab), nk::Error);
}

TEST(Profiles, DeskAndFull) {
  EXPECT_EQ(nk::profile_dims(nk::ModelProfile::kDesk, 100), (nk::EncoderDims{100, 32, 64}));
  EXPECT_EQ(nk::profile_dims(nk::ModelProfile::kFull, 100), (nk::EncoderDims{100, 300, 512}));
}
