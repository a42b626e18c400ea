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

#include "notakit/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nk = notakit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("notakit_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nk::DialogSample make_sample(std::string ctx, std::vector<std::string> cands, std::size_t truth) {
  nk::DialogSample s;
  s.context = nk::tokenize(ctx);
  for (auto& c : cands) s.candidates.push_back(nk::tokenize(c));
  s.label = nk::Label::ground_truth(truth);
  return s;
}

nk::CorpusSplit small_split(std::size_t n, std::size_t x, std::uint64_t seed) {
  nk::SyntheticConfig cfg;
  cfg.n_samples = n * 10;
  cfg.x = x;
  cfg.seed = seed;
  auto corpus = nk::generate_synthetic_corpus(cfg);
  corpus.validation.samples.resize(n);
  return corpus.validation;
}

std::size_t count_nota_candidates(const nk::DialogSample& s) {
  return static_cast<std::size_t>(
      std::count_if(s.candidates.begin(), s.candidates.end(),
                    [](const nk::TokenSeq& c) { return nk::is_nota_candidate(c); }));
}

}  // namespace

TEST(Tokenize, LowercasesAndSplitsOnWhitespace) {
  EXPECT_EQ(nk::tokenize("  Hello\tWORLD  again\n"), (nk::TokenSeq{"hello", "world", "again"}));
  EXPECT_TRUE(nk::tokenize("   ").empty());
  EXPECT_EQ(nk::detokenize({"a", "b"}), "a b");
}

TEST(Vocabulary, ReservedIdsComeFirst) {
  nk::Vocabulary v;
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.lookup("_PAD"), nk::Vocabulary::kPad);
  EXPECT_EQ(v.lookup("_UNK"), nk::Vocabulary::kUnk);
  EXPECT_EQ(v.lookup("_NOTA"), nk::Vocabulary::kNota);
  EXPECT_EQ(v.lookup("anything"), nk::Vocabulary::kUnk);
}

TEST(Vocabulary, KeepsMostFrequent) {
  std::vector<nk::TokenSeq> corpus{nk::tokenize("a a b")};
  auto v = nk::Vocabulary::build(corpus, 1);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"_PAD", "_UNK", "_NOTA", "a"}));
  EXPECT_EQ(v.lookup("b"), nk::Vocabulary::kUnk);
}

TEST(Vocabulary, FrequencyTiesAreLexicographic) {
  std::vector<nk::TokenSeq> corpus{nk::tokenize("y x")};
  auto v = nk::Vocabulary::build(corpus, 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"_PAD", "_UNK", "_NOTA", "x", "y"}));
  auto one = nk::Vocabulary::build(corpus, 1);
  EXPECT_EQ(one.lookup("x"), 3);
  EXPECT_EQ(one.lookup("y"), nk::Vocabulary::kUnk);
}

TEST(Vocabulary, IdsAreDense) {
  std::vector<nk::TokenSeq> corpus{nk::tokenize("q w e r t y q w e")};
  auto v = nk::Vocabulary::build(corpus, 100);
  for (std::size_t id = 0; id < v.size(); ++id) {
    EXPECT_EQ(v.lookup(v.token(static_cast<nk::TokenId>(id))), static_cast<nk::TokenId>(id));
  }
}

TEST(Vocabulary, EmptyCorpusIsAnError) {
  std::vector<nk::TokenSeq> corpus;
  EXPECT_THROW(nk::Vocabulary::build(corpus, 10), nk::Error);
  std::vector<nk::TokenSeq> blank{{}};
  EXPECT_THROW(nk::Vocabulary::build(blank, 10), nk::Error);
}

TEST(Vocabulary, ZipfCapMatchesHashMapCount) {
  // Token k occurs 1 + 50000 / (k + 1) times: Zipf-shaped with long tail ties.
  const std::size_t n_types = 12000;
  std::vector<std::string> stream;
  for (std::size_t k = 0; k < n_types; ++k) {
    const std::size_t reps = 1 + 50000 / (k + 1);
    for (std::size_t r = 0; r < reps; ++r) stream.push_back("tok" + std::to_string(k));
  }
  nk::Rng rng(11);
  rng.shuffle(stream);
  std::vector<nk::TokenSeq> corpus;
  for (std::size_t i = 0; i < stream.size(); i += 100) {
    corpus.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(i),
                        stream.begin() + static_cast<std::ptrdiff_t>(std::min(i + 100, stream.size())));
  }

  // Independent pass: count, rank by (-count, token).
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : stream) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  auto v = nk::Vocabulary::build(corpus, 10000);
  ASSERT_EQ(v.size(), 10000u + nk::Vocabulary::kReserved);
  for (std::size_t r = 0; r < 10000; ++r) {
    ASSERT_NE(v.lookup(ranked[r].first), nk::Vocabulary::kUnk) << "rank " << r + 1;
  }
  EXPECT_EQ(v.lookup(ranked[10000].first), nk::Vocabulary::kUnk);
  for (std::size_t r = 10000; r < ranked.size(); ++r) {
    ASSERT_EQ(v.lookup(ranked[r].first), nk::Vocabulary::kUnk);
  }
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  auto dir = temp_dir("vocab");
  std::vector<nk::TokenSeq> corpus{nk::tokenize("b a c a")};
  auto v = nk::Vocabulary::build(corpus, 10);
  v.save(dir / "vocab.json");
  auto w = nk::Vocabulary::load(dir / "vocab.json");
  EXPECT_EQ(v.tokens(), w.tokens());
  EXPECT_EQ(v.fingerprint(), w.fingerprint());
}

TEST(Encode, TruncatesContextFromTheLeftAndResponsesFromTheRight) {
  nk::DialogSample s;
  for (std::size_t i = 0; i < nk::kMaxContextTokens + 5; ++i) s.context.push_back("c" + std::to_string(i));
  nk::TokenSeq long_response;
  for (std::size_t i = 0; i < nk::kMaxResponseTokens + 5; ++i) long_response.push_back("r" + std::to_string(i));
  s.candidates = {long_response};
  s.label = nk::Label::ground_truth(0);
  auto v = nk::Vocabulary::from_tokens({"_PAD", "_UNK", "_NOTA", "c5", "c164", "r0", "r84"});
  auto e = nk::encode_sample(s, v);
  ASSERT_EQ(e.context.size(), nk::kMaxContextTokens);
  EXPECT_EQ(e.context.front(), v.lookup("c5"));
  EXPECT_EQ(e.context.back(), v.lookup("c164"));
  ASSERT_EQ(e.candidates[0].size(), nk::kMaxResponseTokens);
  EXPECT_EQ(e.candidates[0].front(), v.lookup("r0"));
}

TEST(Encode, NotaCandidateMapsToReservedId) {
  auto s = make_sample("hi", {"_NOTA", "hello"}, 1);
  nk::Vocabulary v;
  auto e = nk::encode_sample(s, v);
  EXPECT_EQ(e.candidates[0], (nk::IdSeq{nk::Vocabulary::kNota}));
  EXPECT_TRUE(nk::is_nota_candidate(e.candidates[0]));
  EXPECT_FALSE(nk::is_nota_candidate(e.candidates[1]));
}

TEST(NotaEvalSet, ZeroFractionStillPlantsNotaInDirectMode) {
  auto split = small_split(50, 10, 1);
  auto out = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.0, 3);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto& s = out.samples[i];
    EXPECT_FALSE(s.label.is_nota());
    EXPECT_EQ(count_nota_candidates(s), 1u);
    EXPECT_EQ(s.candidates.size(), 10u);
    // The ground truth is untouched.
    EXPECT_EQ(s.candidates[s.label.truth()], split.samples[i].candidates[split.samples[i].label.truth()]);
  }
}

TEST(NotaEvalSet, HalfOfOneThousandIsExactlyFiveHundred) {
  auto split = small_split(1000, 10, 2);
  for (auto mode : {nk::NotaMode::kDirect, nk::NotaMode::kThreshold}) {
    auto out = nk::make_nota_eval_set(split, mode, 0.5, 7);
    std::size_t nota = 0;
    for (const auto& s : out.samples) nota += s.label.is_nota() ? 1 : 0;
    EXPECT_EQ(nota, 500u);
    EXPECT_EQ(out.samples.size(), 1000u);
  }
}

TEST(NotaEvalSet, CountIsRoundedFractionForManySeeds) {
  auto split = small_split(37, 4, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double f : {0.0, 0.1, 0.25, 0.5, 0.9, 1.0}) {
      auto out = nk::make_nota_eval_set(split, nk::NotaMode::kThreshold, f, seed);
      std::size_t nota = 0;
      for (const auto& s : out.samples) nota += s.label.is_nota() ? 1 : 0;
      EXPECT_EQ(nota, static_cast<std::size_t>(std::llround(f * 37)));
    }
  }
}

TEST(NotaEvalSet, ThresholdModeLeavesNineCandidates) {
  auto split = small_split(200, 10, 4);
  auto out = nk::make_nota_eval_set(split, nk::NotaMode::kThreshold, 0.5, 5);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto& s = out.samples[i];
    const auto& src = split.samples[i];
    ASSERT_EQ(s.candidates.size(), 9u);
    EXPECT_EQ(count_nota_candidates(s), 0u);
    const auto& truth_text = src.candidates[src.label.truth()];
    const bool has_truth = std::find(s.candidates.begin(), s.candidates.end(), truth_text) != s.candidates.end();
    if (s.label.is_nota()) {
      EXPECT_FALSE(has_truth);
    } else {
      EXPECT_EQ(s.candidates[s.label.truth()], truth_text);
    }
  }
}

TEST(NotaEvalSet, DirectModeReplacesGroundTruthOrFirstDistractor) {
  auto s = make_sample("ctx", {"d0", "t", "d2"}, 1);
  nk::CorpusSplit split{nk::SplitRole::kTest, {s}};
  auto all = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 1.0, 0);
  EXPECT_TRUE(all.samples[0].label.is_nota());
  EXPECT_EQ(nk::detokenize(all.samples[0].candidates[1]), "_NOTA");
  EXPECT_EQ(nk::detokenize(all.samples[0].candidates[0]), "d0");

  auto none = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.0, 0);
  EXPECT_EQ(none.samples[0].label.truth(), 1u);
  EXPECT_EQ(nk::detokenize(none.samples[0].candidates[0]), "_NOTA");

  // First distractor when the truth sits at index 0 is index 1.
  nk::CorpusSplit split0{nk::SplitRole::kTest, {make_sample("ctx", {"t", "d1", "d2"}, 0)}};
  auto thr = nk::make_nota_eval_set(split0, nk::NotaMode::kThreshold, 0.0, 0);
  EXPECT_EQ(thr.samples[0].label.truth(), 0u);
  ASSERT_EQ(thr.samples[0].candidates.size(), 2u);
  EXPECT_EQ(nk::detokenize(thr.samples[0].candidates[1]), "d2");
}

TEST(NotaEvalSet, SameSeedSameOutput) {
  auto split = small_split(100, 5, 6);
  auto a = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.5, 9);
  auto b = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.5, 9);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(NotaEvalSet, RejectsSamplesWithoutGroundTruth) {
  nk::DialogSample s = make_sample("c", {"a", "b"}, 0);
  s.label = nk::Label::nota();
  nk::CorpusSplit split{nk::SplitRole::kTest, {s}};
  EXPECT_THROW(nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.5, 0), nk::Error);
  nk::CorpusSplit ok{nk::SplitRole::kTest, {make_sample("c", {"a", "b"}, 0)}};
  EXPECT_THROW(nk::make_nota_eval_set(ok, nk::NotaMode::kDirect, 1.5, 0), nk::Error);
}

TEST(ExpandCandidates, SameSizeIsIdentity) {
  auto split = small_split(30, 10, 7);
  EXPECT_EQ(nk::expand_candidates(split, 10, 1).samples, split.samples);
}

TEST(ExpandCandidates, TenToOneHundred) {
  nk::SyntheticConfig cfg;
  cfg.n_samples = 2000;
  cfg.seed = 8;
  auto split = nk::generate_synthetic_corpus(cfg).validation;
  auto out = nk::expand_candidates(split, 100, 3);
  ASSERT_EQ(out.samples.size(), split.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto& s = out.samples[i];
    const auto& src = split.samples[i];
    ASSERT_EQ(s.candidates.size(), 100u);
    // Ground-truth text unchanged, original candidates kept in place.
    EXPECT_EQ(nk::detokenize(s.candidates[s.label.truth()]), nk::detokenize(src.candidates[src.label.truth()]));
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(s.candidates[k], src.candidates[k]);
    std::set<std::string> distinct;
    for (const auto& c : s.candidates) distinct.insert(nk::detokenize(c));
    EXPECT_EQ(distinct.size(), 100u);
  }
}

TEST(ExpandCandidates, TooSmallCorpusIsAnError) {
  nk::CorpusSplit split{nk::SplitRole::kTest, {make_sample("c", {"a", "b"}, 0), make_sample("d", {"e", "f"}, 1)}};
  EXPECT_THROW(nk::expand_candidates(split, 10, 0), nk::Error);
  EXPECT_THROW(nk::expand_candidates(split, 1, 0), nk::Error);
}

TEST(TruncateCandidates, KeepsGroundTruth) {
  nk::CorpusSplit split{nk::SplitRole::kTest, {make_sample("c", {"a", "b", "c", "t", "e"}, 3)}};
  auto out = nk::truncate_candidates(split, 2);
  ASSERT_EQ(out.samples[0].candidates.size(), 2u);
  EXPECT_EQ(nk::detokenize(out.samples[0].candidates[out.samples[0].label.truth()]), "t");
}

TEST(Synthetic, SameSeedByteIdentical) {
  nk::SyntheticConfig cfg;
  cfg.seed = 42;
  auto a = nk::generate_synthetic_corpus(cfg);
  auto b = nk::generate_synthetic_corpus(cfg);
  auto dir = temp_dir("synthetic");
  nk::save_split(a.train, dir / "a.jsonl");
  nk::save_split(b.train, dir / "b.jsonl");
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  cfg.seed = 43;
  auto c = nk::generate_synthetic_corpus(cfg);
  EXPECT_NE(a.train.samples, c.train.samples);
}

TEST(Synthetic, ExactlyOneCandidateSharesTheContextKeyword) {
  nk::SyntheticConfig cfg;
  cfg.n_samples = 1000;
  cfg.x = 10;
  cfg.seed = 5;
  auto corpus = nk::generate_synthetic_corpus(cfg);
  EXPECT_EQ(corpus.train.samples.size(), 800u);
  EXPECT_EQ(corpus.validation.samples.size(), 100u);
  EXPECT_EQ(corpus.test.samples.size(), 100u);
  for (const auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
    for (const auto& s : split->samples) {
      ASSERT_EQ(s.candidates.size(), 10u);
      std::string keyword;
      for (const auto& t : s.context) {
        if (t.starts_with("topic")) keyword = t;
      }
      ASSERT_FALSE(keyword.empty());
      std::size_t sharing = 0;
      for (std::size_t k = 0; k < s.candidates.size(); ++k) {
        if (std::find(s.candidates[k].begin(), s.candidates[k].end(), keyword) != s.candidates[k].end()) {
          ++sharing;
          EXPECT_EQ(k, s.label.truth());
        }
      }
      EXPECT_EQ(sharing, 1u);
    }
  }
}

TEST(Synthetic, BagOfWordsOverlapHeuristicExceedsNinetyFivePercent) {
  // Oracle: pick the candidate sharing the most word types with the context.
  nk::SyntheticConfig cfg;
  cfg.n_samples = 1000;
  cfg.x = 10;
  cfg.seed = 17;
  auto corpus = nk::generate_synthetic_corpus(cfg);
  std::size_t correct = 0, total = 0;
  for (const auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
    for (const auto& s : split->samples) {
      std::set<std::string> ctx(s.context.begin(), s.context.end());
      std::size_t best = 0, best_overlap = 0;
      for (std::size_t k = 0; k < s.candidates.size(); ++k) {
        std::set<std::string> cand(s.candidates[k].begin(), s.candidates[k].end());
        std::size_t overlap = 0;
        for (const auto& w : cand) overlap += ctx.count(w);
        if (overlap > best_overlap) {
          best_overlap = overlap;
          best = k;
        }
      }
      correct += best == s.label.truth() ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}

TEST(Synthetic, RejectsBadConfig) {
  nk::SyntheticConfig cfg;
  cfg.n_samples = 5;
  cfg.x = 1;
  try {
    nk::generate_synthetic_corpus(cfg);
    FAIL() << "expected ConfigError";
  } catch (const nk::ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

TEST(Formats, JsonlLineParses) {
  auto s = nk::sample_from_jsonl(R"({"context":"a b","candidates":["c","d"],"label":0})");
  EXPECT_EQ(s.context, (nk::TokenSeq{"a", "b"}));
  ASSERT_EQ(s.candidates.size(), 2u);
  EXPECT_EQ(s.label, nk::Label::ground_truth(0));
  auto n = nk::sample_from_jsonl(R"({"context":"a","candidates":["c","_NOTA"],"label":"NOTA"})");
  EXPECT_TRUE(n.label.is_nota());
  EXPECT_THROW(nk::sample_from_jsonl(R"({"context":"a","candidates":["c"],"label":3})"), nk::Error);
}

TEST(Formats, JsonlRoundTripIsByteIdentical) {
  auto split = small_split(100, 10, 9);
  auto nota = nk::make_nota_eval_set(split, nk::NotaMode::kDirect, 0.5, 1);
  auto dir = temp_dir("roundtrip");
  nk::save_split(nota, dir / "a.jsonl");
  auto loaded = nk::load_split(dir / "a.jsonl", nk::SplitFormat::kJsonl, nk::SplitRole::kTest);
  EXPECT_EQ(loaded.samples, nota.samples);
  nk::save_split(loaded, dir / "b.jsonl");
  const auto a = slurp(dir / "a.jsonl");
  EXPECT_EQ(a, slurp(dir / "b.jsonl"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 100);
}

TEST(Formats, TsvBinaryLine) {
  auto dir = temp_dir("tsv_binary");
  std::ofstream(dir / "pairs.tsv") << "hi there\thello\t1\nhi\tbye\t0\n";
  auto split = nk::load_split(dir / "pairs.tsv", nk::SplitFormat::kTsvBinary, nk::SplitRole::kTrain);
  ASSERT_EQ(split.samples.size(), 2u);
  EXPECT_EQ(split.samples[0].context, (nk::TokenSeq{"hi", "there"}));
  EXPECT_EQ(split.samples[0].candidates, (std::vector<nk::TokenSeq>{{"hello"}}));
  EXPECT_EQ(split.samples[0].label, nk::Label::ground_truth(0));
  EXPECT_TRUE(split.samples[1].label.is_nota());
}

TEST(Formats, TsvRankingShufflesGroundTruth) {
  auto dir = temp_dir("tsv_ranking");
  {
    std::ofstream out(dir / "rank.tsv");
    for (int i = 0; i < 40; ++i) out << "ctx " << i << "\ttruth" << i << "\ta" << i << "\tb" << i << "\n";
  }
  auto a = nk::load_split(dir / "rank.tsv", nk::SplitFormat::kTsvRanking, nk::SplitRole::kTest, 3);
  auto b = nk::load_split(dir / "rank.tsv", nk::SplitFormat::kTsvRanking, nk::SplitRole::kTest, 3);
  EXPECT_EQ(a.samples, b.samples);
  std::set<std::size_t> positions;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& s = a.samples[i];
    EXPECT_EQ(nk::detokenize(s.candidates[s.label.truth()]), "truth" + std::to_string(i));
    positions.insert(s.label.truth());
  }
  EXPECT_EQ(positions.size(), 3u);
}

TEST(Formats, MalformedLinesNameTheLineNumber) {
  auto dir = temp_dir("malformed");
  std::ofstream(dir / "bad.jsonl") << R"({"context":"a","candidates":["b"],"label":0})" << "\n{oops\n";
  try {
    nk::load_split(dir / "bad.jsonl", nk::SplitFormat::kJsonl, nk::SplitRole::kTest);
    FAIL() << "expected an error";
  } catch (const nk::Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "bad.tsv") << "c\ta\tb\nc\ta\tb\td\n";
  try {
    nk::load_split(dir / "bad.tsv", nk::SplitFormat::kTsvRanking, nk::SplitRole::kTest);
    FAIL() << "expected an error";
  } catch (const nk::Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("inconsistent candidate count"), std::string::npos);
  }
}

TEST(Formats, TsvIsReadOnly) {
  auto dir = temp_dir("readonly");
  nk::CorpusSplit split;
  EXPECT_THROW(nk::save_split(split, dir / "x.tsv", nk::SplitFormat::kTsvBinary), nk::Error);
}
