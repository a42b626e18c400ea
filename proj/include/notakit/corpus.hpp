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

// Dialog corpora: vocabularies, response-selection samples, NOTA evaluation
// set construction, distractor expansion, synthetic data and file formats.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "notakit/common.hpp"

namespace notakit {

using TokenId = std::int32_t;
using TokenSeq = std::vector<std::string>;
using IdSeq = std::vector<TokenId>;

inline constexpr std::string_view kPadToken = "_PAD";
inline constexpr std::string_view kUnkToken = "_UNK";
inline constexpr std::string_view kNotaToken = "_NOTA";

inline constexpr std::size_t kMaxContextTokens = 160;
inline constexpr std::size_t kMaxResponseTokens = 80;

/// Lowercases and splits on whitespace.
TokenSeq tokenize(std::string_view text);
std::string detokenize(const TokenSeq& tokens);

/// Dense token <-> id map. Ids 0..2 are reserved for _PAD, _UNK and _NOTA;
/// corpus tokens follow in descending frequency order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kNota = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();

  /// Keeps the max_vocab most frequent tokens; frequency ties are broken by
  /// lexicographic token order. Reserved token strings are not counted.
  static Vocabulary build(std::span<const TokenSeq> corpus, std::size_t max_vocab);

  /// Rebuild from an explicit id-ordered token list (reserved tokens first).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Fingerprint of the id order; stored in checkpoints to catch mismatched
  /// vocabularies.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Either the index of the ground-truth candidate or the NOTA marker.
class Label {
 public:
  static Label ground_truth(std::size_t index) { return Label(index); }
  static Label nota() { return Label(std::nullopt); }

  bool is_nota() const { return !truth_.has_value(); }
  /// Throws when the label is NOTA.
  std::size_t truth() const;
  const std::optional<std::size_t>& truth_opt() const { return truth_; }

  friend bool operator==(const Label&, const Label&) = default;

 private:
  explicit Label(std::optional<std::size_t> truth) : truth_(truth) {}
  std::optional<std::size_t> truth_;
};

/// One context with its ordered candidate set, kept as token text.
struct DialogSample {
  TokenSeq context;
  std::vector<TokenSeq> candidates;
  Label label = Label::nota();

  std::size_t set_size() const { return candidates.size(); }
  friend bool operator==(const DialogSample&, const DialogSample&) = default;
};

bool is_nota_candidate(const TokenSeq& candidate);

enum class SplitRole { kTrain, kValidation, kTest };
std::string_view to_string(SplitRole role);

struct CorpusSplit {
  SplitRole role = SplitRole::kTrain;
  std::vector<DialogSample> samples;
};

/// Same sample with tokens mapped to vocabulary ids, truncated to the last
/// kMaxContextTokens context tokens and first kMaxResponseTokens response
/// tokens. Empty sequences become a single _PAD.
struct EncodedSample {
  IdSeq context;
  std::vector<IdSeq> candidates;
  Label label = Label::nota();
};

EncodedSample encode_sample(const DialogSample& sample, const Vocabulary& vocab);
std::vector<EncodedSample> encode_split(const CorpusSplit& split, const Vocabulary& vocab);
bool is_nota_candidate(const IdSeq& candidate);

/// How NOTA is presented to the scorer.
enum class NotaMode {
  kDirect,     ///< _NOTA is planted as a literal candidate in every sample.
  kThreshold,  ///< No _NOTA candidate; sets shrink by one.
};
std::string_view to_string(NotaMode mode);
NotaMode parse_nota_mode(std::string_view text);

/// Relabels round(nota_fraction * n) seeded-random samples as NOTA.
/// Direct mode: the ground truth of a NOTA sample (or the first distractor of
/// any other sample) is replaced by [_NOTA]. Threshold mode: that candidate is
/// removed instead, leaving x - 1 candidates.
CorpusSplit make_nota_eval_set(const CorpusSplit& split, NotaMode mode, double nota_fraction,
                               std::uint64_t seed);

/// Appends target_x - x distractors to every sample, drawn without replacement
/// from other samples' candidates. Never draws text equal to any candidate
/// already in the set. Labels keep their index.
CorpusSplit expand_candidates(const CorpusSplit& split, std::size_t target_x, std::uint64_t seed);

/// Keeps the ground truth plus the first target_x - 1 distractors in stored
/// order.
CorpusSplit truncate_candidates(const CorpusSplit& split, std::size_t target_x);

/// Dispatches to expand_candidates or truncate_candidates.
CorpusSplit resize_candidates(const CorpusSplit& split, std::size_t target_x, std::uint64_t seed);

struct SyntheticConfig {
  std::size_t n_samples = 1000;
  std::size_t x = 10;
  /// Scale of the word inventory: vocab_size / 200 topics (4..16) and
  /// vocab_size / 25 fillers per side (6..400). The default gives 10 topics
  /// and 80 + 80 fillers.
  std::size_t vocab_size = 2000;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  CorpusSplit train;
  CorpusSplit validation;
  CorpusSplit test;
};

/// Keyword-matching corpus: every context carries a topic keyword that only
/// its ground-truth response repeats; distractors carry other keywords.
/// Contexts have 2-5 fillers, responses 1-3. Train/validation/test are split
/// 80/10/10.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

enum class SplitFormat { kJsonl, kTsvBinary, kTsvRanking };
std::string_view to_string(SplitFormat format);
SplitFormat parse_split_format(std::string_view text);

/// Parses a split. tsv-ranking puts the ground truth in column 2 and the
/// candidates are shuffled with `seed` after loading.
CorpusSplit load_split(const std::filesystem::path& path, SplitFormat format, SplitRole role,
                       std::uint64_t seed = 0);
/// Only jsonl is writable.
void save_split(const CorpusSplit& split, const std::filesystem::path& path,
                SplitFormat format = SplitFormat::kJsonl);

std::string sample_to_jsonl(const DialogSample& sample);
DialogSample sample_from_jsonl(std::string_view line);

}  // namespace notakit
