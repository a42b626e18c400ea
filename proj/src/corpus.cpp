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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace notakit {

namespace {

using ojson = nlohmann::ordered_json;

bool is_reserved(std::string_view token) {
  return token == kPadToken || token == kUnkToken || token == kNotaToken;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw Error(path.string() + ":" + std::to_string(line) + ": " + what);
}

IdSeq encode_tokens(const TokenSeq& tokens, const Vocabulary& vocab, std::size_t limit,
                    bool keep_tail) {
  IdSeq ids;
  std::size_t begin = 0;
  std::size_t end = tokens.size();
  if (tokens.size() > limit) {
    if (keep_tail) {
      begin = tokens.size() - limit;
    } else {
      end = limit;
    }
  }
  ids.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) ids.push_back(vocab.lookup(tokens[i]));
  if (ids.empty()) ids.push_back(Vocabulary::kPad);
  return ids;
}

std::size_t first_distractor(const DialogSample& sample) {
  const std::size_t truth = sample.label.truth();
  for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
    if (i != truth) return i;
  }
  throw Error("sample has no distractor to replace");
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  // The NOTA marker keeps its canonical spelling.
  for (auto& t : tokens) {
    if (t == "_nota") t = kNotaToken;
    else if (t == "_unk") t = kUnkToken;
    else if (t == "_pad") t = kPadToken;
  }
  return tokens;
}

std::string detokenize(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kPadToken), std::string(kUnkToken), std::string(kNotaToken)};
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<TokenId>(i);
}

Vocabulary Vocabulary::build(std::span<const TokenSeq> corpus, std::size_t max_vocab) {
  if (max_vocab < 1) throw Error("build_vocab: max_vocab must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& seq : corpus) {
    for (const auto& token : seq) {
      ++total;
      if (!is_reserved(token)) ++counts[token];
    }
  }
  if (total == 0) throw Error("build_vocab: corpus is empty");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);

  Vocabulary vocab;
  for (auto& [token, count] : ranked) {
    vocab.ids_.emplace(token, static_cast<TokenId>(vocab.tokens_.size()));
    vocab.tokens_.push_back(std::move(token));
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken ||
      tokens[kNota] != kNotaToken) {
    throw Error("vocabulary must start with _PAD, _UNK, _NOTA");
  }
  Vocabulary vocab;
  vocab.tokens_ = std::move(tokens);
  vocab.ids_.clear();
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    if (!vocab.ids_.emplace(vocab.tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error("vocabulary has duplicate token '" + vocab.tokens_[i] + "'");
    }
  }
  return vocab;
}

TokenId Vocabulary::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("notakit-vocab");
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  ojson j;
  j["fingerprint"] = hex64(fingerprint());
  j["tokens"] = tokens_;
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  out << j.dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read vocabulary " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  auto vocab = from_tokens(j.at("tokens").get<std::vector<std::string>>());
  if (j.contains("fingerprint") && j["fingerprint"].get<std::string>() != hex64(vocab.fingerprint())) {
    throw Error(path.string() + ": vocabulary fingerprint mismatch");
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Samples

std::size_t Label::truth() const {
  if (!truth_) throw Error("label is NOTA; no ground-truth index");
  return *truth_;
}

bool is_nota_candidate(const TokenSeq& candidate) {
  return candidate.size() == 1 && candidate[0] == kNotaToken;
}

bool is_nota_candidate(const IdSeq& candidate) {
  return candidate.size() == 1 && candidate[0] == Vocabulary::kNota;
}

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kTrain: return "train";
    case SplitRole::kValidation: return "validation";
    case SplitRole::kTest: return "test";
  }
  return "unknown";
}

EncodedSample encode_sample(const DialogSample& sample, const Vocabulary& vocab) {
  EncodedSample out;
  out.context = encode_tokens(sample.context, vocab, kMaxContextTokens, /*keep_tail=*/true);
  out.candidates.reserve(sample.candidates.size());
  for (const auto& c : sample.candidates) {
    out.candidates.push_back(encode_tokens(c, vocab, kMaxResponseTokens, /*keep_tail=*/false));
  }
  out.label = sample.label;
  return out;
}

std::vector<EncodedSample> encode_split(const CorpusSplit& split, const Vocabulary& vocab) {
  std::vector<EncodedSample> out;
  out.reserve(split.samples.size());
  for (const auto& s : split.samples) out.push_back(encode_sample(s, vocab));
  return out;
}

// ---------------------------------------------------------------------------
// NOTA evaluation sets

std::string_view to_string(NotaMode mode) {
  return mode == NotaMode::kDirect ? "direct" : "threshold";
}

NotaMode parse_nota_mode(std::string_view text) {
  if (text == "direct") return NotaMode::kDirect;
  if (text == "threshold") return NotaMode::kThreshold;
  throw Error("unknown NOTA mode '" + std::string(text) + "' (expected direct|threshold)");
}

CorpusSplit make_nota_eval_set(const CorpusSplit& split, NotaMode mode, double nota_fraction,
                               std::uint64_t seed) {
  if (!(nota_fraction >= 0.0 && nota_fraction <= 1.0)) {
    throw Error("make_nota_eval_set: nota_fraction must be in [0, 1]");
  }
  const std::size_t n = split.samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = split.samples[i];
    if (s.label.is_nota()) {
      throw Error("make_nota_eval_set: sample " + std::to_string(i) + " has no ground truth");
    }
    if (s.label.truth() >= s.candidates.size()) {
      throw Error("make_nota_eval_set: sample " + std::to_string(i) + " has an invalid label");
    }
    for (const auto& c : s.candidates) {
      if (is_nota_candidate(c)) {
        throw Error("make_nota_eval_set: sample " + std::to_string(i) +
                    " already contains a _NOTA candidate");
      }
    }
  }

  const auto n_nota = static_cast<std::size_t>(std::llround(nota_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "nota-partition"));
  rng.shuffle(order);
  std::vector<bool> make_nota(n, false);
  for (std::size_t k = 0; k < n_nota; ++k) make_nota[order[k]] = true;

  CorpusSplit out{split.role, {}};
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DialogSample s = split.samples[i];
    const std::size_t truth = s.label.truth();
    const std::size_t target = make_nota[i] ? truth : first_distractor(s);
    if (mode == NotaMode::kDirect) {
      s.candidates[target] = TokenSeq{std::string(kNotaToken)};
      s.label = make_nota[i] ? Label::nota() : Label::ground_truth(truth);
    } else {
      s.candidates.erase(s.candidates.begin() + static_cast<std::ptrdiff_t>(target));
      if (make_nota[i]) {
        s.label = Label::nota();
      } else {
        s.label = Label::ground_truth(target < truth ? truth - 1 : truth);
      }
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate set size

CorpusSplit expand_candidates(const CorpusSplit& split, std::size_t target_x, std::uint64_t seed) {
  // Unique candidate texts in first-appearance order.
  std::vector<const TokenSeq*> pool;
  std::unordered_map<std::string, std::size_t> pool_index;
  for (const auto& s : split.samples) {
    for (const auto& c : s.candidates) {
      if (is_nota_candidate(c)) continue;
      if (pool_index.emplace(detokenize(c), pool.size()).second) pool.push_back(&c);
    }
  }

  CorpusSplit out{split.role, {}};
  out.samples.reserve(split.samples.size());
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const DialogSample& src = split.samples[i];
    if (target_x < src.candidates.size()) {
      throw Error("expand_candidates: target_x " + std::to_string(target_x) +
                  " is smaller than sample " + std::to_string(i) + "'s set size " +
                  std::to_string(src.candidates.size()));
    }
    DialogSample s = src;
    const std::size_t needed = target_x - s.candidates.size();
    if (needed == 0) {
      out.samples.push_back(std::move(s));
      continue;
    }

    std::unordered_set<std::size_t> taken;
    for (const auto& c : s.candidates) {
      auto it = pool_index.find(detokenize(c));
      if (it != pool_index.end()) taken.insert(it->second);
    }
    if (pool.size() - taken.size() < needed) {
      throw Error("expand_candidates: corpus too small to supply " + std::to_string(needed) +
                  " distractors for sample " + std::to_string(i));
    }

    Rng rng(derive_seed(seed, "expand", i));
    std::vector<std::size_t> drawn;
    drawn.reserve(needed);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 64 * needed + 1024;
    while (drawn.size() < needed && attempts < max_attempts) {
      ++attempts;
      std::size_t idx = rng.below(pool.size());
      if (taken.insert(idx).second) drawn.push_back(idx);
    }
    if (drawn.size() < needed) {
      // Dense pool: enumerate what is left and take a seeded prefix.
      std::vector<std::size_t> rest;
      for (std::size_t k = 0; k < pool.size(); ++k) {
        if (!taken.count(k)) rest.push_back(k);
      }
      rng.shuffle(rest);
      rest.resize(needed - drawn.size());
      drawn.insert(drawn.end(), rest.begin(), rest.end());
    }
    for (std::size_t idx : drawn) s.candidates.push_back(*pool[idx]);
    out.samples.push_back(std::move(s));
  }
  return out;
}

CorpusSplit truncate_candidates(const CorpusSplit& split, std::size_t target_x) {
  if (target_x < 1) throw Error("truncate_candidates: target_x must be >= 1");
  CorpusSplit out{split.role, {}};
  out.samples.reserve(split.samples.size());
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const DialogSample& src = split.samples[i];
    if (target_x > src.candidates.size()) {
      throw Error("truncate_candidates: sample " + std::to_string(i) + " has only " +
                  std::to_string(src.candidates.size()) + " candidates");
    }
    DialogSample s;
    s.context = src.context;
    std::optional<std::size_t> truth = src.label.truth_opt();
    std::size_t distractors_left = truth ? target_x - 1 : target_x;
    for (std::size_t k = 0; k < src.candidates.size(); ++k) {
      if (truth && k == *truth) {
        s.label = Label::ground_truth(s.candidates.size());
        s.candidates.push_back(src.candidates[k]);
      } else if (distractors_left > 0) {
        --distractors_left;
        s.candidates.push_back(src.candidates[k]);
      }
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

CorpusSplit resize_candidates(const CorpusSplit& split, std::size_t target_x, std::uint64_t seed) {
  bool shrink = std::any_of(split.samples.begin(), split.samples.end(),
                            [&](const DialogSample& s) { return s.candidates.size() > target_x; });
  return shrink ? truncate_candidates(split, target_x) : expand_candidates(split, target_x, seed);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  std::vector<std::string> violations;
  if (config.n_samples < 10) violations.push_back("n_samples must be >= 10");
  if (config.x < 2) violations.push_back("x must be >= 2");
  if (config.vocab_size < 16) violations.push_back("vocab_size must be >= 16");
  if (!violations.empty()) throw ConfigError(std::move(violations));

  // Word inventory depends only on vocab_size, so corpora drawn with
  // different seeds share one vocabulary. The inventory is kept well below
  // vocab_size: with 1k samples, rare fillers let the encoder memorize
  // context/response pairings instead of learning the keyword rule.
  const std::size_t n_topics = std::clamp<std::size_t>(config.vocab_size / 200, 4, 16);
  const std::size_t n_ctx_fill = std::clamp<std::size_t>(config.vocab_size / 25, 6, 400);
  const std::size_t n_rsp_fill = n_ctx_fill;
  auto topic = [](std::size_t k) { return "topic" + std::to_string(k); };
  auto ctx_word = [](std::size_t k) { return "w" + std::to_string(k); };
  auto rsp_word = [](std::size_t k) { return "r" + std::to_string(k); };

  Rng rng(derive_seed(config.seed, "synthetic"));

  auto make_response = [&](std::size_t keyword) {
    const auto len = static_cast<std::size_t>(rng.between(1, 3));
    TokenSeq r;
    for (std::size_t i = 0; i < len; ++i) r.push_back(rsp_word(rng.below(n_rsp_fill)));
    r.insert(r.begin() + static_cast<std::ptrdiff_t>(rng.below(len + 1)), topic(keyword));
    return r;
  };

  std::vector<DialogSample> all;
  all.reserve(config.n_samples);
  for (std::size_t n = 0; n < config.n_samples; ++n) {
    DialogSample s;
    const std::size_t keyword = rng.below(n_topics);
    const auto ctx_len = static_cast<std::size_t>(rng.between(2, 5));
    for (std::size_t i = 0; i < ctx_len; ++i) s.context.push_back(ctx_word(rng.below(n_ctx_fill)));
    s.context.insert(s.context.begin() + static_cast<std::ptrdiff_t>(rng.below(ctx_len + 1)),
                     topic(keyword));

    const std::size_t truth = rng.below(config.x);
    std::unordered_set<std::string> seen;
    for (std::size_t c = 0; c < config.x; ++c) {
      TokenSeq response;
      do {
        std::size_t kw = keyword;
        if (c != truth) {
          kw = rng.below(n_topics - 1);
          if (kw >= keyword) ++kw;
        }
        response = make_response(kw);
      } while (!seen.insert(detokenize(response)).second);
      s.candidates.push_back(std::move(response));
    }
    s.label = Label::ground_truth(truth);
    all.push_back(std::move(s));
  }

  const std::size_t n_val = config.n_samples / 10;
  const std::size_t n_test = config.n_samples / 10;
  const std::size_t n_train = config.n_samples - n_val - n_test;
  SyntheticCorpus corpus;
  corpus.train.role = SplitRole::kTrain;
  corpus.validation.role = SplitRole::kValidation;
  corpus.test.role = SplitRole::kTest;
  auto begin = std::make_move_iterator(all.begin());
  corpus.train.samples.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  corpus.validation.samples.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                                   begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  corpus.test.samples.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val),
                             std::make_move_iterator(all.end()));
  return corpus;
}

// ---------------------------------------------------------------------------
// File formats

std::string_view to_string(SplitFormat format) {
  switch (format) {
    case SplitFormat::kJsonl: return "jsonl";
    case SplitFormat::kTsvBinary: return "tsv-binary";
    case SplitFormat::kTsvRanking: return "tsv-ranking";
  }
  return "unknown";
}

SplitFormat parse_split_format(std::string_view text) {
  if (text == "jsonl") return SplitFormat::kJsonl;
  if (text == "tsv-binary") return SplitFormat::kTsvBinary;
  if (text == "tsv-ranking") return SplitFormat::kTsvRanking;
  throw Error("unknown split format '" + std::string(text) +
              "' (expected jsonl|tsv-binary|tsv-ranking)");
}

std::string sample_to_jsonl(const DialogSample& sample) {
  ojson j;
  j["context"] = detokenize(sample.context);
  ojson cands = ojson::array();
  for (const auto& c : sample.candidates) cands.push_back(detokenize(c));
  j["candidates"] = std::move(cands);
  if (sample.label.is_nota()) {
    j["label"] = "NOTA";
  } else {
    j["label"] = sample.label.truth();
  }
  return j.dump();
}

DialogSample sample_from_jsonl(std::string_view line) {
  ojson j = ojson::parse(line);
  if (!j.is_object()) throw Error("expected a JSON object");
  if (!j.contains("context") || !j["context"].is_string()) throw Error("missing string field 'context'");
  if (!j.contains("candidates") || !j["candidates"].is_array()) {
    throw Error("missing array field 'candidates'");
  }
  if (!j.contains("label")) throw Error("missing field 'label'");

  DialogSample s;
  s.context = tokenize(j["context"].get<std::string>());
  for (const auto& c : j["candidates"]) {
    if (!c.is_string()) throw Error("candidates must be strings");
    s.candidates.push_back(tokenize(c.get<std::string>()));
  }
  const auto& label = j["label"];
  if (label.is_string()) {
    if (label.get<std::string>() != "NOTA") throw Error("label string must be \"NOTA\"");
    s.label = Label::nota();
  } else if (label.is_number_integer()) {
    auto idx = label.get<std::int64_t>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= s.candidates.size()) {
      throw Error("label index " + std::to_string(idx) + " out of range");
    }
    s.label = Label::ground_truth(static_cast<std::size_t>(idx));
  } else {
    throw Error("label must be an integer index or \"NOTA\"");
  }
  return s;
}

CorpusSplit load_split(const std::filesystem::path& path, SplitFormat format, SplitRole role,
                       std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read split " + path.string());
  CorpusSplit split{role, {}};
  Rng shuffle_rng(derive_seed(seed, "tsv-ranking-shuffle"));
  std::optional<std::size_t> ranking_width;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    switch (format) {
      case SplitFormat::kJsonl: {
        try {
          split.samples.push_back(sample_from_jsonl(line));
        } catch (const nlohmann::json::exception& e) {
          fail_at(path, line_no, std::string("malformed JSON: ") + e.what());
        } catch (const Error& e) {
          fail_at(path, line_no, e.what());
        }
        break;
      }
      case SplitFormat::kTsvBinary: {
        auto fields = split_tabs(line);
        if (fields.size() != 3) {
          fail_at(path, line_no, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
        }
        DialogSample s;
        s.context = tokenize(fields[0]);
        s.candidates.push_back(tokenize(fields[1]));
        if (fields[2] == "1") {
          s.label = Label::ground_truth(0);
        } else if (fields[2] == "0") {
          s.label = Label::nota();
        } else {
          fail_at(path, line_no, "label must be 0 or 1");
        }
        split.samples.push_back(std::move(s));
        break;
      }
      case SplitFormat::kTsvRanking: {
        auto fields = split_tabs(line);
        if (fields.size() < 3) fail_at(path, line_no, "expected a context and at least 2 candidates");
        const std::size_t width = fields.size() - 1;
        if (!ranking_width) ranking_width = width;
        if (*ranking_width != width) {
          fail_at(path, line_no, "inconsistent candidate count: expected " +
                                     std::to_string(*ranking_width) + ", got " + std::to_string(width));
        }
        DialogSample s;
        s.context = tokenize(fields[0]);
        std::vector<std::size_t> order(width);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order);
        s.candidates.resize(width);
        for (std::size_t k = 0; k < width; ++k) {
          s.candidates[k] = tokenize(fields[1 + order[k]]);
          if (order[k] == 0) s.label = Label::ground_truth(k);
        }
        split.samples.push_back(std::move(s));
        break;
      }
    }
  }
  return split;
}

void save_split(const CorpusSplit& split, const std::filesystem::path& path, SplitFormat format) {
  if (format != SplitFormat::kJsonl) {
    throw Error("save_split: only jsonl is writable (got " + std::string(to_string(format)) + ")");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write split " + path.string());
  for (const auto& s : split.samples) out << sample_to_jsonl(s) << '\n';
  if (!out) throw Error("failed writing split " + path.string());
}

}  // namespace notakit
