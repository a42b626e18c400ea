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

// Experiment lifecycle commands. Each command reads only its inputs, writes
// only under its output directory and records a manifest.json with a config
// snapshot, input/output content hashes and the derived-seed audit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "notakit/corpus.hpp"
#include "notakit/encoder.hpp"
#include "notakit/metrics.hpp"
#include "notakit/nota.hpp"
#include "notakit/training.hpp"

namespace notakit {

namespace fs = std::filesystem;

/// NOTAKIT_OUTPUT_DIR, when set and non-empty, replaces `requested`.
fs::path resolve_output_dir(const fs::path& requested);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const fs::path& path);

/// Every distinct token sequence in a split (contexts and candidates) in
/// sample order; the vocabulary is built from these.
std::vector<TokenSeq> split_texts(const CorpusSplit& split);

/// Nominal set size of a NOTA evaluation split. Threshold-layout sets (no
/// _NOTA anywhere) hold x - 1 candidates.
std::size_t nominal_set_size(const CorpusSplit& split);
std::size_t nominal_set_size(std::span<const ScoredSample> samples);

struct SynthOptions {
  SyntheticConfig corpus;
  fs::path out_dir;
};
/// Writes train.jsonl, valid.jsonl and test.jsonl.
nlohmann::ordered_json cmd_synth(const SynthOptions& options);

struct PreprocessOptions {
  fs::path train;
  fs::path validation;
  fs::path test;
  SplitFormat format = SplitFormat::kJsonl;
  std::size_t max_vocab = 10000;
  NotaMode mode = NotaMode::kDirect;
  double nota_fraction = 0.5;
  std::optional<std::size_t> target_x;
  /// Fraction of training samples that get a _NOTA candidate (direct layout),
  /// for models trained with _NOTA. 0 keeps the training split unchanged.
  double train_nota_fraction = 0.0;
  std::optional<std::uint64_t> seed;
  fs::path out_dir;

  std::vector<std::string> violations() const;
};
/// Writes vocab.json, train.jsonl, valid.jsonl (resized, no NOTA),
/// valid_nota.jsonl and test_nota.jsonl (NOTA evaluation sets in `mode`).
nlohmann::ordered_json cmd_preprocess(const PreprocessOptions& options);

struct TrainOptions {
  fs::path data_dir;  // output of cmd_preprocess
  TrainConfig config;
  ModelProfile profile = ModelProfile::kDesk;
  fs::path out_dir;
};
/// Writes checkpoint.json and train_log.csv.
nlohmann::ordered_json cmd_train(const TrainOptions& options);

/// Inputs for scoring a split with a trained model.
struct ModelInputs {
  fs::path checkpoint;
  fs::path vocab;
  fs::path data;
};

struct ScoreOptions {
  ModelInputs model;
  /// Dropout passes to record; 0 records only the deterministic scores.
  std::size_t dropout_passes = 0;
  std::uint64_t seed = 0;
  fs::path out_dir;
};
/// Writes scores.csv.
nlohmann::ordered_json cmd_score(const ScoreOptions& options);

struct TrainLogRegOptions {
  fs::path scores;
  std::vector<ScoreKind> kinds{ScoreKind::kLogits, ScoreKind::kSoftmax};
  /// Also fit models over dropout means and variances (needs dropout rows).
  bool with_variance = false;
  LogRegTrainConfig train;
  fs::path out_dir;
};
/// One model per set size and score kind: logreg_x{X}_{kind}[_var].json.
nlohmann::ordered_json cmd_train_logreg(const TrainLogRegOptions& options);

struct EvaluateOptions {
  std::optional<ModelInputs> model;  // score a split with a checkpoint ...
  std::optional<fs::path> scores;    // ... or reuse a score dump
  DetectorConfig detector;
  std::optional<fs::path> logreg_model;
  std::uint64_t seed = 0;
  std::size_t bins = 20;
  std::string model_name = "model";
  fs::path out_dir;

  std::vector<std::string> violations() const;
};
/// Writes report.json, report.csv, roc.csv/roc.svg (when both classes are
/// present), hist.csv/hist.svg and scores.csv.
EvalReport cmd_evaluate(const EvaluateOptions& options);

struct SweepOptions {
  fs::path scores;
  DetectorKind kind = DetectorKind::kThreshold;  // threshold or dropout
  ScoreKind score_kind = ScoreKind::kLogits;
  VarianceRule rule = VarianceRule::kWinner;
  /// lo, hi, step. Defaults to 400 steps over the observed value range.
  std::optional<std::vector<double>> grid;
  fs::path out_dir;
};
/// Writes sweep.csv (threshold, average F1) and best.json.
SweepResult cmd_sweep(const SweepOptions& options);

struct ReportOptions {
  std::vector<fs::path> reports;
  fs::path out_dir;
};
/// Writes table.csv, plus trend.csv/trend.svg when two or more set sizes are
/// present and appendix.csv for detectors evaluated at exactly two sizes.
nlohmann::ordered_json cmd_report(const ReportOptions& options);

/// Detector entry of an experiment. An absent threshold is tuned on the
/// validation split by average F1.
struct ExperimentDetector {
  DetectorKind kind = DetectorKind::kDirect;
  ScoreKind score_kind = ScoreKind::kLogits;
  std::optional<double> threshold;
  std::size_t n_passes = 20;
  VarianceRule rule = VarianceRule::kWinner;
};

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  fs::path output_dir;
  ModelProfile profile = ModelProfile::kDesk;

  // Exactly one corpus source.
  std::optional<SyntheticConfig> synthetic;
  fs::path train_path;
  fs::path validation_path;
  fs::path test_path;
  SplitFormat format = SplitFormat::kJsonl;

  /// Synthetic corpora only: when > 0, every swept set size gets fresh
  /// validation and test splits of this many samples from the generator
  /// instead of resizing the 10% splits.
  std::size_t evaluation_samples = 0;
  std::size_t max_vocab = 10000;
  double nota_fraction = 0.5;
  TrainConfig train;
  std::vector<std::size_t> x_sweep{10};
  std::vector<ExperimentDetector> detectors;
  std::size_t bins = 20;

  /// Every problem found, including missing input files.
  std::vector<std::string> violations() const;
};

/// Unknown keys and type errors are reported together as a ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::ordered_json experiment_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment(const fs::path& path);

struct ExperimentResult {
  TrainResult training;
  std::vector<EvalReport> reports;
};

/// Full pipeline: corpus, vocabulary, training, per-size NOTA sets, detector
/// tuning on validation, test reports and the merged table/trend.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Machine-readable error body for the CLI.
nlohmann::ordered_json error_json(const std::exception& error);

}  // namespace notakit
