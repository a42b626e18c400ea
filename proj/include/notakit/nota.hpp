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

// NOTA detectors: direct prediction with a literal _NOTA candidate, score
// thresholds, a logistic-regression meta-classifier over the whole score
// set, and dropout-variance rejection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "notakit/corpus.hpp"
#include "notakit/decision.hpp"
#include "notakit/encoder.hpp"

namespace notakit {

enum class DetectorKind { kDirect, kThreshold, kLogReg, kDropout };
std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view text);

/// Which variance the dropout rule thresholds.
enum class VarianceRule {
  kWinner,  ///< variance of the majority-vote candidate
  kMean,    ///< mean variance over candidates
  kMax,     ///< largest per-candidate variance
};
std::string_view to_string(VarianceRule rule);
VarianceRule parse_variance_rule(std::string_view text);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::kDirect;
  ScoreKind score_kind = ScoreKind::kLogits;
  double threshold = 0.5;
  std::size_t n_passes = 20;
  VarianceRule variance_rule = VarianceRule::kWinner;

  std::vector<std::string> violations() const;
  /// e.g. "threshold-logits@0.5"
  std::string label() const;
};

/// Reference operating points: logits 0.5 / softmax 0.55 for thresholds,
/// logits 0.1 / softmax 0.001 for dropout variance.
double default_threshold(DetectorKind kind, ScoreKind score_kind);

/// Argmax over every candidate including _NOTA; ties go to the lowest index.
/// Confidence is the best non-NOTA score of `kind`.
Decision direct_predict(const ScoreVector& sv, ScoreKind kind = ScoreKind::kLogits);

/// NOTA when the top score of `kind` is strictly below theta.
Decision threshold_predict(const ScoreVector& sv, double theta, ScoreKind kind);

struct FeatureSpec {
  ScoreKind kind = ScoreKind::kLogits;
  std::size_t x = 0;
  bool includes_variance = false;

  std::size_t feature_count() const { return includes_variance ? 2 * x : x; }
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Per-candidate statistics of repeated dropout passes.
struct DropoutSummary {
  std::vector<double> mean;
  std::vector<double> variance;  // population variance
};

/// Scores of `spec.kind` sorted descending.
std::vector<double> logreg_features(const ScoreVector& sv, const FeatureSpec& spec);
/// Means sorted descending, followed by the variances in the same order.
/// Without includes_variance only the sorted means are returned.
std::vector<double> logreg_features(const DropoutSummary& summary, const FeatureSpec& spec);

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  FeatureSpec spec;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  /// Probability that the ground truth is present.
  double probability(std::span<const double> features) const;
};

struct LogRegTrainConfig {
  double learning_rate = 0.01;
  std::size_t max_steps = 2000;
  double tolerance = 1e-7;
  std::uint64_t seed = 0;
};

/// Full-batch Adam on mean binary cross-entropy (target 1 = ground truth
/// present). Features are standardized during fitting and the scaling is
/// folded back into the returned weights.
LogRegModel logreg_train(const std::vector<std::vector<double>>& features,
                         const std::vector<bool>& is_nota, const FeatureSpec& spec,
                         const LogRegTrainConfig& config = {});

/// NOTA when the model probability is below 0.5, otherwise `best_candidate`.
Decision logreg_predict(const LogRegModel& model, std::span<const double> features,
                        std::size_t best_candidate);
Decision logreg_predict(const LogRegModel& model, const ScoreVector& sv);

void save_logreg(const LogRegModel& model, const std::filesystem::path& path);
LogRegModel load_logreg(const std::filesystem::path& path);

struct DropoutConfig {
  std::size_t n_passes = 20;
  double keep = 0.5;
  std::uint64_t seed = 0;
  double variance_threshold = 0.1;
  ScoreKind kind = ScoreKind::kLogits;
  VarianceRule rule = VarianceRule::kWinner;
};

/// Everything recorded from repeated dropout passes over one sample.
struct DropoutStats {
  std::vector<std::size_t> votes;  // per-candidate count of pass argmaxes
  DropoutSummary logits;
  DropoutSummary softmax;
  const DropoutSummary& summary(ScoreKind kind) const {
    return kind == ScoreKind::kLogits ? logits : softmax;
  }
};

DropoutStats collect_dropout_stats(std::span<const ScoreVector> passes);

/// Most-voted candidate; ties go to the higher mean score of `kind`, then
/// to the lower index.
std::size_t majority_winner(const DropoutStats& stats, ScoreKind kind);

/// Majority vote plus variance-threshold rejection: NOTA when the rule's
/// variance exceeds config.variance_threshold.
Decision dropout_decide(const DropoutStats& stats, const DropoutConfig& config);

struct DropoutResult {
  Decision decision;
  DropoutStats stats;
};

/// Runs config.n_passes forward passes with dropout active; pass p uses
/// seed config.seed + p.
DropoutResult dropout_predict(const EncoderParams& params, const EncodedSample& sample,
                              const DropoutConfig& config);

/// The variance a rule thresholds.
double rule_variance(const DropoutSummary& summary, std::size_t winner, VarianceRule rule);

struct SweepResult {
  double best_threshold = 0.0;
  double best_average_f1 = 0.0;
  std::vector<std::pair<double, double>> curve;  // (threshold, average F1)
};

/// Grid search of a scalar rule. A sample is called NOTA when its value is
/// below the threshold (`nota_when_below`) or above it otherwise. Ties in
/// average F1 keep the smallest threshold.
SweepResult sweep_threshold(std::span<const double> values, std::span<const Label> labels,
                            std::span<const double> grid, bool nota_when_below);

/// Threshold detector sweep over max scores of `kind`.
SweepResult sweep_threshold(std::span<const ScoreVector> score_sets, std::span<const Label> labels,
                            std::span<const double> grid, ScoreKind kind);

/// lo, lo + step, ... up to and including hi (within half a step).
std::vector<double> make_grid(double lo, double hi, double step);

/// One evaluated sample with everything detectors need offline.
struct ScoredSample {
  std::size_t sample_id = 0;
  Label label = Label::nota();
  ScoreVector scores;
  std::optional<DropoutStats> dropout;
};

/// Deterministic forward passes (and dropout passes when configured) over a
/// split.
std::vector<ScoredSample> score_samples(const EncoderParams& params,
                                        std::span<const EncodedSample> samples,
                                        const std::optional<DropoutConfig>& dropout = std::nullopt);

/// CSV with rows: sample_id, is_nota_label, truth_index, nota_index,
/// score_kind, s_1..s_x in original candidate order. Dropout statistics use
/// kinds votes, logits_mean, logits_var, softmax_mean, softmax_var.
void write_score_dump(std::span<const ScoredSample> samples, std::ostream& out);
std::vector<ScoredSample> read_score_dump(std::istream& in, const std::string& source = "<dump>");

}  // namespace notakit
