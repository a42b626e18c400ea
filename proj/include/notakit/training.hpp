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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "notakit/corpus.hpp"
#include "notakit/encoder.hpp"

namespace notakit {

enum class Objective {
  kBinary,     ///< sigmoid + BCE on (context, response, label) pairs
  kSelection,  ///< softmax + NLL over the candidate set
  kDropout,    ///< selection with inverted dropout on both encoder outputs
};
std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 0.005;
  double clip_norm = 5.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  double dropout_keep = 0.5;
  Objective objective = Objective::kSelection;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Every violated constraint, empty when valid.
  std::vector<std::string> violations() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

void to_json(nlohmann::json& j, const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& config);

/// -log softmax(logits)[truth], with max subtraction.
double selection_loss(std::span<const double> logits, std::size_t truth_index);
/// Binary cross-entropy of sigmoid(logit) against label in {0, 1}.
double binary_loss(double logit, int label);

/// Mean loss of one batch under `objective`. Binary samples contribute one
/// BCE term per candidate (label 1 for the ground truth, 0 otherwise).
double sample_loss(const ScoreVector& sv, const Label& label, Objective objective);

/// Gradient buffers share EncoderParams' layout.
using GradientSet = EncoderParams;

struct BackwardResult {
  GradientSet gradients;
  double loss = 0.0;
};

/// Analytic gradients of the mean batch loss. With the dropout objective,
/// masks come from `dropout_seed` exactly as in forward_sample. Throws when
/// any gradient is not finite.
BackwardResult backward(const EncoderParams& params, std::span<const EncodedSample> batch,
                        Objective objective, double dropout_keep = 1.0,
                        std::uint64_t dropout_seed = 0);

/// Global L2 norm over every entry.
double global_norm(std::span<const double> values);

/// Scales `grads` by max_norm / norm when the norm exceeds max_norm.
/// Returns the pre-clip norm.
double clip_gradients(std::span<double> grads, double max_norm);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

/// Pair-format training data: for every sample, its positive
/// (context, ground truth) plus one negative (context, a candidate of another
/// sample) drawn with `seed`. Positives carry GroundTruth(0), negatives NOTA.
std::vector<EncodedSample> make_binary_pairs(std::span<const EncodedSample> samples,
                                             std::uint64_t seed);

/// Fraction of ground-truth samples whose top logit is the ground truth.
/// Samples labelled NOTA are skipped; returns nullopt if none remain.
std::optional<double> recall_at_1(const EncoderParams& params, std::span<const EncodedSample> samples);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_recall = 0.0;
  double wall_time_sec = 0.0;
};

struct TrainResult {
  EncoderParams best;
  std::size_t best_epoch = 0;
  double best_validation_recall = 0.0;
  std::vector<EpochLog> log;
};

/// Runs `config.epochs` epochs of clipped Adam. Epoch 0 is the
/// initialization. The returned best checkpoint maximizes validation R@1;
/// ties keep the earliest epoch.
TrainResult train(const TrainConfig& config, const EncoderDims& dims,
                  std::span<const EncodedSample> train_set,
                  std::span<const EncodedSample> validation_set,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

void write_train_log_csv(const std::vector<EpochLog>& log, std::ostream& out);

}  // namespace notakit
