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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace notakit {

namespace {

double log1p_exp(double x) {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// The candidate the objective pushes up: the ground truth, or the _NOTA
/// candidate of a NOTA-labelled sample that has one.
std::optional<std::size_t> target_index(const EncodedSample& sample) {
  if (!sample.label.is_nota()) {
    const std::size_t t = sample.label.truth();
    if (t >= sample.candidates.size()) throw Error("label index out of range");
    return t;
  }
  for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
    if (is_nota_candidate(sample.candidates[i])) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> target_index(const ScoreVector& sv, const Label& label) {
  if (!label.is_nota()) return label.truth();
  return sv.nota_index();
}

}  // namespace

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kBinary: return "binary";
    case Objective::kSelection: return "selection";
    case Objective::kDropout: return "dropout";
  }
  return "unknown";
}

Objective parse_objective(std::string_view text) {
  if (text == "binary") return Objective::kBinary;
  if (text == "selection") return Objective::kSelection;
  if (text == "dropout") return Objective::kDropout;
  throw Error("unknown objective '" + std::string(text) + "' (expected binary|selection|dropout)");
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (!(learning_rate > 0.0)) v.push_back("learning_rate must be > 0");
  if (!(clip_norm > 0.0)) v.push_back("clip_norm must be > 0");
  if (batch_size < 1) v.push_back("batch_size must be >= 1");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) v.push_back("dropout_keep must be in (0, 1]");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) v.push_back("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) v.push_back("adam_beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) v.push_back("adam_epsilon must be > 0");
  return v;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm},
                     {"batch_size", c.batch_size},       {"epochs", c.epochs},
                     {"dropout_keep", c.dropout_keep},   {"objective", to_string(c.objective)},
                     {"seed", c.seed},                   {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  std::vector<std::string> violations;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "dropout_keep") c.dropout_keep = value.get<double>();
      else if (key == "objective") c.objective = parse_objective(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
      else violations.push_back("train: unknown key '" + key + "'");
    } catch (const std::exception& e) {
      violations.push_back("train." + key + ": " + e.what());
    }
  }
  if (!violations.empty()) throw ConfigError(std::move(violations));
}

// ---------------------------------------------------------------------------
// Losses

double selection_loss(std::span<const double> logits, std::size_t truth_index) {
  if (truth_index >= logits.size()) throw Error("selection_loss: truth index out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - m);
  return m + std::log(total) - logits[truth_index];
}

double binary_loss(double logit, int label) {
  if (label != 0 && label != 1) throw Error("binary_loss: label must be 0 or 1");
  // -[y log s(l) + (1-y) log(1 - s(l))] = log(1 + e^l) - y l
  return log1p_exp(logit) - (label == 1 ? logit : 0.0);
}

double sample_loss(const ScoreVector& sv, const Label& label, Objective objective) {
  const auto target = target_index(sv, label);
  if (objective == Objective::kBinary) {
    double loss = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
      loss += binary_loss(sv.logits[i], target && *target == i ? 1 : 0);
    }
    return loss;
  }
  if (!target) throw Error("selection objective needs a ground-truth or _NOTA target");
  return selection_loss(sv.logits, *target);
}

// ---------------------------------------------------------------------------
// Gradients

BackwardResult backward(const EncoderParams& params, std::span<const EncodedSample> batch,
                        Objective objective, double dropout_keep, std::uint64_t dropout_seed) {
  if (batch.empty()) throw Error("backward: empty batch");
  const std::size_t H = params.dims().d_hid;
  const bool use_dropout = objective == Objective::kDropout && dropout_keep < 1.0;
  auto mask_for = [&](EncoderSide side, const IdSeq& tokens) -> std::vector<double> {
    if (!use_dropout) return {};
    return dropout_mask(H, {dropout_keep, sequence_mask_seed(dropout_seed, side, tokens)});
  };

  BackwardResult result{GradientSet(params.dims()), 0.0};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const EncodedSample& sample : batch) {
    if (sample.candidates.empty()) throw Error("backward: sample has no candidates");
    const auto target = target_index(sample);
    if (objective != Objective::kBinary && !target) {
      throw Error("backward: selection objective needs a ground-truth or _NOTA target");
    }

    const SequenceTrace ctx = encode_sequence_traced(params, EncoderSide::kContext, sample.context,
                                                     mask_for(EncoderSide::kContext, sample.context));
    std::vector<SequenceTrace> responses;
    responses.reserve(sample.candidates.size());
    std::vector<double> logits;
    logits.reserve(sample.candidates.size());
    for (const auto& cand : sample.candidates) {
      responses.push_back(encode_sequence_traced(params, EncoderSide::kResponse, cand,
                                                 mask_for(EncoderSide::kResponse, cand)));
      logits.push_back(score(ctx.output, responses.back().output));
    }

    // d(loss)/d(logit_i), already divided by the batch size.
    std::vector<double> dlogit(logits.size());
    if (objective == Objective::kBinary) {
      for (std::size_t i = 0; i < logits.size(); ++i) {
        const int y = target && *target == i ? 1 : 0;
        result.loss += binary_loss(logits[i], y) * inv_batch;
        dlogit[i] = (sigmoid(logits[i]) - y) * inv_batch;
      }
    } else {
      result.loss += selection_loss(logits, *target) * inv_batch;
      const auto probs = softmax(logits);
      for (std::size_t i = 0; i < logits.size(); ++i) {
        dlogit[i] = (probs[i] - (i == *target ? 1.0 : 0.0)) * inv_batch;
      }
    }

    std::vector<double> dctx(H, 0.0), dresp(H);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const auto& r = responses[i].output;
      for (std::size_t j = 0; j < H; ++j) {
        dctx[j] += dlogit[i] * r[j];
        dresp[j] = dlogit[i] * ctx.output[j];
      }
      backprop_sequence(params, responses[i], dresp, result.gradients);
    }
    backprop_sequence(params, ctx, dctx, result.gradients);
  }

  if (!std::isfinite(result.loss) || !result.gradients.all_finite()) {
    throw Error("backward: non-finite loss or gradient (loss = " + std::to_string(result.loss) + ")");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Optimizer

double global_norm(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

double clip_gradients(std::span<double> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size() ||
      grads.size() != params.size()) {
    throw Error("adam_step: state/gradient shape does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * g;
    state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<EncodedSample> make_binary_pairs(std::span<const EncodedSample> samples,
                                             std::uint64_t seed) {
  if (samples.size() < 2) throw Error("make_binary_pairs: need at least 2 samples");
  Rng rng(derive_seed(seed, "binary-negatives"));
  std::vector<EncodedSample> pairs;
  pairs.reserve(2 * samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const EncodedSample& s = samples[i];
    const auto target = target_index(s);
    if (!target) continue;
    const IdSeq& positive = s.candidates[*target];
    pairs.push_back({s.context, {positive}, Label::ground_truth(0)});

    const IdSeq* negative = nullptr;
    for (int attempt = 0; attempt < 16 && negative == nullptr; ++attempt) {
      std::size_t j = rng.below(samples.size() - 1);
      if (j >= i) ++j;
      const auto& other = samples[j].candidates;
      const IdSeq& pick = other[rng.below(other.size())];
      if (pick != positive) negative = &pick;
    }
    if (negative != nullptr) pairs.push_back({s.context, {*negative}, Label::nota()});
  }
  return pairs;
}

std::optional<double> recall_at_1(const EncoderParams& params, std::span<const EncodedSample> samples) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& s : samples) {
    if (s.label.is_nota()) continue;
    ++total;
    if (forward_sample(params, s).argmax() == s.label.truth()) ++hits;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(total);
}

TrainResult train(const TrainConfig& config, const EncoderDims& dims,
                  std::span<const EncodedSample> train_set,
                  std::span<const EncodedSample> validation_set,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (auto v = config.violations(); !v.empty()) throw ConfigError(std::move(v));
  if (train_set.empty()) throw Error("train: training split is empty");
  if (validation_set.empty()) throw Error("train: validation split is empty");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  EncoderParams params = EncoderParams::random_init(dims, derive_seed(config.seed, "init"));
  AdamState adam(params.parameter_count());
  const AdamConfig adam_config = config.adam();

  auto evaluate_recall = [&](const EncoderParams& p) {
    return recall_at_1(p, validation_set).value_or(0.0);
  };

  TrainResult result;
  {
    double loss = 0.0;
    std::size_t n = 0;
    for (const auto& s : train_set) {
      if (config.objective != Objective::kBinary && !target_index(s)) continue;
      loss += sample_loss(forward_sample(params, s), s.label, config.objective);
      ++n;
    }
    EpochLog row{0, n ? loss / static_cast<double>(n) : 0.0, evaluate_recall(params), elapsed()};
    result.log.push_back(row);
    result.best = params;
    result.best_epoch = 0;
    result.best_validation_recall = row.validation_recall;
    if (on_epoch) on_epoch(row);
  }

  std::vector<EncodedSample> epoch_data;
  std::vector<EncodedSample> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::span<const EncodedSample> data = train_set;
    if (config.objective == Objective::kBinary) {
      epoch_data = make_binary_pairs(train_set, derive_seed(config.seed, "pairs", epoch));
      data = epoch_data;
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(derive_seed(config.seed, "epoch-order", epoch));
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    const std::size_t n_batches = (order.size() + config.batch_size - 1) / config.batch_size;
    for (std::size_t b = 0; b < n_batches; ++b) {
      batch.clear();
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(order.size(), lo + config.batch_size);
      for (std::size_t k = lo; k < hi; ++k) batch.push_back(data[order[k]]);

      const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout", epoch * 1000003ULL + b);
      BackwardResult step;
      try {
        step = backward(params, batch, config.objective, config.dropout_keep, dropout_seed);
      } catch (const Error& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(b) + ": " + e.what());
      }
      clip_gradients(step.gradients.values(), config.clip_norm);
      adam_step(params.values(), step.gradients.values(), adam, adam_config);
      if (!params.all_finite()) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(b) + ": non-finite parameters");
      }
      loss_sum += step.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EpochLog row{epoch, loss_sum / static_cast<double>(seen), evaluate_recall(params), elapsed()};
    result.log.push_back(row);
    if (row.validation_recall > result.best_validation_recall) {
      result.best = params;
      result.best_epoch = epoch;
      result.best_validation_recall = row.validation_recall;
    }
    if (on_epoch) on_epoch(row);
  }
  return result;
}

void write_train_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,train_loss,val_R,wall_time\n";
  char buf[128];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.3f\n", row.epoch, row.train_loss,
                  row.validation_recall, row.wall_time_sec);
    out << buf;
  }
}

}  // namespace notakit
