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

#include "notakit/nota.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "notakit/metrics.hpp"
#include "notakit/training.hpp"

namespace notakit {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::size_t argmax_of(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

DropoutSummary summarize(std::span<const ScoreVector> passes, ScoreKind kind) {
  const std::size_t x = passes.front().size();
  const double n = static_cast<double>(passes.size());
  DropoutSummary s;
  s.mean.assign(x, 0.0);
  s.variance.assign(x, 0.0);
  for (const auto& p : passes) {
    const auto& v = p.scores(kind);
    for (std::size_t i = 0; i < x; ++i) s.mean[i] += v[i];
  }
  for (double& m : s.mean) m /= n;
  for (const auto& p : passes) {
    const auto& v = p.scores(kind);
    for (std::size_t i = 0; i < x; ++i) {
      const double d = v[i] - s.mean[i];
      s.variance[i] += d * d;
    }
  }
  for (double& var : s.variance) var /= n;
  return s;
}

}  // namespace

std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::kDirect: return "direct";
    case DetectorKind::kThreshold: return "threshold";
    case DetectorKind::kLogReg: return "logreg";
    case DetectorKind::kDropout: return "dropout";
  }
  return "unknown";
}

DetectorKind parse_detector_kind(std::string_view text) {
  if (text == "direct") return DetectorKind::kDirect;
  if (text == "threshold") return DetectorKind::kThreshold;
  if (text == "logreg") return DetectorKind::kLogReg;
  if (text == "dropout") return DetectorKind::kDropout;
  throw Error("unknown detector '" + std::string(text) + "' (expected direct|threshold|logreg|dropout)");
}

std::string_view to_string(VarianceRule rule) {
  switch (rule) {
    case VarianceRule::kWinner: return "winner";
    case VarianceRule::kMean: return "mean";
    case VarianceRule::kMax: return "max";
  }
  return "unknown";
}

VarianceRule parse_variance_rule(std::string_view text) {
  if (text == "winner") return VarianceRule::kWinner;
  if (text == "mean") return VarianceRule::kMean;
  if (text == "max") return VarianceRule::kMax;
  throw Error("unknown variance rule '" + std::string(text) + "' (expected winner|mean|max)");
}

std::vector<std::string> DetectorConfig::violations() const {
  std::vector<std::string> v;
  if (!std::isfinite(threshold)) v.push_back("detector threshold must be finite");
  if (kind == DetectorKind::kDropout && n_passes < 2) v.push_back("dropout n_passes must be >= 2");
  return v;
}

std::string DetectorConfig::label() const {
  std::string out = std::string(to_string(kind)) + "-" + std::string(to_string(score_kind));
  if (kind == DetectorKind::kThreshold || kind == DetectorKind::kDropout) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "@%g", threshold);
    out += buf;
  }
  return out;
}

double default_threshold(DetectorKind kind, ScoreKind score_kind) {
  const bool logits = score_kind == ScoreKind::kLogits;
  if (kind == DetectorKind::kDropout) return logits ? 0.1 : 0.001;
  if (kind == DetectorKind::kLogReg) return 0.5;
  return logits ? 0.5 : 0.55;
}

// ---------------------------------------------------------------------------
// Direct and threshold

Decision direct_predict(const ScoreVector& sv, ScoreKind kind) {
  const auto nota = sv.nota_index();
  if (!nota) throw Error("direct_predict: no _NOTA candidate in the score set");
  const auto& scores = sv.scores(kind);
  double best_real = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!sv.is_nota[i]) best_real = std::max(best_real, scores[i]);
  }
  if (!std::isfinite(best_real)) best_real = scores[*nota];
  const std::size_t winner = sv.argmax();
  if (winner == *nota) return Decision::nota(best_real, -best_real);
  return Decision::pick(winner, best_real, -best_real);
}

Decision threshold_predict(const ScoreVector& sv, double theta, ScoreKind kind) {
  if (sv.size() == 0) throw Error("threshold_predict: empty score set");
  if (sv.nota_index()) {
    throw Error("threshold_predict: score set contains a _NOTA candidate (direct-mode data)");
  }
  const auto& scores = sv.scores(kind);
  const std::size_t best = argmax_of(scores);
  const double m = scores[best];
  if (m < theta) return Decision::nota(m, -m);
  return Decision::pick(best, m, -m);
}

// ---------------------------------------------------------------------------
// Logistic regression

std::vector<double> logreg_features(const ScoreVector& sv, const FeatureSpec& spec) {
  if (sv.size() != spec.x) {
    throw Error("logreg_features: score set has " + std::to_string(sv.size()) +
                " candidates, model expects " + std::to_string(spec.x));
  }
  if (spec.includes_variance) throw Error("logreg_features: model expects dropout statistics");
  std::vector<double> phi = sv.scores(spec.kind);
  std::sort(phi.begin(), phi.end(), std::greater<>());
  return phi;
}

std::vector<double> logreg_features(const DropoutSummary& summary, const FeatureSpec& spec) {
  if (summary.mean.size() != spec.x || summary.variance.size() != spec.x) {
    throw Error("logreg_features: summary has " + std::to_string(summary.mean.size()) +
                " candidates, model expects " + std::to_string(spec.x));
  }
  std::vector<std::size_t> order(spec.x);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return summary.mean[a] > summary.mean[b]; });
  std::vector<double> phi;
  phi.reserve(spec.feature_count());
  for (std::size_t i : order) phi.push_back(summary.mean[i]);
  if (spec.includes_variance) {
    for (std::size_t i : order) phi.push_back(summary.variance[i]);
  }
  return phi;
}

double LogRegModel::probability(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw Error("logreg: " + std::to_string(features.size()) + " features, model has " +
                std::to_string(weights.size()) + " weights");
  }
  double z = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) z += weights[k] * features[k];
  return sigmoid(z);
}

LogRegModel logreg_train(const std::vector<std::vector<double>>& features,
                         const std::vector<bool>& is_nota, const FeatureSpec& spec,
                         const LogRegTrainConfig& config) {
  if (features.size() != is_nota.size()) throw Error("logreg_train: feature/label count mismatch");
  const std::size_t n = features.size();
  const std::size_t d = spec.feature_count();
  const auto nota_count = static_cast<std::size_t>(std::count(is_nota.begin(), is_nota.end(), true));
  if (nota_count < 2 || n - nota_count < 2) {
    throw Error("logreg_train: need at least 2 examples of each class (got " +
                std::to_string(nota_count) + " NOTA, " + std::to_string(n - nota_count) + " other)");
  }
  for (const auto& row : features) {
    if (row.size() != d) throw Error("logreg_train: feature row does not match the feature spec");
  }

  // Standardize each column; constant columns keep unit scale.
  std::vector<double> mu(d, 0.0), sigma(d, 0.0);
  for (const auto& row : features) {
    for (std::size_t k = 0; k < d; ++k) mu[k] += row[k];
  }
  for (double& m : mu) m /= static_cast<double>(n);
  for (const auto& row : features) {
    for (std::size_t k = 0; k < d; ++k) sigma[k] += (row[k] - mu[k]) * (row[k] - mu[k]);
  }
  for (double& s : sigma) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) z[i][k] = (features[i][k] - mu[k]) / sigma[k];
  }

  // theta = [w_0 .. w_{d-1}, b]
  std::vector<double> theta(d + 1, 0.0), grad(d + 1);
  AdamState state(d + 1);
  const AdamConfig adam{config.learning_rate, 0.9, 0.999, 1e-8};
  double previous = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  double loss = 0.0;
  for (; steps < config.max_steps; ++steps) {
    std::fill(grad.begin(), grad.end(), 0.0);
    loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double logit = theta[d];
      for (std::size_t k = 0; k < d; ++k) logit += theta[k] * z[i][k];
      const double y = is_nota[i] ? 0.0 : 1.0;
      loss += log1p_exp(logit) - y * logit;
      const double r = sigmoid(logit) - y;
      for (std::size_t k = 0; k < d; ++k) grad[k] += r * z[i][k];
      grad[d] += r;
    }
    loss /= static_cast<double>(n);
    for (double& g : grad) g /= static_cast<double>(n);
    if (steps > 0 && std::abs(previous - loss) < config.tolerance) break;
    previous = loss;
    adam_step(theta, grad, state, adam);
  }

  LogRegModel model;
  model.spec = spec;
  model.weights.resize(d);
  model.bias = theta[d];
  for (std::size_t k = 0; k < d; ++k) {
    model.weights[k] = theta[k] / sigma[k];
    model.bias -= theta[k] * mu[k] / sigma[k];
  }
  model.metadata["seed"] = config.seed;
  model.metadata["steps"] = steps;
  model.metadata["final_loss"] = loss;
  model.metadata["train_examples"] = n;
  return model;
}

Decision logreg_predict(const LogRegModel& model, std::span<const double> features,
                        std::size_t best_candidate) {
  if (features.size() != model.spec.feature_count()) {
    throw Error("logreg_predict: feature vector does not match the model's feature spec");
  }
  const double p = model.probability(features);
  if (p < 0.5) return Decision::nota(p, 1.0 - p);
  return Decision::pick(best_candidate, p, 1.0 - p);
}

Decision logreg_predict(const LogRegModel& model, const ScoreVector& sv) {
  const auto phi = logreg_features(sv, model.spec);
  return logreg_predict(model, phi, sv.argmax());
}

void save_logreg(const LogRegModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "notakit-logreg";
  j["version"] = 1;
  j["feature_spec"] = {{"score_kind", to_string(model.spec.kind)},
                       {"x", model.spec.x},
                       {"includes_variance", model.spec.includes_variance}};
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["metadata"] = model.metadata;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write LogReg model " + path.string());
  out << j.dump(2) << '\n';
}

LogRegModel load_logreg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read LogReg model " + path.string());
  try {
    auto j = nlohmann::ordered_json::parse(in);
    if (j.value("format", "") != "notakit-logreg") throw Error("not a notakit LogReg model");
    LogRegModel m;
    const auto& fs = j.at("feature_spec");
    m.spec.kind = parse_score_kind(fs.at("score_kind").get<std::string>());
    m.spec.x = fs.at("x").get<std::size_t>();
    m.spec.includes_variance = fs.at("includes_variance").get<bool>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (j.contains("metadata")) m.metadata = j["metadata"];
    if (m.weights.size() != m.spec.feature_count()) throw Error("weight count does not match feature spec");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed LogReg model: " + e.what());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dropout variance

DropoutStats collect_dropout_stats(std::span<const ScoreVector> passes) {
  if (passes.empty()) throw Error("dropout: no passes");
  const std::size_t x = passes.front().size();
  for (const auto& p : passes) {
    if (p.size() != x) throw Error("dropout: passes disagree on the candidate count");
  }
  DropoutStats stats;
  stats.votes.assign(x, 0);
  for (const auto& p : passes) ++stats.votes[p.argmax()];
  stats.logits = summarize(passes, ScoreKind::kLogits);
  stats.softmax = summarize(passes, ScoreKind::kSoftmax);
  return stats;
}

std::size_t majority_winner(const DropoutStats& stats, ScoreKind kind) {
  const auto& mean = stats.summary(kind).mean;
  std::size_t best = 0;
  for (std::size_t i = 1; i < stats.votes.size(); ++i) {
    if (stats.votes[i] > stats.votes[best] ||
        (stats.votes[i] == stats.votes[best] && mean[i] > mean[best])) {
      best = i;
    }
  }
  return best;
}

double rule_variance(const DropoutSummary& summary, std::size_t winner, VarianceRule rule) {
  switch (rule) {
    case VarianceRule::kWinner:
      return summary.variance.at(winner);
    case VarianceRule::kMean: {
      double total = 0.0;
      for (double v : summary.variance) total += v;
      return total / static_cast<double>(summary.variance.size());
    }
    case VarianceRule::kMax:
      return *std::max_element(summary.variance.begin(), summary.variance.end());
  }
  return 0.0;
}

Decision dropout_decide(const DropoutStats& stats, const DropoutConfig& config) {
  const std::size_t winner = majority_winner(stats, config.kind);
  const double var = rule_variance(stats.summary(config.kind), winner, config.rule);
  if (var > config.variance_threshold) return Decision::nota(var, var);
  return Decision::pick(winner, var, var);
}

DropoutResult dropout_predict(const EncoderParams& params, const EncodedSample& sample,
                              const DropoutConfig& config) {
  if (config.n_passes < 2) throw Error("dropout_predict: n_passes must be >= 2");
  std::vector<ScoreVector> passes;
  passes.reserve(config.n_passes);
  for (std::size_t p = 0; p < config.n_passes; ++p) {
    passes.push_back(forward_sample(params, sample, DropoutSpec{config.keep, config.seed + p}));
  }
  DropoutResult result;
  result.stats = collect_dropout_stats(passes);
  result.decision = dropout_decide(result.stats, config);
  return result;
}

// ---------------------------------------------------------------------------
// Threshold sweeps

SweepResult sweep_threshold(std::span<const double> values, std::span<const Label> labels,
                            std::span<const double> grid, bool nota_when_below) {
  if (grid.empty()) throw Error("sweep_threshold: empty grid");
  if (values.size() != labels.size()) throw Error("sweep_threshold: value/label count mismatch");
  SweepResult result;
  bool have_best = false;
  for (double theta : grid) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const bool nota = nota_when_below ? values[i] < theta : values[i] > theta;
      if (labels[i].is_nota()) {
        nota ? ++c.tp : ++c.fn;
      } else {
        nota ? ++c.fp : ++c.tn;
      }
    }
    const double avg = f1_pair(c).average;
    result.curve.emplace_back(theta, avg);
    if (!have_best || avg > result.best_average_f1 ||
        (avg == result.best_average_f1 && theta < result.best_threshold)) {
      result.best_threshold = theta;
      result.best_average_f1 = avg;
      have_best = true;
    }
  }
  return result;
}

SweepResult sweep_threshold(std::span<const ScoreVector> score_sets, std::span<const Label> labels,
                            std::span<const double> grid, ScoreKind kind) {
  std::vector<double> maxima;
  maxima.reserve(score_sets.size());
  for (const auto& sv : score_sets) {
    const auto& s = sv.scores(kind);
    if (s.empty()) throw Error("sweep_threshold: empty score set");
    maxima.push_back(*std::max_element(s.begin(), s.end()));
  }
  return sweep_threshold(maxima, labels, grid, /*nota_when_below=*/true);
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw Error("make_grid: need step > 0 and hi >= lo");
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5));
  for (std::size_t k = 0; k <= n; ++k) grid.push_back(lo + step * static_cast<double>(k));
  return grid;
}

// ---------------------------------------------------------------------------
// Score dumps

std::vector<ScoredSample> score_samples(const EncoderParams& params,
                                        std::span<const EncodedSample> samples,
                                        const std::optional<DropoutConfig>& dropout) {
  std::vector<ScoredSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ScoredSample s;
    s.sample_id = i;
    s.label = samples[i].label;
    s.scores = forward_sample(params, samples[i]);
    if (dropout) s.dropout = dropout_predict(params, samples[i], *dropout).stats;
    out.push_back(std::move(s));
  }
  return out;
}

void write_score_dump(std::span<const ScoredSample> samples, std::ostream& out) {
  out << "sample_id,is_nota_label,truth_index,nota_index,score_kind,scores...\n";
  auto row = [&](const ScoredSample& s, std::string_view kind, auto&& values) {
    const auto nota = s.scores.nota_index();
    out << s.sample_id << ',' << (s.label.is_nota() ? 1 : 0) << ','
        << (s.label.is_nota() ? std::string("-1") : std::to_string(s.label.truth())) << ','
        << (nota ? std::to_string(*nota) : std::string("-1")) << ',' << kind;
    for (const auto& v : values) {
      if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::size_t>) {
        out << ',' << v;
      } else {
        out << ',' << fmt_double(v);
      }
    }
    out << '\n';
  };
  for (const auto& s : samples) {
    row(s, "logits", s.scores.logits);
    row(s, "softmax", s.scores.probs);
    if (s.dropout) {
      row(s, "votes", s.dropout->votes);
      row(s, "logits_mean", s.dropout->logits.mean);
      row(s, "logits_var", s.dropout->logits.variance);
      row(s, "softmax_mean", s.dropout->softmax.mean);
      row(s, "softmax_var", s.dropout->softmax.variance);
    }
  }
}

std::vector<ScoredSample> read_score_dump(std::istream& in, const std::string& source) {
  std::vector<ScoredSample> out;
  std::map<std::size_t, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> void {
    throw Error(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("sample_id", 0) == 0) continue;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 6) fail("expected at least 6 fields");
    try {
      const auto id = static_cast<std::size_t>(std::stoull(f[0]));
      const bool is_nota = f[1] == "1";
      const long truth = std::stol(f[2]);
      const long nota_idx = std::stol(f[3]);
      const std::string& kind = f[4];
      const std::size_t x = f.size() - 5;

      auto [it, fresh] = index.emplace(id, out.size());
      if (fresh) {
        ScoredSample s;
        s.sample_id = id;
        if (is_nota) {
          s.label = Label::nota();
        } else {
          if (truth < 0 || static_cast<std::size_t>(truth) >= x) fail("truth index out of range");
          s.label = Label::ground_truth(static_cast<std::size_t>(truth));
        }
        s.scores.is_nota.assign(x, false);
        if (nota_idx >= 0) {
          if (static_cast<std::size_t>(nota_idx) >= x) fail("nota index out of range");
          s.scores.is_nota[static_cast<std::size_t>(nota_idx)] = true;
        }
        out.push_back(std::move(s));
      }
      ScoredSample& s = out[it->second];
      if (s.scores.is_nota.size() != x) fail("inconsistent candidate count for sample " + f[0]);

      std::vector<double> values;
      values.reserve(x);
      for (std::size_t k = 5; k < f.size(); ++k) values.push_back(std::stod(f[k]));
      auto stats = [&]() -> DropoutStats& {
        if (!s.dropout) s.dropout.emplace();
        return *s.dropout;
      };
      if (kind == "logits") {
        s.scores.logits = std::move(values);
      } else if (kind == "softmax") {
        s.scores.probs = std::move(values);
      } else if (kind == "votes") {
        stats().votes.clear();
        for (double v : values) stats().votes.push_back(static_cast<std::size_t>(v));
      } else if (kind == "logits_mean") {
        stats().logits.mean = std::move(values);
      } else if (kind == "logits_var") {
        stats().logits.variance = std::move(values);
      } else if (kind == "softmax_mean") {
        stats().softmax.mean = std::move(values);
      } else if (kind == "softmax_var") {
        stats().softmax.variance = std::move(values);
      } else {
        fail("unknown score kind '" + kind + "'");
      }
    } catch (const std::invalid_argument&) {
      fail("malformed number");
    } catch (const std::out_of_range&) {
      fail("number out of range");
    }
  }
  for (const auto& s : out) {
    if (s.scores.logits.empty()) {
      throw Error(source + ": sample " + std::to_string(s.sample_id) + " has no logits row");
    }
    if (s.scores.probs.empty()) {
      throw Error(source + ": sample " + std::to_string(s.sample_id) + " has no softmax row");
    }
    if (s.dropout && (s.dropout->votes.size() != s.scores.size() ||
                      s.dropout->logits.variance.size() != s.scores.size() ||
                      s.dropout->softmax.variance.size() != s.scores.size())) {
      throw Error(source + ": sample " + std::to_string(s.sample_id) + " has incomplete dropout rows");
    }
  }
  return out;
}

}  // namespace notakit
