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

#include "notakit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace notakit {

namespace {

using ojson = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

// Collects what a command read and wrote, plus every derived seed, and
// writes manifest.json last.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), dir_(std::move(out_dir)) {
    ensure_dir(dir_);
    set_seed_audit(true);
    take_seed_audit_log();
  }
  Manifest(const Manifest&) = delete;
  Manifest& operator=(const Manifest&) = delete;
  ~Manifest() { set_seed_audit(false); }

  ojson& config() { return config_; }
  void input(const fs::path& path) { inputs_.push_back(path); }
  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return dir_ / name;
  }

  ojson finish() {
    ojson j;
    j["command"] = command_;
    j["config"] = config_;
    ojson ins = ojson::array();
    for (const auto& p : inputs_) ins.push_back({{"path", p.generic_string()}, {"fnv1a64", file_hash(p)}});
    j["inputs"] = ins;
    ojson outs = ojson::array();
    for (const auto& name : outputs_) {
      outs.push_back({{"file", name}, {"fnv1a64", file_hash(dir_ / name)}});
    }
    j["outputs"] = outs;
    j["derived_seeds"] = take_seed_audit_log();
    write_text(dir_ / "manifest.json", j.dump(2) + "\n");
    return j;
  }

 private:
  std::string command_;
  fs::path dir_;
  ojson config_ = ojson::object();
  std::vector<fs::path> inputs_;
  std::vector<std::string> outputs_;
};

void require_file(const fs::path& path, const std::string& what, std::vector<std::string>& v) {
  if (path.empty()) {
    v.push_back(what + " path is required");
  } else if (!fs::is_regular_file(path)) {
    v.push_back(what + " not found: " + path.string());
  }
}

bool has_nota_candidate(const ScoredSample& s) { return s.scores.nota_index().has_value(); }

struct LoadedModel {
  Vocabulary vocab;
  Checkpoint checkpoint;
  EncoderParams inference;  // _NOTA row substituted when never trained
};

LoadedModel load_model(const ModelInputs& in) {
  LoadedModel m;
  m.vocab = Vocabulary::load(in.vocab);
  m.checkpoint = load_checkpoint(in.checkpoint, std::nullopt, &m.vocab);
  m.inference = m.checkpoint.nota_trained ? m.checkpoint.params : m.checkpoint.params.with_nota_as_unk();
  return m;
}

std::vector<ScoredSample> read_dump_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read score dump " + path.string());
  return read_score_dump(in, path.string());
}

void write_dump_file(std::span<const ScoredSample> samples, const fs::path& path) {
  std::ostringstream out;
  write_score_dump(samples, out);
  write_text(path, out.str());
}

DropoutConfig inference_dropout(std::size_t passes, double keep, std::uint64_t seed) {
  DropoutConfig d;
  d.n_passes = passes;
  d.keep = keep;
  d.seed = derive_seed(seed, "dropout-inference");
  return d;
}

std::vector<Label> labels_of(std::span<const ScoredSample> samples) {
  std::vector<Label> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

const DropoutStats& require_dropout(const ScoredSample& s) {
  if (!s.dropout) {
    throw Error("sample " + std::to_string(s.sample_id) + " has no dropout statistics");
  }
  return *s.dropout;
}

std::vector<double> default_grid(std::span<const double> values) {
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (!(hi > lo)) return {lo};
  return make_grid(lo, hi, (hi - lo) / 400.0);
}

std::vector<double> sweep_values(std::span<const ScoredSample> samples, DetectorKind kind,
                                 ScoreKind score_kind, VarianceRule rule) {
  std::vector<double> values;
  values.reserve(samples.size());
  for (const auto& s : samples) {
    if (kind == DetectorKind::kThreshold) {
      if (has_nota_candidate(s)) throw Error("threshold sweep needs threshold-layout scores (no _NOTA)");
      const auto& v = s.scores.scores(score_kind);
      values.push_back(*std::max_element(v.begin(), v.end()));
    } else {
      const auto& stats = require_dropout(s);
      values.push_back(rule_variance(stats.summary(score_kind), majority_winner(stats, score_kind), rule));
    }
  }
  return values;
}

Decision decide(const DetectorConfig& det, const ScoredSample& s, const LogRegModel* logreg) {
  switch (det.kind) {
    case DetectorKind::kDirect:
      return direct_predict(s.scores, det.score_kind);
    case DetectorKind::kThreshold:
      return threshold_predict(s.scores, det.threshold, det.score_kind);
    case DetectorKind::kLogReg: {
      if (!logreg) throw Error("logreg detector needs a model");
      if (has_nota_candidate(s)) throw Error("logreg detector needs threshold-layout scores (no _NOTA)");
      if (logreg->spec.includes_variance) {
        const auto& stats = require_dropout(s);
        const auto phi = logreg_features(stats.summary(logreg->spec.kind), logreg->spec);
        return logreg_predict(*logreg, phi, majority_winner(stats, logreg->spec.kind));
      }
      return logreg_predict(*logreg, s.scores);
    }
    case DetectorKind::kDropout: {
      DropoutConfig cfg;
      cfg.variance_threshold = det.threshold;
      cfg.kind = det.score_kind;
      cfg.rule = det.variance_rule;
      return dropout_decide(require_dropout(s), cfg);
    }
  }
  throw Error("unknown detector");
}

std::vector<EvalRecord> evaluate_records(const DetectorConfig& det, std::span<const ScoredSample> samples,
                                         const LogRegModel* logreg) {
  std::vector<EvalRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back({s.sample_id, s.label, decide(det, s, logreg)});
  return records;
}

// report.json, report.csv, roc, histogram and score dump for one evaluation.
void write_report_files(const EvalReport& report, std::span<const ScoredSample> samples,
                        Manifest& manifest) {
  write_text(manifest.output("report.json"), report_to_json(report).dump(2) + "\n");
  write_text(manifest.output("report.csv"), report_csv_header() + "\n" + report_csv_row(report) + "\n");
  if (report.auc) {
    std::ostringstream roc_csv;
    write_roc_csv(RocCurve{report.roc, *report.auc}, roc_csv);
    write_text(manifest.output("roc.csv"), roc_csv.str());
    write_text(manifest.output("roc.svg"), roc_svg(report.roc, report.detector));
  }
  std::ostringstream hist_csv;
  write_histogram_csv(report.histogram, hist_csv);
  write_text(manifest.output("hist.csv"), hist_csv.str());
  write_text(manifest.output("hist.svg"), histogram_svg(report.histogram, report.detector));
  write_dump_file(samples, manifest.output("scores.csv"));
}

std::string without_threshold(const std::string& label) { return label.substr(0, label.find('@')); }

LogRegModel fit_logreg(std::span<const ScoredSample> samples, ScoreKind kind, bool with_variance,
                       const LogRegTrainConfig& cfg) {
  if (samples.empty()) throw Error("logreg: no samples");
  const FeatureSpec spec{kind, samples.front().scores.size(), with_variance};
  std::vector<std::vector<double>> features;
  std::vector<bool> is_nota;
  for (const auto& s : samples) {
    if (has_nota_candidate(s)) throw Error("logreg training needs threshold-layout scores (no _NOTA)");
    if (with_variance) {
      features.push_back(logreg_features(require_dropout(s).summary(kind), spec));
    } else {
      features.push_back(logreg_features(s.scores, spec));
    }
    is_nota.push_back(s.label.is_nota());
  }
  return logreg_train(features, is_nota, spec, cfg);
}

}  // namespace

// ---------------------------------------------------------------------------

fs::path resolve_output_dir(const fs::path& requested) {
  const char* env = std::getenv("NOTAKIT_OUTPUT_DIR");
  if (env && *env) return fs::path(env);
  return requested;
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_text(path))); }

std::vector<TokenSeq> split_texts(const CorpusSplit& split) {
  std::vector<TokenSeq> texts;
  for (const auto& s : split.samples) {
    texts.push_back(s.context);
    for (const auto& c : s.candidates) texts.push_back(c);
  }
  return texts;
}

std::size_t nominal_set_size(const CorpusSplit& split) {
  std::size_t x = 0;
  bool any_nota = false;
  for (const auto& s : split.samples) {
    x = std::max(x, s.candidates.size());
    for (const auto& c : s.candidates) any_nota = any_nota || is_nota_candidate(c);
  }
  return any_nota ? x : x + 1;
}

std::size_t nominal_set_size(std::span<const ScoredSample> samples) {
  std::size_t x = 0;
  bool any_nota = false;
  for (const auto& s : samples) {
    x = std::max(x, s.scores.size());
    any_nota = any_nota || has_nota_candidate(s);
  }
  return any_nota ? x : x + 1;
}

// ---------------------------------------------------------------------------
// synth / preprocess / train

ojson cmd_synth(const SynthOptions& o) {
  Manifest manifest("synth", o.out_dir);
  manifest.config() = {{"n_samples", o.corpus.n_samples},
                       {"x", o.corpus.x},
                       {"vocab_size", o.corpus.vocab_size},
                       {"seed", o.corpus.seed}};
  const auto corpus = generate_synthetic_corpus(o.corpus);
  save_split(corpus.train, manifest.output("train.jsonl"));
  save_split(corpus.validation, manifest.output("valid.jsonl"));
  save_split(corpus.test, manifest.output("test.jsonl"));
  return manifest.finish();
}

std::vector<std::string> PreprocessOptions::violations() const {
  std::vector<std::string> v;
  require_file(train, "train split", v);
  require_file(validation, "validation split", v);
  require_file(test, "test split", v);
  if (!seed) v.push_back("seed is required");
  if (max_vocab == 0) v.push_back("max_vocab must be >= 1");
  if (!(nota_fraction >= 0.0 && nota_fraction <= 1.0)) v.push_back("nota_fraction must be in [0, 1]");
  if (!(train_nota_fraction >= 0.0 && train_nota_fraction <= 1.0)) {
    v.push_back("train_nota_fraction must be in [0, 1]");
  }
  if (target_x && *target_x < 2) v.push_back("target_x must be >= 2");
  if (out_dir.empty()) v.push_back("output directory is required");
  return v;
}

ojson cmd_preprocess(const PreprocessOptions& o) {
  if (auto v = o.violations(); !v.empty()) throw ConfigError(std::move(v));
  const std::uint64_t seed = *o.seed;
  Manifest manifest("preprocess", o.out_dir);
  manifest.config() = {{"format", to_string(o.format)},
                       {"max_vocab", o.max_vocab},
                       {"mode", to_string(o.mode)},
                       {"nota_fraction", o.nota_fraction},
                       {"target_x", o.target_x ? ojson(*o.target_x) : ojson(nullptr)},
                       {"train_nota_fraction", o.train_nota_fraction},
                       {"seed", seed}};
  manifest.input(o.train);
  manifest.input(o.validation);
  manifest.input(o.test);

  CorpusSplit train = load_split(o.train, o.format, SplitRole::kTrain, seed);
  CorpusSplit valid = load_split(o.validation, o.format, SplitRole::kValidation, seed);
  CorpusSplit test = load_split(o.test, o.format, SplitRole::kTest, seed);

  const auto vocab = Vocabulary::build(split_texts(train), o.max_vocab);
  if (o.target_x) {
    valid = resize_candidates(valid, *o.target_x, derive_seed(seed, "resize-validation"));
    test = resize_candidates(test, *o.target_x, derive_seed(seed, "resize-test"));
  }
  if (o.train_nota_fraction > 0.0) {
    train = make_nota_eval_set(train, NotaMode::kDirect, o.train_nota_fraction, derive_seed(seed, "nota-train"));
  }
  const auto valid_nota =
      make_nota_eval_set(valid, o.mode, o.nota_fraction, derive_seed(seed, "nota-validation"));
  const auto test_nota = make_nota_eval_set(test, o.mode, o.nota_fraction, derive_seed(seed, "nota-test"));

  vocab.save(manifest.output("vocab.json"));
  save_split(train, manifest.output("train.jsonl"));
  save_split(valid, manifest.output("valid.jsonl"));
  save_split(test, manifest.output("test.jsonl"));
  save_split(valid_nota, manifest.output("valid_nota.jsonl"));
  save_split(test_nota, manifest.output("test_nota.jsonl"));
  return manifest.finish();
}

ojson cmd_train(const TrainOptions& o) {
  std::vector<std::string> v = o.config.violations();
  require_file(o.data_dir / "vocab.json", "vocabulary", v);
  require_file(o.data_dir / "train.jsonl", "train split", v);
  require_file(o.data_dir / "valid.jsonl", "validation split", v);
  if (!v.empty()) throw ConfigError(std::move(v));

  Manifest manifest("train", o.out_dir);
  nlohmann::json cfg = o.config;
  manifest.config() = ojson::parse(cfg.dump());
  manifest.config()["profile"] = o.profile == ModelProfile::kDesk ? "desk" : "full";
  manifest.input(o.data_dir / "vocab.json");
  manifest.input(o.data_dir / "train.jsonl");
  manifest.input(o.data_dir / "valid.jsonl");

  const auto vocab = Vocabulary::load(o.data_dir / "vocab.json");
  const auto train_split = load_split(o.data_dir / "train.jsonl", SplitFormat::kJsonl, SplitRole::kTrain);
  const auto valid_split =
      load_split(o.data_dir / "valid.jsonl", SplitFormat::kJsonl, SplitRole::kValidation);
  const auto train_set = encode_split(train_split, vocab);
  const auto valid_set = encode_split(valid_split, vocab);

  bool nota_trained = false;
  for (const auto& s : train_set) {
    for (const auto& c : s.candidates) nota_trained = nota_trained || is_nota_candidate(c);
  }
  const auto result = train(o.config, profile_dims(o.profile, vocab.size()), train_set, valid_set,
                            [](const EpochLog& e) {
                              std::fprintf(stderr, "epoch %zu  loss %.4f  val_R %.4f  %.1fs\n", e.epoch,
                                           e.train_loss, e.validation_recall, e.wall_time_sec);
                            });

  Checkpoint ckpt{result.best,          vocab.fingerprint(),
                  nota_trained,         result.best_epoch,
                  result.best_validation_recall,
                  std::string(to_string(o.config.objective)),
                  o.config.dropout_keep};
  save_checkpoint(ckpt, manifest.output("checkpoint.json"));
  std::ostringstream log;
  write_train_log_csv(result.log, log);
  write_text(manifest.output("train_log.csv"), log.str());
  return manifest.finish();
}

// ---------------------------------------------------------------------------
// score / train-logreg / evaluate / sweep / report

ojson cmd_score(const ScoreOptions& o) {
  std::vector<std::string> v;
  require_file(o.model.checkpoint, "checkpoint", v);
  require_file(o.model.vocab, "vocabulary", v);
  require_file(o.model.data, "data", v);
  if (o.dropout_passes == 1) v.push_back("dropout passes must be 0 or >= 2");
  if (!v.empty()) throw ConfigError(std::move(v));

  Manifest manifest("score", o.out_dir);
  manifest.config() = {{"dropout_passes", o.dropout_passes}, {"seed", o.seed}};
  manifest.input(o.model.checkpoint);
  manifest.input(o.model.vocab);
  manifest.input(o.model.data);

  const auto model = load_model(o.model);
  const auto split = load_split(o.model.data, SplitFormat::kJsonl, SplitRole::kTest);
  const auto encoded = encode_split(split, model.vocab);
  std::optional<DropoutConfig> dropout;
  if (o.dropout_passes > 0) dropout = inference_dropout(o.dropout_passes, model.checkpoint.dropout_keep, o.seed);
  const auto scored = score_samples(model.inference, encoded, dropout);
  write_dump_file(scored, manifest.output("scores.csv"));
  return manifest.finish();
}

ojson cmd_train_logreg(const TrainLogRegOptions& o) {
  std::vector<std::string> v;
  require_file(o.scores, "score dump", v);
  if (o.kinds.empty()) v.push_back("at least one score kind is required");
  if (!v.empty()) throw ConfigError(std::move(v));

  Manifest manifest("train-logreg", o.out_dir);
  ojson kinds = ojson::array();
  for (auto k : o.kinds) kinds.push_back(to_string(k));
  manifest.config() = {{"score_kinds", kinds},
                       {"with_variance", o.with_variance},
                       {"learning_rate", o.train.learning_rate},
                       {"max_steps", o.train.max_steps},
                       {"tolerance", o.train.tolerance},
                       {"seed", o.train.seed}};
  manifest.input(o.scores);

  const auto samples = read_dump_file(o.scores);
  std::map<std::size_t, std::vector<ScoredSample>> by_size;
  for (const auto& s : samples) by_size[s.scores.size()].push_back(s);
  for (const auto& [size, group] : by_size) {
    for (auto kind : o.kinds) {
      for (bool var : {false, true}) {
        if (var && !o.with_variance) continue;
        auto model = fit_logreg(group, kind, var, o.train);
        model.metadata["x"] = size + 1;
        const std::string name = "logreg_x" + std::to_string(size + 1) + "_" + std::string(to_string(kind)) +
                                 (var ? "_var" : "") + ".json";
        save_logreg(model, manifest.output(name));
      }
    }
  }
  return manifest.finish();
}

std::vector<std::string> EvaluateOptions::violations() const {
  std::vector<std::string> v = detector.violations();
  if (model.has_value() == scores.has_value()) {
    v.push_back("exactly one of (checkpoint, vocab, data) or a score dump is required");
  }
  if (model) {
    require_file(model->checkpoint, "checkpoint", v);
    require_file(model->vocab, "vocabulary", v);
    require_file(model->data, "data", v);
  }
  if (scores) require_file(*scores, "score dump", v);
  if (detector.kind == DetectorKind::kLogReg) {
    if (!logreg_model) {
      v.push_back("logreg detector needs a LogReg model file");
    } else {
      require_file(*logreg_model, "LogReg model", v);
    }
  }
  if (bins == 0) v.push_back("bins must be >= 1");
  if (out_dir.empty()) v.push_back("output directory is required");
  return v;
}

EvalReport cmd_evaluate(const EvaluateOptions& o) {
  if (auto v = o.violations(); !v.empty()) throw ConfigError(std::move(v));
  Manifest manifest("evaluate", o.out_dir);
  manifest.config() = {{"detector", to_string(o.detector.kind)},
                       {"score_kind", to_string(o.detector.score_kind)},
                       {"threshold", o.detector.threshold},
                       {"n_passes", o.detector.n_passes},
                       {"variance_rule", to_string(o.detector.variance_rule)},
                       {"seed", o.seed},
                       {"bins", o.bins},
                       {"model_name", o.model_name}};

  std::vector<ScoredSample> samples;
  if (o.model) {
    manifest.input(o.model->checkpoint);
    manifest.input(o.model->vocab);
    manifest.input(o.model->data);
    const auto model = load_model(*o.model);
    const auto split = load_split(o.model->data, SplitFormat::kJsonl, SplitRole::kTest);
    const auto encoded = encode_split(split, model.vocab);
    std::optional<DropoutConfig> dropout;
    if (o.detector.kind == DetectorKind::kDropout) {
      dropout = inference_dropout(o.detector.n_passes, model.checkpoint.dropout_keep, o.seed);
    }
    samples = score_samples(model.inference, encoded, dropout);
  } else {
    manifest.input(*o.scores);
    samples = read_dump_file(*o.scores);
  }
  if (samples.empty()) throw Error("evaluate: no samples");

  std::optional<LogRegModel> logreg;
  if (o.logreg_model) {
    manifest.input(*o.logreg_model);
    logreg = load_logreg(*o.logreg_model);
  }
  const auto records = evaluate_records(o.detector, samples, logreg ? &*logreg : nullptr);
  const auto report = build_report(records, nominal_set_size(samples), o.model_name, o.detector.label(), o.bins);
  write_report_files(report, samples, manifest);
  manifest.finish();
  return report;
}

SweepResult cmd_sweep(const SweepOptions& o) {
  std::vector<std::string> v;
  require_file(o.scores, "score dump", v);
  if (o.kind != DetectorKind::kThreshold && o.kind != DetectorKind::kDropout) {
    v.push_back("sweep supports the threshold and dropout detectors only");
  }
  if (o.grid && o.grid->size() != 3) v.push_back("grid must be lo:hi:step");
  if (!v.empty()) throw ConfigError(std::move(v));

  Manifest manifest("sweep", o.out_dir);
  manifest.config() = {{"detector", to_string(o.kind)},
                       {"score_kind", to_string(o.score_kind)},
                       {"variance_rule", to_string(o.rule)},
                       {"grid", o.grid ? ojson(*o.grid) : ojson(nullptr)}};
  manifest.input(o.scores);

  const auto samples = read_dump_file(o.scores);
  if (samples.empty()) throw Error("sweep: empty score dump");
  const auto values = sweep_values(samples, o.kind, o.score_kind, o.rule);
  const auto labels = labels_of(samples);
  const auto grid = o.grid ? make_grid((*o.grid)[0], (*o.grid)[1], (*o.grid)[2]) : default_grid(values);
  const auto result = sweep_threshold(values, labels, grid, o.kind == DetectorKind::kThreshold);

  std::string csv = "threshold,average_f1\n";
  for (const auto& [theta, f1] : result.curve) csv += fmt_double(theta) + "," + fmt_double(f1) + "\n";
  write_text(manifest.output("sweep.csv"), csv);
  ojson best = {{"detector", to_string(o.kind)},
                {"score_kind", to_string(o.score_kind)},
                {"x", nominal_set_size(samples)},
                {"best_threshold", result.best_threshold},
                {"best_average_f1", result.best_average_f1}};
  write_text(manifest.output("best.json"), best.dump(2) + "\n");
  manifest.finish();
  return result;
}

ojson cmd_report(const ReportOptions& o) {
  std::vector<std::string> v;
  if (o.reports.empty()) v.push_back("at least one report.json is required");
  for (const auto& p : o.reports) require_file(p, "report", v);
  if (!v.empty()) throw ConfigError(std::move(v));

  Manifest manifest("report", o.out_dir);
  std::vector<EvalReport> reports;
  for (const auto& p : o.reports) {
    manifest.input(p);
    try {
      reports.push_back(report_from_json(nlohmann::json::parse(read_text(p))));
    } catch (const nlohmann::json::exception& e) {
      throw Error(p.string() + ": malformed report: " + e.what());
    }
  }

  std::string table = report_csv_header() + "\n";
  for (const auto& r : reports) table += report_csv_row(r) + "\n";
  write_text(manifest.output("table.csv"), table);

  std::vector<EvalReport> grouped = reports;
  for (auto& r : grouped) r.detector = without_threshold(r.detector);
  std::set<std::size_t> xs;
  for (const auto& r : grouped) xs.insert(r.x);
  if (xs.size() >= 2) {
    const auto t = trend(grouped);
    std::ostringstream csv;
    write_trend_csv(t, csv);
    write_text(manifest.output("trend.csv"), csv.str());
    write_text(manifest.output("trend.svg"), trend_svg(t, "Average F1 by candidate count"));
  }

  // Four-F1 averages for (model, detector) pairs seen at exactly two sizes.
  std::map<std::pair<std::string, std::string>, std::vector<const EvalReport*>> pairs;
  for (const auto& r : grouped) pairs[{r.model, r.detector}].push_back(&r);
  std::string appendix = "model,detector,x_a,x_b,average_f1\n";
  bool any = false;
  for (const auto& [key, rs] : pairs) {
    if (rs.size() != 2 || rs[0]->x == rs[1]->x) continue;
    any = true;
    const auto* a = rs[0]->x < rs[1]->x ? rs[0] : rs[1];
    const auto* b = a == rs[0] ? rs[1] : rs[0];
    appendix += key.first + "," + key.second + "," + std::to_string(a->x) + "," + std::to_string(b->x) + "," +
                fmt_double(appendix_average_f1(*a, *b)) + "\n";
  }
  if (any) write_text(manifest.output("appendix.csv"), appendix);
  return manifest.finish();
}

// ---------------------------------------------------------------------------
// Experiment config

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, std::vector<std::string>& v,
                const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    v.push_back(where + key + ": wrong type");
  }
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                std::vector<std::string>& v, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      v.push_back(where + "unknown key '" + key + "'");
    }
  }
}

template <typename F>
void parse_enum(const nlohmann::json& j, const char* key, std::vector<std::string>& v, const std::string& where,
                F&& apply) {
  if (!j.contains(key)) return;
  try {
    apply(j.at(key).get<std::string>());
  } catch (const nlohmann::json::exception&) {
    v.push_back(where + key + ": wrong type");
  } catch (const Error& e) {
    v.push_back(where + key + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> v;
  if (!seed) v.push_back("seed is required (no wall-clock seeding)");
  if (output_dir.empty()) v.push_back("output_dir is required");
  const bool files = !train_path.empty() || !validation_path.empty() || !test_path.empty();
  if (synthetic && files) v.push_back("corpus: give either synthetic settings or split files, not both");
  if (!synthetic) {
    require_file(train_path, "corpus.train", v);
    require_file(validation_path, "corpus.validation", v);
    require_file(test_path, "corpus.test", v);
    if (evaluation_samples > 0) v.push_back("evaluation_samples applies to synthetic corpora only");
  } else {
    if (synthetic->n_samples < 10) v.push_back("corpus.synthetic.n_samples must be >= 10");
    if (synthetic->x < 2) v.push_back("corpus.synthetic.x must be >= 2");
    if (synthetic->vocab_size < 16) v.push_back("corpus.synthetic.vocab_size must be >= 16");
  }
  if (max_vocab == 0) v.push_back("max_vocab must be >= 1");
  if (!(nota_fraction > 0.0 && nota_fraction < 1.0)) v.push_back("nota_fraction must be in (0, 1)");
  for (const auto& t : train.violations()) v.push_back("train." + t);
  if (x_sweep.empty()) v.push_back("x_sweep must not be empty");
  for (std::size_t x : x_sweep) {
    if (x < 2) v.push_back("x_sweep entries must be >= 2 (got " + std::to_string(x) + ")");
  }
  if (detectors.empty()) v.push_back("at least one detector is required");
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    const auto& d = detectors[i];
    const std::string where = "detectors[" + std::to_string(i) + "].";
    if (d.threshold && !std::isfinite(*d.threshold)) v.push_back(where + "threshold must be finite");
    if (d.kind == DetectorKind::kDropout && d.n_passes < 2) v.push_back(where + "n_passes must be >= 2");
    if (d.kind == DetectorKind::kDirect && d.threshold) v.push_back(where + "direct takes no threshold");
  }
  if (bins == 0) v.push_back("bins must be >= 1");
  return v;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  std::vector<std::string> v;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError({"experiment config must be a JSON object"});
  check_keys(j,
             {"seed", "output_dir", "profile", "corpus", "evaluation_samples", "max_vocab", "nota_fraction",
              "train", "x_sweep", "detectors", "bins"},
             v, "");
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read_field(j, "seed", s, v, "");
    c.seed = s;
  }
  std::string out;
  read_field(j, "output_dir", out, v, "");
  c.output_dir = out;
  parse_enum(j, "profile", v, "", [&](const std::string& s) { c.profile = parse_model_profile(s); });
  read_field(j, "evaluation_samples", c.evaluation_samples, v, "");
  read_field(j, "max_vocab", c.max_vocab, v, "");
  read_field(j, "nota_fraction", c.nota_fraction, v, "");
  read_field(j, "x_sweep", c.x_sweep, v, "");
  read_field(j, "bins", c.bins, v, "");

  if (j.contains("corpus")) {
    const auto& cj = j["corpus"];
    check_keys(cj, {"synthetic", "train", "validation", "test", "format"}, v, "corpus.");
    if (cj.contains("synthetic")) {
      const auto& sj = cj["synthetic"];
      check_keys(sj, {"n_samples", "x", "vocab_size"}, v, "corpus.synthetic.");
      SyntheticConfig s;
      read_field(sj, "n_samples", s.n_samples, v, "corpus.synthetic.");
      read_field(sj, "x", s.x, v, "corpus.synthetic.");
      read_field(sj, "vocab_size", s.vocab_size, v, "corpus.synthetic.");
      c.synthetic = s;
    }
    std::string p;
    if (cj.contains("train")) { read_field(cj, "train", p, v, "corpus."); c.train_path = p; }
    if (cj.contains("validation")) { read_field(cj, "validation", p, v, "corpus."); c.validation_path = p; }
    if (cj.contains("test")) { read_field(cj, "test", p, v, "corpus."); c.test_path = p; }
    parse_enum(cj, "format", v, "corpus.", [&](const std::string& s) { c.format = parse_split_format(s); });
  } else {
    v.push_back("corpus is required");
  }

  if (j.contains("train")) {
    try {
      c.train = j["train"].get<TrainConfig>();
    } catch (const ConfigError& e) {
      for (const auto& m : e.violations()) v.push_back(m.starts_with("train") ? m : "train." + m);
    } catch (const std::exception& e) {
      v.push_back(std::string("train: ") + e.what());
    }
  }
  // Without an explicit train.seed, the experiment seed drives training too.
  const bool train_seeded = j.contains("train") && j["train"].is_object() && j["train"].contains("seed");
  if (!train_seeded && c.seed) c.train.seed = derive_seed(*c.seed, "train");

  if (j.contains("detectors")) {
    if (!j["detectors"].is_array()) {
      v.push_back("detectors must be an array");
    } else {
      for (std::size_t i = 0; i < j["detectors"].size(); ++i) {
        const auto& dj = j["detectors"][i];
        const std::string where = "detectors[" + std::to_string(i) + "].";
        check_keys(dj, {"kind", "score_kind", "threshold", "n_passes", "rule"}, v, where);
        ExperimentDetector d;
        if (!dj.contains("kind")) v.push_back(where + "kind is required");
        parse_enum(dj, "kind", v, where, [&](const std::string& s) { d.kind = parse_detector_kind(s); });
        parse_enum(dj, "score_kind", v, where, [&](const std::string& s) { d.score_kind = parse_score_kind(s); });
        parse_enum(dj, "rule", v, where, [&](const std::string& s) { d.rule = parse_variance_rule(s); });
        if (dj.contains("threshold") && !dj["threshold"].is_null()) {
          double t = 0.0;
          read_field(dj, "threshold", t, v, where);
          d.threshold = t;
        }
        read_field(dj, "n_passes", d.n_passes, v, where);
        c.detectors.push_back(d);
      }
    }
  }

  // Range checks run on whatever parsed, so one pass reports everything.
  for (auto& m : c.violations()) {
    if (std::find(v.begin(), v.end(), m) == v.end()) v.push_back(std::move(m));
  }
  if (!v.empty()) throw ConfigError(std::move(v));
  return c;
}

ojson experiment_to_json(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed ? ojson(*c.seed) : ojson(nullptr);
  j["output_dir"] = c.output_dir.generic_string();
  j["profile"] = c.profile == ModelProfile::kDesk ? "desk" : "full";
  ojson corpus;
  if (c.synthetic) {
    corpus["synthetic"] = {{"n_samples", c.synthetic->n_samples},
                           {"x", c.synthetic->x},
                           {"vocab_size", c.synthetic->vocab_size}};
  } else {
    corpus["train"] = c.train_path.generic_string();
    corpus["validation"] = c.validation_path.generic_string();
    corpus["test"] = c.test_path.generic_string();
    corpus["format"] = to_string(c.format);
  }
  j["corpus"] = corpus;
  j["evaluation_samples"] = c.evaluation_samples;
  j["max_vocab"] = c.max_vocab;
  j["nota_fraction"] = c.nota_fraction;
  nlohmann::json t = c.train;
  j["train"] = ojson::parse(t.dump());
  j["x_sweep"] = c.x_sweep;
  ojson dets = ojson::array();
  for (const auto& d : c.detectors) {
    ojson dj;
    dj["kind"] = to_string(d.kind);
    dj["score_kind"] = to_string(d.score_kind);
    dj["threshold"] = d.threshold ? ojson(*d.threshold) : ojson(nullptr);
    if (d.kind == DetectorKind::kDropout) {
      dj["n_passes"] = d.n_passes;
      dj["rule"] = to_string(d.rule);
    }
    dets.push_back(dj);
  }
  j["detectors"] = dets;
  j["bins"] = c.bins;
  return j;
}

ExperimentConfig load_experiment(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({path.string() + ": not valid JSON: " + e.what()});
  }
  return experiment_from_json(j);
}

// ---------------------------------------------------------------------------
// Full pipeline

namespace {

std::string detector_name(const ExperimentDetector& d) {
  std::string name = std::string(to_string(d.kind)) + "-" + std::string(to_string(d.score_kind));
  if (d.kind == DetectorKind::kDropout) name += "-" + std::string(to_string(d.rule));
  return name;
}

struct EvalSplits {
  CorpusSplit validation;
  CorpusSplit test;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (auto v = config.violations(); !v.empty()) throw ConfigError(std::move(v));
  const std::uint64_t seed = *config.seed;
  const fs::path out = resolve_output_dir(config.output_dir);
  Manifest manifest("run", out);
  manifest.config() = experiment_to_json(config);

  // Corpus and vocabulary.
  CorpusSplit train_split, valid_split, test_split;
  if (config.synthetic) {
    SyntheticConfig sc = *config.synthetic;
    sc.seed = derive_seed(seed, "synthetic-corpus");
    auto corpus = generate_synthetic_corpus(sc);
    train_split = std::move(corpus.train);
    valid_split = std::move(corpus.validation);
    test_split = std::move(corpus.test);
  } else {
    manifest.input(config.train_path);
    manifest.input(config.validation_path);
    manifest.input(config.test_path);
    train_split = load_split(config.train_path, config.format, SplitRole::kTrain, seed);
    valid_split = load_split(config.validation_path, config.format, SplitRole::kValidation, seed);
    test_split = load_split(config.test_path, config.format, SplitRole::kTest, seed);
  }
  const auto vocab = Vocabulary::build(split_texts(train_split), config.max_vocab);
  vocab.save(manifest.output("vocab.json"));

  // Model.
  const auto train_set = encode_split(train_split, vocab);
  const auto valid_set = encode_split(valid_split, vocab);
  ExperimentResult result;
  result.training = train(config.train, profile_dims(config.profile, vocab.size()), train_set, valid_set);
  bool nota_trained = false;
  for (const auto& s : train_set) {
    for (const auto& c : s.candidates) nota_trained = nota_trained || is_nota_candidate(c);
  }
  save_checkpoint(Checkpoint{result.training.best, vocab.fingerprint(), nota_trained, result.training.best_epoch,
                             result.training.best_validation_recall,
                             std::string(to_string(config.train.objective)), config.train.dropout_keep},
                  manifest.output("checkpoint.json"));
  {
    // Wall time lives here and nowhere else, so only this file varies
    // between otherwise identical runs.
    std::ostringstream log;
    write_train_log_csv(result.training.log, log);
    write_text(manifest.output("train_log.csv"), log.str());
  }
  const EncoderParams params =
      nota_trained ? result.training.best : result.training.best.with_nota_as_unk();

  std::size_t max_passes = 0;
  for (const auto& d : config.detectors) {
    if (d.kind == DetectorKind::kDropout) max_passes = std::max(max_passes, d.n_passes);
  }
  const std::string model_name = std::string(to_string(config.train.objective));

  for (std::size_t x : config.x_sweep) {
    EvalSplits base;
    if (config.synthetic && config.evaluation_samples > 0) {
      SyntheticConfig sc = *config.synthetic;
      sc.n_samples = 10 * config.evaluation_samples;
      sc.x = x;
      sc.seed = derive_seed(seed, "evaluation-corpus", x);
      auto corpus = generate_synthetic_corpus(sc);
      base = {std::move(corpus.validation), std::move(corpus.test)};
    } else {
      base = {resize_candidates(valid_split, x, derive_seed(seed, "resize-validation", x)),
              resize_candidates(test_split, x, derive_seed(seed, "resize-test", x))};
    }
    // One partition seed per split so both layouts share the isNOTA subset.
    const std::uint64_t val_seed = derive_seed(seed, "nota-validation", x);
    const std::uint64_t test_seed = derive_seed(seed, "nota-test", x);

    std::optional<DropoutConfig> dropout;
    if (max_passes > 0) dropout = inference_dropout(max_passes, config.train.dropout_keep, derive_seed(seed, "x", x));

    auto score_split = [&](const CorpusSplit& split, NotaMode mode, std::uint64_t s, bool with_dropout) {
      const auto nota = make_nota_eval_set(split, mode, config.nota_fraction, s);
      return score_samples(params, encode_split(nota, vocab),
                           with_dropout ? dropout : std::optional<DropoutConfig>());
    };
    bool need_direct = false, need_threshold = false;
    for (const auto& d : config.detectors) {
      (d.kind == DetectorKind::kDirect ? need_direct : need_threshold) = true;
    }
    std::vector<ScoredSample> direct_test, thr_val, thr_test;
    if (need_direct) direct_test = score_split(base.test, NotaMode::kDirect, test_seed, false);
    if (need_threshold) {
      thr_val = score_split(base.validation, NotaMode::kThreshold, val_seed, max_passes > 0);
      thr_test = score_split(base.test, NotaMode::kThreshold, test_seed, max_passes > 0);
    }
    const auto val_labels = labels_of(thr_val);

    for (const auto& d : config.detectors) {
      const std::string name = detector_name(d);
      const std::string rel = "x" + std::to_string(x) + "/" + name + "/";
      ensure_dir(out / rel);
      DetectorConfig det;
      det.kind = d.kind;
      det.score_kind = d.score_kind;
      det.n_passes = d.n_passes;
      det.variance_rule = d.rule;
      ojson tuning = {{"detector", name}, {"x", x}};
      std::optional<LogRegModel> logreg;
      const std::vector<ScoredSample>* test_samples = &thr_test;

      switch (d.kind) {
        case DetectorKind::kDirect:
          test_samples = &direct_test;
          break;
        case DetectorKind::kThreshold:
        case DetectorKind::kDropout:
          if (d.threshold) {
            det.threshold = *d.threshold;
            tuning["threshold"] = *d.threshold;
            tuning["tuned"] = false;
          } else {
            const auto values = sweep_values(thr_val, d.kind, d.score_kind, d.rule);
            const auto grid = d.kind == DetectorKind::kThreshold && d.score_kind == ScoreKind::kSoftmax
                                  ? make_grid(0.0, 1.0, 0.0025)
                                  : default_grid(values);
            const auto sweep = sweep_threshold(values, val_labels, grid, d.kind == DetectorKind::kThreshold);
            det.threshold = sweep.best_threshold;
            tuning["threshold"] = sweep.best_threshold;
            tuning["tuned"] = true;
            tuning["validation_average_f1"] = sweep.best_average_f1;
          }
          if (d.kind == DetectorKind::kDropout) tuning["n_passes"] = max_passes;
          break;
        case DetectorKind::kLogReg: {
          LogRegTrainConfig lc;
          lc.seed = derive_seed(seed, "logreg", x);
          logreg = fit_logreg(thr_val, d.score_kind, false, lc);
          logreg->metadata["x"] = x;
          save_logreg(*logreg, manifest.output(rel + "logreg.json"));
          tuning["logreg_steps"] = logreg->metadata["steps"];
          break;
        }
      }
      write_text(manifest.output(rel + "tuning.json"), tuning.dump(2) + "\n");

      const auto records = evaluate_records(det, *test_samples, logreg ? &*logreg : nullptr);
      auto report = build_report(records, x, model_name, name, config.bins);
      write_text(manifest.output(rel + "report.json"), report_to_json(report).dump(2) + "\n");
      write_text(manifest.output(rel + "report.csv"),
                 report_csv_header() + "\n" + report_csv_row(report) + "\n");
      if (report.auc) {
        std::ostringstream roc_csv;
        write_roc_csv(RocCurve{report.roc, *report.auc}, roc_csv);
        write_text(manifest.output(rel + "roc.csv"), roc_csv.str());
        write_text(manifest.output(rel + "roc.svg"), roc_svg(report.roc, name + " x=" + std::to_string(x)));
      }
      std::ostringstream hist_csv;
      write_histogram_csv(report.histogram, hist_csv);
      write_text(manifest.output(rel + "hist.csv"), hist_csv.str());
      write_text(manifest.output(rel + "hist.svg"),
                 histogram_svg(report.histogram, name + " x=" + std::to_string(x)));
      write_dump_file(*test_samples, manifest.output(rel + "scores.csv"));
      result.reports.push_back(std::move(report));
    }
  }

  std::string table = report_csv_header() + "\n";
  for (const auto& r : result.reports) table += report_csv_row(r) + "\n";
  write_text(manifest.output("table.csv"), table);
  std::set<std::size_t> xs(config.x_sweep.begin(), config.x_sweep.end());
  if (xs.size() >= 2) {
    const auto t = trend(result.reports);
    std::ostringstream csv;
    write_trend_csv(t, csv);
    write_text(manifest.output("trend.csv"), csv.str());
    write_text(manifest.output("trend.svg"), trend_svg(t, "Average F1 by candidate count"));
  }
  ojson summary = ojson::array();
  for (const auto& r : result.reports) summary.push_back(report_to_json(r));
  write_text(manifest.output("report.json"), summary.dump(2) + "\n");
  manifest.finish();
  return result;
}

ojson error_json(const std::exception& error) {
  ojson j;
  j["error"] = error.what();
  ojson v = ojson::array();
  if (const auto* ce = dynamic_cast<const ConfigError*>(&error)) {
    for (const auto& m : ce->violations()) v.push_back(m);
  }
  j["violations"] = v;
  return j;
}

}  // namespace notakit
