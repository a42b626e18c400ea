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

// notakit command-line interface.
//
//   notakit synth        --out DIR [--n-samples N --x X --vocab-size V] --seed S
//   notakit preprocess   --train F --valid F --test F --out DIR --seed S [--format ...]
//   notakit train        --data DIR --out DIR [--config train.json] [overrides]
//   notakit score        --checkpoint C --vocab V --data F --out DIR
//   notakit train-logreg --scores F --out DIR
//   notakit evaluate     (--checkpoint C --vocab V --data F | --scores F) --detector D --out DIR
//   notakit sweep        --scores F --detector threshold|dropout --out DIR
//   notakit report       --out DIR REPORT.json...
//   notakit run          --config experiment.json
//
// NOTAKIT_OUTPUT_DIR overrides --out. Failures exit nonzero with a JSON
// error object on stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "notakit/experiment.hpp"

namespace nk = notakit;

namespace {

nk::fs::path output_dir(const std::string& flag) {
  auto dir = nk::resolve_output_dir(flag);
  if (dir.empty()) throw nk::ConfigError({"--out is required (or set NOTAKIT_OUTPUT_DIR)"});
  return dir;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw nk::ConfigError({"--grid must be lo:hi:step (got '" + text + "')"});
    }
  }
  if (out.size() != 3) throw nk::ConfigError({"--grid must be lo:hi:step (got '" + text + "')"});
  return out;
}

void print_ok(const nk::fs::path& dir) {
  nlohmann::ordered_json j{{"status", "ok"}, {"output_dir", dir.generic_string()}};
  std::cout << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"notakit: none-of-the-above detection for dialog response selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "notakit 0.1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic keyword corpus");
  nk::SynthOptions synth_opts;
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--n-samples", synth_opts.corpus.n_samples, "Total samples (split 80/10/10)");
  synth->add_option("--x", synth_opts.corpus.x, "Candidates per sample");
  synth->add_option("--vocab-size", synth_opts.corpus.vocab_size, "Word inventory scale");
  synth->add_option("--seed", synth_seed, "Seed")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Build the vocabulary and NOTA evaluation sets");
  nk::PreprocessOptions pre_opts;
  std::string pre_train, pre_valid, pre_test, pre_out, pre_format = "jsonl", pre_mode = "direct";
  std::uint64_t pre_seed = 0;
  std::size_t pre_target_x = 0;
  pre->add_option("--train", pre_train, "Training split")->required();
  pre->add_option("--valid", pre_valid, "Validation split")->required();
  pre->add_option("--test", pre_test, "Test split")->required();
  pre->add_option("--format", pre_format, "jsonl | tsv-binary | tsv-ranking");
  pre->add_option("--max-vocab", pre_opts.max_vocab, "Vocabulary cap (reserved tokens excluded)");
  pre->add_option("--mode", pre_mode, "direct | threshold");
  pre->add_option("--nota-fraction", pre_opts.nota_fraction, "Share of isNOTA samples");
  auto* pre_x_opt = pre->add_option("--target-x", pre_target_x, "Resize validation/test candidate sets");
  pre->add_option("--train-nota-fraction", pre_opts.train_nota_fraction,
                  "Share of training samples given a _NOTA candidate");
  pre->add_option("--seed", pre_seed, "Seed")->required();
  pre->add_option("--out", pre_out, "Output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train a dual encoder");
  std::string tr_data, tr_out, tr_config, tr_profile = "desk", tr_objective;
  double tr_lr = 0, tr_clip = 0, tr_keep = 0;
  std::size_t tr_batch = 0, tr_epochs = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Preprocess output directory")->required();
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--config", tr_config, "Training config JSON (flags override it)");
  tr->add_option("--profile", tr_profile, "desk | full");
  auto* o_obj = tr->add_option("--objective", tr_objective, "binary | selection | dropout");
  auto* o_lr = tr->add_option("--lr", tr_lr, "Adam learning rate");
  auto* o_clip = tr->add_option("--clip-norm", tr_clip, "Global gradient norm cap");
  auto* o_batch = tr->add_option("--batch-size", tr_batch, "Samples per batch");
  auto* o_epochs = tr->add_option("--epochs", tr_epochs, "Epochs");
  auto* o_keep = tr->add_option("--dropout-keep", tr_keep, "Dropout keep probability");
  auto* o_seed = tr->add_option("--seed", tr_seed, "Seed");

  // score
  auto* sc = app.add_subcommand("score", "Write a score dump for a split");
  nk::ScoreOptions sc_opts;
  std::string sc_ckpt, sc_vocab, sc_data, sc_out;
  sc->add_option("--checkpoint", sc_ckpt, "checkpoint.json")->required();
  sc->add_option("--vocab", sc_vocab, "vocab.json")->required();
  sc->add_option("--data", sc_data, "jsonl split")->required();
  sc->add_option("--dropout-passes", sc_opts.dropout_passes, "Also record dropout statistics");
  sc->add_option("--seed", sc_opts.seed, "Seed for dropout masks");
  sc->add_option("--out", sc_out, "Output directory");

  // train-logreg
  auto* lr = app.add_subcommand("train-logreg", "Fit LogReg meta-classifiers on a score dump");
  nk::TrainLogRegOptions lr_opts;
  std::string lr_scores, lr_out;
  std::vector<std::string> lr_kinds{"logits", "softmax"};
  lr->add_option("--scores", lr_scores, "scores.csv (threshold layout)")->required();
  lr->add_option("--score-kind", lr_kinds, "logits and/or softmax");
  lr->add_flag("--with-variance", lr_opts.with_variance, "Also fit dropout mean+variance models");
  lr->add_option("--steps", lr_opts.train.max_steps, "Maximum Adam steps");
  lr->add_option("--seed", lr_opts.train.seed, "Recorded in model metadata");
  lr->add_option("--out", lr_out, "Output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Run a detector and write metric reports");
  nk::EvaluateOptions ev_opts;
  std::string ev_ckpt, ev_vocab, ev_data, ev_scores, ev_out, ev_detector = "direct", ev_kind = "logits",
                                                            ev_rule = "winner", ev_logreg;
  double ev_threshold = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json");
  ev->add_option("--vocab", ev_vocab, "vocab.json");
  ev->add_option("--data", ev_data, "NOTA evaluation split (jsonl)");
  ev->add_option("--scores", ev_scores, "Score dump instead of a checkpoint");
  ev->add_option("--detector", ev_detector, "direct | threshold | logreg | dropout");
  ev->add_option("--score-kind", ev_kind, "logits | softmax");
  auto* ev_thr_opt = ev->add_option("--threshold", ev_threshold, "Score or variance threshold");
  ev->add_option("--dropout-passes", ev_opts.detector.n_passes, "Dropout passes");
  ev->add_option("--variance-rule", ev_rule, "winner | mean | max");
  ev->add_option("--logreg", ev_logreg, "LogReg model JSON");
  ev->add_option("--seed", ev_opts.seed, "Seed for dropout masks");
  ev->add_option("--bins", ev_opts.bins, "Histogram bins");
  ev->add_option("--model-name", ev_opts.model_name, "Model column in reports");
  ev->add_option("--out", ev_out, "Output directory");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Grid-search a threshold by average F1");
  nk::SweepOptions sw_opts;
  std::string sw_scores, sw_out, sw_detector = "threshold", sw_kind = "logits", sw_rule = "winner", sw_grid;
  sw->add_option("--scores", sw_scores, "scores.csv")->required();
  sw->add_option("--detector", sw_detector, "threshold | dropout");
  sw->add_option("--score-kind", sw_kind, "logits | softmax");
  sw->add_option("--variance-rule", sw_rule, "winner | mean | max");
  sw->add_option("--grid", sw_grid, "lo:hi:step (default: 400 steps over the data range)");
  sw->add_option("--out", sw_out, "Output directory");

  // report
  auto* rp = app.add_subcommand("report", "Merge reports into a table and trend figure");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  rp->add_option("reports", rp_inputs, "report.json files")->required();
  rp->add_option("--out", rp_out, "Output directory");

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment from a config file");
  std::string run_config;
  run->add_option("--config", run_config, "Experiment config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      synth_opts.corpus.seed = synth_seed;
      synth_opts.out_dir = output_dir(synth_out);
      nk::cmd_synth(synth_opts);
      print_ok(synth_opts.out_dir);
    } else if (pre->parsed()) {
      pre_opts.train = pre_train;
      pre_opts.validation = pre_valid;
      pre_opts.test = pre_test;
      pre_opts.format = nk::parse_split_format(pre_format);
      pre_opts.mode = nk::parse_nota_mode(pre_mode);
      pre_opts.seed = pre_seed;
      if (pre_x_opt->count() > 0) pre_opts.target_x = pre_target_x;
      pre_opts.out_dir = output_dir(pre_out);
      nk::cmd_preprocess(pre_opts);
      print_ok(pre_opts.out_dir);
    } else if (tr->parsed()) {
      nk::TrainOptions opts;
      if (!tr_config.empty()) {
        std::ifstream in(tr_config);
        if (!in) throw nk::Error("cannot read " + tr_config);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw nk::ConfigError({tr_config + ": not valid JSON: " + e.what()});
        }
        opts.config = j.get<nk::TrainConfig>();
      }
      if (o_obj->count()) opts.config.objective = nk::parse_objective(tr_objective);
      if (o_lr->count()) opts.config.learning_rate = tr_lr;
      if (o_clip->count()) opts.config.clip_norm = tr_clip;
      if (o_batch->count()) opts.config.batch_size = tr_batch;
      if (o_epochs->count()) opts.config.epochs = tr_epochs;
      if (o_keep->count()) opts.config.dropout_keep = tr_keep;
      if (o_seed->count()) opts.config.seed = tr_seed;
      opts.profile = nk::parse_model_profile(tr_profile);
      opts.data_dir = tr_data;
      opts.out_dir = output_dir(tr_out);
      nk::cmd_train(opts);
      print_ok(opts.out_dir);
    } else if (sc->parsed()) {
      sc_opts.model = {sc_ckpt, sc_vocab, sc_data};
      sc_opts.out_dir = output_dir(sc_out);
      nk::cmd_score(sc_opts);
      print_ok(sc_opts.out_dir);
    } else if (lr->parsed()) {
      lr_opts.scores = lr_scores;
      lr_opts.kinds.clear();
      for (const auto& k : lr_kinds) lr_opts.kinds.push_back(nk::parse_score_kind(k));
      lr_opts.out_dir = output_dir(lr_out);
      nk::cmd_train_logreg(lr_opts);
      print_ok(lr_opts.out_dir);
    } else if (ev->parsed()) {
      if (!ev_scores.empty()) ev_opts.scores = ev_scores;
      if (!ev_ckpt.empty() || !ev_vocab.empty() || !ev_data.empty()) {
        ev_opts.model = nk::ModelInputs{ev_ckpt, ev_vocab, ev_data};
      }
      ev_opts.detector.kind = nk::parse_detector_kind(ev_detector);
      ev_opts.detector.score_kind = nk::parse_score_kind(ev_kind);
      ev_opts.detector.variance_rule = nk::parse_variance_rule(ev_rule);
      ev_opts.detector.threshold = ev_thr_opt->count()
                                       ? ev_threshold
                                       : nk::default_threshold(ev_opts.detector.kind, ev_opts.detector.score_kind);
      if (!ev_logreg.empty()) ev_opts.logreg_model = ev_logreg;
      ev_opts.out_dir = output_dir(ev_out);
      const auto report = nk::cmd_evaluate(ev_opts);
      std::cout << nk::report_csv_header() << '\n' << nk::report_csv_row(report) << '\n';
    } else if (sw->parsed()) {
      sw_opts.scores = sw_scores;
      sw_opts.kind = nk::parse_detector_kind(sw_detector);
      sw_opts.score_kind = nk::parse_score_kind(sw_kind);
      sw_opts.rule = nk::parse_variance_rule(sw_rule);
      if (!sw_grid.empty()) sw_opts.grid = parse_grid(sw_grid);
      sw_opts.out_dir = output_dir(sw_out);
      const auto result = nk::cmd_sweep(sw_opts);
      nlohmann::ordered_json j{{"best_threshold", result.best_threshold},
                               {"best_average_f1", result.best_average_f1}};
      std::cout << j.dump() << '\n';
    } else if (rp->parsed()) {
      nk::ReportOptions opts;
      for (const auto& p : rp_inputs) opts.reports.emplace_back(p);
      opts.out_dir = output_dir(rp_out);
      nk::cmd_report(opts);
      print_ok(opts.out_dir);
    } else if (run->parsed()) {
      const auto config = nk::load_experiment(run_config);
      const auto result = nk::run_experiment(config);
      std::cout << nk::report_csv_header() << '\n';
      for (const auto& r : result.reports) std::cout << nk::report_csv_row(r) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << nk::error_json(e).dump() << '\n';
    return 1;
  }
  return 0;
}
