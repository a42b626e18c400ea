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

// NOTA evaluation metrics.
//
// Samples split into D (ground truth present) and D_n (NOTA). NOTA is the
// positive class for the confusion counts:
//
//   tp  NOTA sample, NOTA verdict        fn  NOTA sample, candidate verdict
//   fp  D sample, NOTA verdict           tn  D sample, candidate verdict
//
//   R    = |D with verdict == truth| / |D|
//   N    = (tp + tn) / (|D| + |D_n|)
//   NF1  = 2tp / (2tp + fp + fn)         GF1 = 2tn / (2tn + fn + fp)

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "notakit/corpus.hpp"
#include "notakit/decision.hpp"

namespace notakit {

struct EvalRecord {
  std::size_t sample_id = 0;
  Label label = Label::nota();
  Decision decision;
};

/// Exact count ratio; metrics are compared as integers before conversion.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t d_correct = 0;  // D samples whose verdict is the ground truth

  std::int64_t d_size() const { return fp + tn; }
  std::int64_t dn_size() const { return tp + fn; }
  std::int64_t total() const { return d_size() + dn_size(); }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts count_outcomes(std::span<const EvalRecord> records);

/// nullopt when |D| = 0.
std::optional<Rational> recall_ratio(const ConfusionCounts& counts);
/// Throws when there are no records.
Rational nota_accuracy_ratio(const ConfusionCounts& counts);
/// nullopt when the F1 denominator is zero.
std::optional<Rational> nota_f1_ratio(const ConfusionCounts& counts);
std::optional<Rational> ground_f1_ratio(const ConfusionCounts& counts);

std::optional<double> recall_at_1(std::span<const EvalRecord> records);
double nota_accuracy(std::span<const EvalRecord> records);

struct F1Pair {
  double nota_f1 = 0.0;
  double ground_f1 = 0.0;
  double average = 0.0;
  bool nota_f1_defined = true;
  bool ground_f1_defined = true;
};

/// Undefined F1 values are reported as 0 with the matching flag cleared.
F1Pair f1_pair(const ConfusionCounts& counts);
F1Pair f1_pair(std::span<const EvalRecord> records);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0, 0), ends at (1, 1)
  double auc = 0.0;
};

/// ROC over Decision::nota_score with NOTA as the positive class, one point
/// per distinct score. AUC by the trapezoid rule. Throws unless both classes
/// are present.
RocCurve roc(std::span<const EvalRecord> records);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::int64_t> nota;      // isNOTA samples
  std::vector<std::int64_t> not_nota;  // notNOTA samples

  std::size_t bins() const { return nota.size(); }
  double bin_width() const;
  /// Sum over bins of the smaller of the two class-normalized frequencies.
  double overlap_coefficient() const;
};

/// Per-class histograms of Decision::confidence over a shared range.
Histogram histograms(std::span<const EvalRecord> records, std::size_t bins);

struct EvalReport {
  std::string model;
  std::string detector;
  std::size_t x = 0;
  ConfusionCounts counts;
  std::optional<double> recall;
  double nota_accuracy = 0.0;
  F1Pair f1;
  std::optional<double> auc;
  std::vector<RocPoint> roc;
  Histogram histogram;
  std::vector<std::string> warnings;
};

EvalReport build_report(std::span<const EvalRecord> records, std::size_t x, std::string model,
                        std::string detector, std::size_t bins = 20);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Table-shaped rows: model, detector, x, R, N, NF1, GF1, AvgF1 (percent is
/// left to presentation; values are fractions).
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);

struct ReportRow {
  std::string model;
  std::string detector;
  std::size_t x = 0;
  std::optional<double> recall;
  double nota_accuracy = 0.0;
  double nota_f1 = 0.0;
  double ground_f1 = 0.0;
  double average_f1 = 0.0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};
ReportRow report_row(const EvalReport& report);
ReportRow parse_report_csv_row(const std::string& line);

/// Average of NF1 and GF1 at two set sizes (four F1 values), as in the
/// two-x appendix-style tables.
double appendix_average_f1(const EvalReport& a, const EvalReport& b);

void write_roc_csv(const RocCurve& curve, std::ostream& out);
void write_histogram_csv(const Histogram& hist, std::ostream& out);
std::string roc_svg(const std::vector<RocPoint>& points, const std::string& title);
std::string histogram_svg(const Histogram& hist, const std::string& title);

/// Average F1 per detector per candidate count.
struct TrendTable {
  std::vector<std::size_t> xs;
  std::vector<std::string> detectors;
  std::vector<std::vector<std::optional<double>>> average_f1;  // [detector][x]
};

/// Needs reports at two or more distinct set sizes.
TrendTable trend(std::span<const EvalReport> reports);
void write_trend_csv(const TrendTable& table, std::ostream& out);
std::string trend_svg(const TrendTable& table, const std::string& title);

}  // namespace notakit
