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

#include "notakit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace notakit {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw Error("malformed number '" + s + "'");
  return v;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

const char* kSvgHeader =
    "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
    "viewBox=\"0 0 %d %d\" font-family=\"sans-serif\" font-size=\"11\">\n";

std::string svg_open(int w, int h) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), kSvgHeader, w, h, w, h);
  return std::string(buf) + "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string svg_text(double x, double y, const std::string& text, const char* anchor = "middle") {
  std::string escaped;
  for (char c : text) {
    if (c == '<') escaped += "&lt;";
    else if (c == '>') escaped += "&gt;";
    else if (c == '&') escaped += "&amp;";
    else escaped.push_back(c);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"%s\">", x, y, anchor);
  return buf + escaped + "</text>\n";
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

// ---------------------------------------------------------------------------
// Counts and ratios

ConfusionCounts count_outcomes(std::span<const EvalRecord> records) {
  ConfusionCounts c;
  for (const auto& r : records) {
    const bool verdict_nota = r.decision.is_nota();
    if (r.label.is_nota()) {
      verdict_nota ? ++c.tp : ++c.fn;
    } else {
      verdict_nota ? ++c.fp : ++c.tn;
      if (!verdict_nota && *r.decision.candidate == r.label.truth()) ++c.d_correct;
    }
  }
  return c;
}

std::optional<Rational> recall_ratio(const ConfusionCounts& c) {
  if (c.d_size() == 0) return std::nullopt;
  return Rational{c.d_correct, c.d_size()};
}

Rational nota_accuracy_ratio(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("nota_accuracy: no records");
  return Rational{c.tp + c.tn, c.total()};
}

std::optional<Rational> nota_f1_ratio(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tp + c.fp + c.fn;
  if (den == 0) return std::nullopt;
  return Rational{2 * c.tp, den};
}

std::optional<Rational> ground_f1_ratio(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tn + c.fn + c.fp;
  if (den == 0) return std::nullopt;
  return Rational{2 * c.tn, den};
}

std::optional<double> recall_at_1(std::span<const EvalRecord> records) {
  auto r = recall_ratio(count_outcomes(records));
  if (!r) return std::nullopt;
  return r->value();
}

double nota_accuracy(std::span<const EvalRecord> records) {
  return nota_accuracy_ratio(count_outcomes(records)).value();
}

F1Pair f1_pair(const ConfusionCounts& counts) {
  F1Pair f;
  if (auto n = nota_f1_ratio(counts)) {
    f.nota_f1 = n->value();
  } else {
    f.nota_f1_defined = false;
  }
  if (auto g = ground_f1_ratio(counts)) {
    f.ground_f1 = g->value();
  } else {
    f.ground_f1_defined = false;
  }
  f.average = 0.5 * (f.nota_f1 + f.ground_f1);
  return f;
}

F1Pair f1_pair(std::span<const EvalRecord> records) { return f1_pair(count_outcomes(records)); }

// ---------------------------------------------------------------------------
// ROC

RocCurve roc(std::span<const EvalRecord> records) {
  std::int64_t positives = 0;
  std::int64_t negatives = 0;
  for (const auto& r : records) {
    if (!std::isfinite(r.decision.nota_score)) throw Error("roc: non-finite confidence");
    r.label.is_nota() ? ++positives : ++negatives;
  }
  if (positives == 0 || negatives == 0) throw Error("roc: both classes must be present");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].decision.nota_score > records[b].decision.nota_score;
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  // Twice the area, in units of one (positive, negative) pair.
  std::int64_t area2 = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double threshold = records[order[k]].decision.nota_score;
    const std::int64_t tp_before = tp;
    const std::int64_t fp_before = fp;
    while (k < order.size() && records[order[k]].decision.nota_score == threshold) {
      records[order[k]].label.is_nota() ? ++tp : ++fp;
      ++k;
    }
    area2 += (fp - fp_before) * (tp + tp_before);
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives), threshold});
  }
  curve.auc = static_cast<double>(area2) /
              (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

// ---------------------------------------------------------------------------
// Histograms

double Histogram::bin_width() const {
  return bins() == 0 ? 0.0 : (hi - lo) / static_cast<double>(bins());
}

double Histogram::overlap_coefficient() const {
  const double n_nota = static_cast<double>(std::accumulate(nota.begin(), nota.end(), std::int64_t{0}));
  const double n_not = static_cast<double>(std::accumulate(not_nota.begin(), not_nota.end(), std::int64_t{0}));
  if (n_nota == 0.0 || n_not == 0.0) return 0.0;
  double overlap = 0.0;
  for (std::size_t b = 0; b < bins(); ++b) {
    overlap += std::min(static_cast<double>(nota[b]) / n_nota, static_cast<double>(not_nota[b]) / n_not);
  }
  return overlap;
}

Histogram histograms(std::span<const EvalRecord> records, std::size_t bins) {
  if (bins < 1) throw Error("histograms: bins must be >= 1");
  Histogram h;
  h.nota.assign(bins, 0);
  h.not_nota.assign(bins, 0);
  if (records.empty()) return h;
  h.lo = std::numeric_limits<double>::infinity();
  h.hi = -std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    if (!std::isfinite(r.decision.confidence)) throw Error("histograms: non-finite confidence");
    h.lo = std::min(h.lo, r.decision.confidence);
    h.hi = std::max(h.hi, r.decision.confidence);
  }
  const double span = h.hi - h.lo;
  for (const auto& r : records) {
    std::size_t b = 0;
    if (span > 0.0) {
      const double pos = (r.decision.confidence - h.lo) / span * static_cast<double>(bins);
      b = std::min(bins - 1, static_cast<std::size_t>(pos));
    }
    (r.label.is_nota() ? h.nota : h.not_nota)[b] += 1;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Reports

EvalReport build_report(std::span<const EvalRecord> records, std::size_t x, std::string model,
                        std::string detector, std::size_t bins) {
  EvalReport rep;
  rep.model = std::move(model);
  rep.detector = std::move(detector);
  rep.x = x;
  rep.counts = count_outcomes(records);
  if (auto r = recall_ratio(rep.counts)) {
    rep.recall = r->value();
  } else {
    rep.warnings.push_back("recall undefined: no samples with a ground truth");
  }
  rep.nota_accuracy = nota_accuracy_ratio(rep.counts).value();
  rep.f1 = f1_pair(rep.counts);
  if (!rep.f1.nota_f1_defined) rep.warnings.push_back("NOTA F1 undefined (zero denominator), reported as 0");
  if (!rep.f1.ground_f1_defined) rep.warnings.push_back("ground F1 undefined (zero denominator), reported as 0");
  if (rep.counts.tp + rep.counts.fn > 0 && rep.counts.fp + rep.counts.tn > 0) {
    RocCurve curve = roc(records);
    rep.auc = curve.auc;
    rep.roc = std::move(curve.points);
  } else {
    rep.warnings.push_back("ROC undefined: only one class present");
  }
  rep.histogram = histograms(records, bins);
  return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["detector"] = r.detector;
  j["x"] = r.x;
  j["counts"] = {{"tp", r.counts.tp}, {"fn", r.counts.fn}, {"fp", r.counts.fp},
                 {"tn", r.counts.tn}, {"d_correct", r.counts.d_correct}};
  j["recall"] = optional_json(r.recall);
  j["nota_accuracy"] = r.nota_accuracy;
  j["nota_f1"] = r.f1.nota_f1_defined ? nlohmann::json(r.f1.nota_f1) : nlohmann::json(nullptr);
  j["ground_f1"] = r.f1.ground_f1_defined ? nlohmann::json(r.f1.ground_f1) : nlohmann::json(nullptr);
  j["average_f1"] = r.f1.average;
  j["auc"] = optional_json(r.auc);
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.roc) {
    pts.push_back({p.fpr, p.tpr, std::isfinite(p.threshold) ? nlohmann::json(p.threshold) : nlohmann::json(nullptr)});
  }
  j["roc"] = std::move(pts);
  j["histogram"] = {{"lo", r.histogram.lo},
                    {"hi", r.histogram.hi},
                    {"nota", r.histogram.nota},
                    {"not_nota", r.histogram.not_nota}};
  j["warnings"] = r.warnings;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.detector = j.at("detector").get<std::string>();
    r.x = j.at("x").get<std::size_t>();
    const auto& c = j.at("counts");
    r.counts = {c.at("tp").get<std::int64_t>(), c.at("fn").get<std::int64_t>(),
                c.at("fp").get<std::int64_t>(), c.at("tn").get<std::int64_t>(),
                c.at("d_correct").get<std::int64_t>()};
    r.recall = optional_from(j.at("recall"));
    r.nota_accuracy = j.at("nota_accuracy").get<double>();
    r.f1.nota_f1_defined = !j.at("nota_f1").is_null();
    r.f1.nota_f1 = j.at("nota_f1").is_null() ? 0.0 : j.at("nota_f1").get<double>();
    r.f1.ground_f1_defined = !j.at("ground_f1").is_null();
    r.f1.ground_f1 = j.at("ground_f1").is_null() ? 0.0 : j.at("ground_f1").get<double>();
    r.f1.average = j.at("average_f1").get<double>();
    r.auc = optional_from(j.at("auc"));
    for (const auto& p : j.at("roc")) {
      r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                       p.at(2).is_null() ? std::numeric_limits<double>::infinity() : p.at(2).get<double>()});
    }
    const auto& h = j.at("histogram");
    r.histogram.lo = h.at("lo").get<double>();
    r.histogram.hi = h.at("hi").get<double>();
    r.histogram.nota = h.at("nota").get<std::vector<std::int64_t>>();
    r.histogram.not_nota = h.at("not_nota").get<std::vector<std::int64_t>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_csv_header() { return "model,detector,x,R,N,NF1,GF1,AvgF1"; }

ReportRow report_row(const EvalReport& r) {
  return {r.model, r.detector, r.x, r.recall, r.nota_accuracy, r.f1.nota_f1, r.f1.ground_f1, r.f1.average};
}

std::string report_csv_row(const EvalReport& r) {
  if (r.model.find(',') != std::string::npos || r.detector.find(',') != std::string::npos) {
    throw Error("report names must not contain commas");
  }
  std::string row = r.model + "," + r.detector + "," + std::to_string(r.x) + ",";
  row += r.recall ? fmt_double(*r.recall) : "";
  row += "," + fmt_double(r.nota_accuracy) + "," + fmt_double(r.f1.nota_f1) + "," +
         fmt_double(r.f1.ground_f1) + "," + fmt_double(r.f1.average);
  return row;
}

ReportRow parse_report_csv_row(const std::string& line) {
  auto f = split_csv(line);
  if (f.size() != 8) throw Error("report row must have 8 fields, got " + std::to_string(f.size()));
  ReportRow row;
  row.model = f[0];
  row.detector = f[1];
  row.x = static_cast<std::size_t>(std::stoull(f[2]));
  if (!f[3].empty()) row.recall = parse_double(f[3]);
  row.nota_accuracy = parse_double(f[4]);
  row.nota_f1 = parse_double(f[5]);
  row.ground_f1 = parse_double(f[6]);
  row.average_f1 = parse_double(f[7]);
  return row;
}

double appendix_average_f1(const EvalReport& a, const EvalReport& b) {
  return (a.f1.nota_f1 + a.f1.ground_f1 + b.f1.nota_f1 + b.f1.ground_f1) / 4.0;
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out << fmt_double(p.fpr) << ',' << fmt_double(p.tpr) << ','
        << (std::isfinite(p.threshold) ? fmt_double(p.threshold) : std::string("inf")) << '\n';
  }
}

void write_histogram_csv(const Histogram& h, std::ostream& out) {
  out << "bin,lo,hi,is_nota,not_nota\n";
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const double lo = h.lo + h.bin_width() * static_cast<double>(b);
    out << b << ',' << fmt_double(lo) << ',' << fmt_double(lo + h.bin_width()) << ',' << h.nota[b]
        << ',' << h.not_nota[b] << '\n';
  }
}

std::string roc_svg(const std::vector<RocPoint>& points, const std::string& title) {
  const int size = 320;
  const double pad = 40.0;
  const double plot = size - 2 * pad;
  std::string s = svg_open(size, size);
  s += svg_text(size / 2.0, 20, title);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#bbb\" stroke-dasharray=\"4\"/>\n",
                pad, pad, plot, plot, pad, pad + plot, pad + plot, pad);
  s += buf;
  s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", pad + p.fpr * plot, pad + (1.0 - p.tpr) * plot);
    s += buf;
  }
  s += "\"/>\n";
  s += svg_text(size / 2.0, size - 10, "false positive rate");
  s += svg_text(12, size / 2.0, "TPR", "start");
  s += "</svg>\n";
  return s;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  const int w = 480;
  const int ht = 300;
  const double pad = 40.0;
  std::string s = svg_open(w, ht);
  s += svg_text(w / 2.0, 20, title);
  std::int64_t peak = 1;
  for (std::size_t b = 0; b < h.bins(); ++b) peak = std::max({peak, h.nota[b], h.not_nota[b]});
  const double plot_w = w - 2 * pad;
  const double plot_h = ht - 2 * pad;
  const double bar = h.bins() ? plot_w / static_cast<double>(h.bins()) : plot_w;
  char buf[256];
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const double x0 = pad + bar * static_cast<double>(b);
    const double hn = plot_h * static_cast<double>(h.nota[b]) / static_cast<double>(peak);
    const double hg = plot_h * static_cast<double>(h.not_nota[b]) / static_cast<double>(peak);
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n"
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#ff7f0e\" fill-opacity=\"0.6\"/>\n",
                  x0, pad + plot_h - hn, bar, hn, x0, pad + plot_h - hg, bar, hg);
    s += buf;
  }
  s += svg_text(pad, ht - 12, fmt_short(h.lo), "start");
  s += svg_text(w - pad, ht - 12, fmt_short(h.hi), "end");
  s += svg_text(w / 2.0, ht - 12, "blue: isNOTA, orange: notNOTA");
  s += "</svg>\n";
  return s;
}

// ---------------------------------------------------------------------------
// Trends

TrendTable trend(std::span<const EvalReport> reports) {
  TrendTable t;
  std::map<std::string, std::map<std::size_t, double>> by_detector;
  for (const auto& r : reports) {
    t.xs.push_back(r.x);
    by_detector[r.detector][r.x] = r.f1.average;
  }
  std::sort(t.xs.begin(), t.xs.end());
  t.xs.erase(std::unique(t.xs.begin(), t.xs.end()), t.xs.end());
  if (t.xs.size() < 2) throw Error("trend: need reports at two or more candidate counts");
  for (const auto& [detector, values] : by_detector) {
    t.detectors.push_back(detector);
    std::vector<std::optional<double>> row;
    for (std::size_t x : t.xs) {
      auto it = values.find(x);
      row.push_back(it == values.end() ? std::nullopt : std::optional<double>(it->second));
    }
    t.average_f1.push_back(std::move(row));
  }
  return t;
}

void write_trend_csv(const TrendTable& t, std::ostream& out) {
  out << "detector";
  for (std::size_t x : t.xs) out << ",x=" << x;
  out << '\n';
  for (std::size_t d = 0; d < t.detectors.size(); ++d) {
    out << t.detectors[d];
    for (const auto& v : t.average_f1[d]) out << ',' << (v ? fmt_double(*v) : std::string());
    out << '\n';
  }
}

std::string trend_svg(const TrendTable& t, const std::string& title) {
  const int w = 560;
  const int ht = 320;
  const double pad = 50.0;
  const double plot_w = w - 2 * pad;
  const double plot_h = ht - 2 * pad - 20;
  std::string s = svg_open(w, ht);
  s += svg_text(w / 2.0, 20, title);
  const double group = plot_w / static_cast<double>(t.xs.size());
  const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(1, t.detectors.size()));
  char buf[256];
  std::snprintf(buf, sizeof(buf), "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                pad, pad + plot_h, pad + plot_w, pad + plot_h);
  s += buf;
  for (std::size_t xi = 0; xi < t.xs.size(); ++xi) {
    const double gx = pad + group * static_cast<double>(xi) + group * 0.1;
    for (std::size_t d = 0; d < t.detectors.size(); ++d) {
      const auto& v = t.average_f1[d][xi];
      if (!v) continue;
      const double bh = plot_h * std::clamp(*v, 0.0, 1.0);
      std::snprintf(buf, sizeof(buf), "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                    gx + bar * static_cast<double>(d), pad + plot_h - bh, bar, bh, kPalette[d % 8]);
      s += buf;
    }
    s += svg_text(gx + group * 0.4, pad + plot_h + 14, std::to_string(t.xs[xi]));
  }
  for (std::size_t d = 0; d < t.detectors.size(); ++d) {
    const double ly = ht - 24.0 + 0.0;
    const double lx = pad + 130.0 * static_cast<double>(d);
    std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                  lx, ly - 9, kPalette[d % 8]);
    s += buf;
    s += svg_text(lx + 14, ly, t.detectors[d], "start");
  }
  s += "</svg>\n";
  return s;
}

}  // namespace notakit
