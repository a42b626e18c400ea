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

#include "notakit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"

namespace notakit {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Four interleaved partial sums, combined in a fixed order.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

void check_tokens(const EncoderParams& params, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw Error("encode_sequence: empty token sequence");
  const auto vocab = params.dims().vocab_size;
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw Error("encode_sequence: token id " + std::to_string(t) + " >= vocab_size " +
                  std::to_string(vocab));
    }
  }
}

// One LSTM step. `gates` receives the activated i, f, g, o blocks.
void lstm_step(const ConstCellView& cell, std::size_t E, std::size_t H, const double* x,
               const double* h_prev, const double* c_prev, double* gates, double* c_out,
               double* h_out) {
  const std::size_t G = 4 * H;
  for (std::size_t r = 0; r < G; ++r) {
    double z = cell.bias[r] + dot(cell.w_input.data() + r * E, x, E) +
               dot(cell.w_recurrent.data() + r * H, h_prev, H);
    gates[r] = (r >= 2 * H && r < 3 * H) ? std::tanh(z) : sigmoid(z);
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double i = gates[j];
    const double f = gates[H + j];
    const double g = gates[2 * H + j];
    const double o = gates[3 * H + j];
    c_out[j] = f * c_prev[j] + i * g;
    h_out[j] = o * std::tanh(c_out[j]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

EncoderDims profile_dims(ModelProfile profile, std::size_t vocab_size) {
  if (profile == ModelProfile::kFull) return {vocab_size, 300, 512};
  return {vocab_size, 32, 64};
}

ModelProfile parse_model_profile(std::string_view text) {
  if (text == "desk") return ModelProfile::kDesk;
  if (text == "full") return ModelProfile::kFull;
  throw Error("unknown model profile '" + std::string(text) + "' (expected desk|full)");
}

EncoderParams::EncoderParams(EncoderDims dims) : dims_(dims) {
  if (dims.vocab_size == 0 || dims.d_emb == 0 || dims.d_hid == 0) {
    throw Error("encoder dimensions must be positive");
  }
  data_.assign(dims.vocab_size * dims.d_emb + 2 * cell_size(), 0.0);
}

EncoderParams EncoderParams::random_init(EncoderDims dims, std::uint64_t seed) {
  EncoderParams p(dims);
  Rng rng(derive_seed(seed, "encoder-init"));
  for (double& v : p.embedding()) v = rng.uniform(-0.1, 0.1);
  for (auto side : {EncoderSide::kContext, EncoderSide::kResponse}) {
    CellView c = p.cell(side);
    for (double& v : c.w_input) v = rng.uniform(-0.08, 0.08);
    for (double& v : c.w_recurrent) v = rng.uniform(-0.08, 0.08);
    for (std::size_t r = 0; r < c.bias.size(); ++r) {
      const bool forget = r >= dims.d_hid && r < 2 * dims.d_hid;
      c.bias[r] = forget ? 1.0 : rng.uniform(-0.08, 0.08);
    }
  }
  return p;
}

std::size_t EncoderParams::cell_size() const {
  const std::size_t G = 4 * dims_.d_hid;
  return G * dims_.d_emb + G * dims_.d_hid + G;
}

std::size_t EncoderParams::cell_offset(EncoderSide side) const {
  const std::size_t base = dims_.vocab_size * dims_.d_emb;
  return side == EncoderSide::kContext ? base : base + cell_size();
}

std::span<double> EncoderParams::embedding() {
  return std::span<double>(data_).first(dims_.vocab_size * dims_.d_emb);
}

std::span<const double> EncoderParams::embedding() const {
  return std::span<const double>(data_).first(dims_.vocab_size * dims_.d_emb);
}

std::span<double> EncoderParams::embedding_row(TokenId id) {
  return embedding().subspan(static_cast<std::size_t>(id) * dims_.d_emb, dims_.d_emb);
}

std::span<const double> EncoderParams::embedding_row(TokenId id) const {
  return embedding().subspan(static_cast<std::size_t>(id) * dims_.d_emb, dims_.d_emb);
}

CellView EncoderParams::cell(EncoderSide side) {
  const std::size_t G = 4 * dims_.d_hid;
  std::span<double> all = std::span<double>(data_).subspan(cell_offset(side), cell_size());
  return {all.first(G * dims_.d_emb), all.subspan(G * dims_.d_emb, G * dims_.d_hid), all.last(G)};
}

ConstCellView EncoderParams::cell(EncoderSide side) const {
  const std::size_t G = 4 * dims_.d_hid;
  std::span<const double> all = std::span<const double>(data_).subspan(cell_offset(side), cell_size());
  return {all.first(G * dims_.d_emb), all.subspan(G * dims_.d_emb, G * dims_.d_hid), all.last(G)};
}

void EncoderParams::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool EncoderParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

EncoderParams EncoderParams::with_nota_as_unk() const {
  EncoderParams copy = *this;
  if (dims_.vocab_size > static_cast<std::size_t>(Vocabulary::kNota)) {
    auto unk = embedding_row(Vocabulary::kUnk);
    auto nota = copy.embedding_row(Vocabulary::kNota);
    std::copy(unk.begin(), unk.end(), nota.begin());
  }
  return copy;
}

// ---------------------------------------------------------------------------
// Forward

std::vector<double> dropout_mask(std::size_t d, const DropoutSpec& spec) {
  if (!(spec.keep > 0.0 && spec.keep <= 1.0)) throw Error("dropout keep must be in (0, 1]");
  std::vector<double> mask(d, 1.0);
  if (spec.keep == 1.0) return mask;
  Rng rng(spec.seed);
  const double scale = 1.0 / spec.keep;
  for (double& m : mask) m = rng.bernoulli(spec.keep) ? scale : 0.0;
  return mask;
}

std::uint64_t sequence_mask_seed(std::uint64_t pass_seed, EncoderSide side,
                                 std::span<const TokenId> tokens) {
  const std::uint64_t tag = side == EncoderSide::kContext ? 0x63U : 0x72U;
  return mix_seed(mix_seed(pass_seed, tag), fnv1a(tokens));
}

std::vector<double> encode_sequence(const EncoderParams& params, EncoderSide side,
                                    std::span<const TokenId> tokens,
                                    std::span<const double> dropout_mask) {
  check_tokens(params, tokens);
  const std::size_t E = params.dims().d_emb;
  const std::size_t H = params.dims().d_hid;
  if (!dropout_mask.empty() && dropout_mask.size() != H) {
    throw Error("encode_sequence: dropout mask size mismatch");
  }
  const ConstCellView cell = params.cell(side);
  std::vector<double> gates(4 * H);
  std::vector<double> h(H, 0.0), c(H, 0.0), h_next(H), c_next(H);
  for (TokenId t : tokens) {
    lstm_step(cell, E, H, params.embedding_row(t).data(), h.data(), c.data(), gates.data(),
              c_next.data(), h_next.data());
    h.swap(h_next);
    c.swap(c_next);
  }
  if (!dropout_mask.empty()) {
    for (std::size_t j = 0; j < H; ++j) h[j] *= dropout_mask[j];
  }
  return h;
}

double score(std::span<const double> context_vec, std::span<const double> response_vec) {
  if (context_vec.size() != response_vec.size()) {
    throw Error("score: dimension mismatch (" + std::to_string(context_vec.size()) + " vs " +
                std::to_string(response_vec.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < context_vec.size(); ++k) s += context_vec[k] * response_vec[k];
  return s;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> exps(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) exps[i] = std::exp(logits[i] - m);
  std::vector<double> sorted = exps;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double total = 0.0;
  for (double e : sorted) total += e;
  for (double& e : exps) e /= total;
  return exps;
}

std::size_t ScoreVector::argmax() const {
  if (logits.empty()) throw Error("argmax of an empty score vector");
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::optional<std::size_t> ScoreVector::nota_index() const {
  for (std::size_t i = 0; i < is_nota.size(); ++i) {
    if (is_nota[i]) return i;
  }
  return std::nullopt;
}

ScoreVector make_score_vector(std::vector<double> logits, std::vector<bool> is_nota) {
  if (is_nota.empty()) is_nota.assign(logits.size(), false);
  if (is_nota.size() != logits.size()) throw Error("score vector flag count mismatch");
  ScoreVector sv;
  sv.probs = softmax(logits);
  sv.logits = std::move(logits);
  sv.is_nota = std::move(is_nota);
  return sv;
}

ScoreVector forward_sample(const EncoderParams& params, const EncodedSample& sample,
                           const std::optional<DropoutSpec>& dropout) {
  if (sample.candidates.empty()) throw Error("forward_sample: sample has no candidates");
  const std::size_t H = params.dims().d_hid;
  auto mask_for = [&](EncoderSide side, const IdSeq& tokens) -> std::vector<double> {
    if (!dropout) return {};
    return dropout_mask(H, {dropout->keep, sequence_mask_seed(dropout->seed, side, tokens)});
  };

  const auto ctx = encode_sequence(params, EncoderSide::kContext, sample.context,
                                   mask_for(EncoderSide::kContext, sample.context));
  std::vector<double> logits;
  std::vector<bool> flags;
  logits.reserve(sample.candidates.size());
  for (const auto& cand : sample.candidates) {
    const auto r = encode_sequence(params, EncoderSide::kResponse, cand,
                                   mask_for(EncoderSide::kResponse, cand));
    logits.push_back(score(ctx, r));
    flags.push_back(is_nota_candidate(cand));
  }
  return make_score_vector(std::move(logits), std::move(flags));
}

// ---------------------------------------------------------------------------
// Backpropagation through time

SequenceTrace encode_sequence_traced(const EncoderParams& params, EncoderSide side,
                                     std::span<const TokenId> tokens,
                                     std::span<const double> dropout_mask) {
  check_tokens(params, tokens);
  const std::size_t E = params.dims().d_emb;
  const std::size_t H = params.dims().d_hid;
  const std::size_t T = tokens.size();
  if (!dropout_mask.empty() && dropout_mask.size() != H) {
    throw Error("encode_sequence: dropout mask size mismatch");
  }
  SequenceTrace tr;
  tr.side = side;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.gates.assign(T * 4 * H, 0.0);
  tr.cells.assign((T + 1) * H, 0.0);
  tr.hidden.assign((T + 1) * H, 0.0);
  const ConstCellView cell = params.cell(side);
  for (std::size_t t = 0; t < T; ++t) {
    lstm_step(cell, E, H, params.embedding_row(tokens[t]).data(), &tr.hidden[t * H],
              &tr.cells[t * H], &tr.gates[t * 4 * H], &tr.cells[(t + 1) * H],
              &tr.hidden[(t + 1) * H]);
  }
  tr.output.assign(tr.hidden.end() - static_cast<std::ptrdiff_t>(H), tr.hidden.end());
  if (!dropout_mask.empty()) {
    tr.mask.assign(dropout_mask.begin(), dropout_mask.end());
    for (std::size_t j = 0; j < H; ++j) tr.output[j] *= tr.mask[j];
  }
  return tr;
}

void backprop_sequence(const EncoderParams& params, const SequenceTrace& trace,
                       std::span<const double> d_output, EncoderParams& grads) {
  const std::size_t E = params.dims().d_emb;
  const std::size_t H = params.dims().d_hid;
  const std::size_t G = 4 * H;
  const std::size_t T = trace.tokens.size();
  if (d_output.size() != H) throw Error("backprop_sequence: gradient size mismatch");

  const ConstCellView cell = params.cell(trace.side);
  CellView dcell = grads.cell(trace.side);

  std::vector<double> dh(H), dc_next(H, 0.0), dz(G);
  for (std::size_t j = 0; j < H; ++j) {
    dh[j] = trace.mask.empty() ? d_output[j] : d_output[j] * trace.mask[j];
  }

  for (std::size_t t = T; t-- > 0;) {
    const double* gates = &trace.gates[t * G];
    const double* c_prev = &trace.cells[t * H];
    const double* c_cur = &trace.cells[(t + 1) * H];
    const double* h_prev = &trace.hidden[t * H];
    for (std::size_t j = 0; j < H; ++j) {
      const double i = gates[j];
      const double f = gates[H + j];
      const double g = gates[2 * H + j];
      const double o = gates[3 * H + j];
      const double tc = std::tanh(c_cur[j]);
      const double dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
      dz[j] = dc * g * i * (1.0 - i);
      dz[H + j] = dc * c_prev[j] * f * (1.0 - f);
      dz[2 * H + j] = dc * i * (1.0 - g * g);
      dz[3 * H + j] = dh[j] * tc * o * (1.0 - o);
      dc_next[j] = dc * f;
    }

    const TokenId token = trace.tokens[t];
    const double* x = params.embedding_row(token).data();
    std::span<double> dx = grads.embedding_row(token);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t r = 0; r < G; ++r) {
      const double d = dz[r];
      dcell.bias[r] += d;
      double* dw_in = dcell.w_input.data() + r * E;
      const double* w_in = cell.w_input.data() + r * E;
      for (std::size_t k = 0; k < E; ++k) {
        dw_in[k] += d * x[k];
        dx[k] += d * w_in[k];
      }
      double* dw_rec = dcell.w_recurrent.data() + r * H;
      const double* w_rec = cell.w_recurrent.data() + r * H;
      for (std::size_t k = 0; k < H; ++k) {
        dw_rec[k] += d * h_prev[k];
        dh[k] += d * w_rec[k];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json tensor_json(std::span<const double> values) {
  return nlohmann::json(std::vector<double>(values.begin(), values.end()));
}

void read_tensor(const nlohmann::json& j, std::span<double> out, const std::string& name) {
  if (!j.is_array() || j.size() != out.size()) {
    throw Error("checkpoint tensor '" + name + "' has " + std::to_string(j.is_array() ? j.size() : 0) +
                " values, expected " + std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = j[i].get<double>();
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  const EncoderDims& d = ck.params.dims();
  j["format"] = "notakit-checkpoint";
  j["version"] = kCheckpointVersion;
  j["dims"] = {{"vocab_size", d.vocab_size}, {"d_emb", d.d_emb}, {"d_hid", d.d_hid}};
  j["vocab_fingerprint"] = hex64(ck.vocab_fingerprint);
  j["nota_trained"] = ck.nota_trained;
  j["epoch"] = ck.epoch;
  j["validation_recall"] = ck.validation_recall;
  j["objective"] = ck.objective;
  j["dropout_keep"] = ck.dropout_keep;
  j["embedding"] = tensor_json(ck.params.embedding());
  for (auto side : {EncoderSide::kContext, EncoderSide::kResponse}) {
    const ConstCellView c = ck.params.cell(side);
    j[side == EncoderSide::kContext ? "context_cell" : "response_cell"] = {
        {"w_input", tensor_json(c.w_input)},
        {"w_recurrent", tensor_json(c.w_recurrent)},
        {"bias", tensor_json(c.bias)}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<EncoderDims>& expected_dims,
                           const Vocabulary* expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.value("format", "") != "notakit-checkpoint") throw Error("not a notakit checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    EncoderDims dims{j.at("dims").at("vocab_size").get<std::size_t>(),
                     j.at("dims").at("d_emb").get<std::size_t>(),
                     j.at("dims").at("d_hid").get<std::size_t>()};
    if (expected_dims && !(*expected_dims == dims)) {
      throw Error("checkpoint dimensions do not match the configuration");
    }
    Checkpoint ck;
    ck.params = EncoderParams(dims);
    ck.vocab_fingerprint = std::stoull(j.at("vocab_fingerprint").get<std::string>(), nullptr, 16);
    if (expected_vocab) {
      if (expected_vocab->size() != dims.vocab_size ||
          expected_vocab->fingerprint() != ck.vocab_fingerprint) {
        throw Error("checkpoint was trained with a different vocabulary");
      }
    }
    ck.nota_trained = j.at("nota_trained").get<bool>();
    ck.epoch = j.at("epoch").get<std::size_t>();
    ck.validation_recall = j.at("validation_recall").get<double>();
    ck.objective = j.at("objective").get<std::string>();
    ck.dropout_keep = j.at("dropout_keep").get<double>();
    read_tensor(j.at("embedding"), ck.params.embedding(), "embedding");
    for (auto side : {EncoderSide::kContext, EncoderSide::kResponse}) {
      const std::string name = side == EncoderSide::kContext ? "context_cell" : "response_cell";
      CellView c = ck.params.cell(side);
      read_tensor(j.at(name).at("w_input"), c.w_input, name + ".w_input");
      read_tensor(j.at(name).at("w_recurrent"), c.w_recurrent, name + ".w_recurrent");
      read_tensor(j.at(name).at("bias"), c.bias, name + ".bias");
    }
    if (!ck.params.all_finite()) throw Error("checkpoint contains non-finite values");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed checkpoint: " + e.what());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace notakit
