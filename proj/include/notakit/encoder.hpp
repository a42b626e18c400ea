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

// Dual LSTM encoder: one cell for contexts, one for responses, a shared
// embedding table, and a dot-product match score.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "notakit/common.hpp"
#include "notakit/corpus.hpp"

namespace notakit {

struct EncoderDims {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 32;
  std::size_t d_hid = 64;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// Model size presets. Desk is the default; full mirrors the published setup.
enum class ModelProfile { kDesk, kFull };
EncoderDims profile_dims(ModelProfile profile, std::size_t vocab_size);
ModelProfile parse_model_profile(std::string_view text);

enum class EncoderSide { kContext, kResponse };

/// Read-only view of one LSTM cell. Gate blocks are stacked in the order
/// input, forget, cell, output; every matrix is row-major.
struct ConstCellView {
  std::span<const double> w_input;      // [4H x E]
  std::span<const double> w_recurrent;  // [4H x H]
  std::span<const double> bias;         // [4H]
};

struct CellView {
  std::span<double> w_input;
  std::span<double> w_recurrent;
  std::span<double> bias;
  operator ConstCellView() const { return {w_input, w_recurrent, bias}; }
};

/// All trainable parameters in one flat, row-major buffer:
/// embedding [V x E], then the context cell, then the response cell.
/// Gradient buffers use the same type.
class EncoderParams {
 public:
  EncoderParams() = default;
  /// Zero-filled.
  explicit EncoderParams(EncoderDims dims);

  /// Uniform [-0.1, 0.1] embeddings, uniform [-0.08, 0.08] weights and
  /// biases, forget-gate biases at 1.0.
  static EncoderParams random_init(EncoderDims dims, std::uint64_t seed);

  const EncoderDims& dims() const { return dims_; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::size_t parameter_count() const { return data_.size(); }

  std::span<double> embedding();
  std::span<const double> embedding() const;
  std::span<double> embedding_row(TokenId id);
  std::span<const double> embedding_row(TokenId id) const;
  CellView cell(EncoderSide side);
  ConstCellView cell(EncoderSide side) const;

  void set_zero();
  bool all_finite() const;

  /// Copy whose _NOTA embedding row equals the _UNK row. Applied at inference
  /// for models that never saw _NOTA in training.
  EncoderParams with_nota_as_unk() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

 private:
  std::size_t cell_offset(EncoderSide side) const;
  std::size_t cell_size() const;

  EncoderDims dims_;
  std::vector<double> data_;
};

/// Inverted dropout on an encoder's output: each hidden unit is kept with
/// probability `keep` and scaled by 1/keep.
struct DropoutSpec {
  double keep = 0.5;
  std::uint64_t seed = 0;
};

/// Mask values are 0 or 1/keep. Deterministic in (d, keep, seed).
std::vector<double> dropout_mask(std::size_t d, const DropoutSpec& spec);

/// Per-sequence mask seed. Keyed on the sequence content, not its position,
/// so candidate order never changes which mask a candidate receives.
std::uint64_t sequence_mask_seed(std::uint64_t pass_seed, EncoderSide side, std::span<const TokenId> tokens);

/// Final hidden state of one cell run left-to-right over `tokens`. If a mask
/// is given it multiplies the returned vector elementwise.
std::vector<double> encode_sequence(const EncoderParams& params, EncoderSide side,
                                    std::span<const TokenId> tokens,
                                    std::span<const double> dropout_mask = {});

/// Exact dot product, summed in index order.
double score(std::span<const double> context_vec, std::span<const double> response_vec);

/// Per-candidate scores for one sample.
struct ScoreVector {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<bool> is_nota;

  std::size_t size() const { return logits.size(); }
  const std::vector<double>& scores(ScoreKind kind) const {
    return kind == ScoreKind::kLogits ? logits : probs;
  }
  /// Index of the maximal logit; ties resolve to the lowest index.
  std::size_t argmax() const;
  /// Position of the _NOTA candidate, if any.
  std::optional<std::size_t> nota_index() const;
};

/// Softmax with max subtraction. The normalizer is summed in descending
/// order of the exponentials so the result does not depend on input order.
std::vector<double> softmax(std::span<const double> logits);

ScoreVector make_score_vector(std::vector<double> logits, std::vector<bool> is_nota);

/// Encodes the context once and every candidate, then scores each pair.
/// With dropout, each encoded sequence gets its own mask derived from
/// `dropout->seed` and the sequence content.
ScoreVector forward_sample(const EncoderParams& params, const EncodedSample& sample,
                           const std::optional<DropoutSpec>& dropout = std::nullopt);

/// Activations cached by a traced forward pass, for backpropagation.
struct SequenceTrace {
  EncoderSide side = EncoderSide::kContext;
  std::vector<TokenId> tokens;
  std::vector<double> gates;   // [T x 4H] post-activation i, f, g, o
  std::vector<double> cells;   // [(T+1) x H], row 0 is the zero state
  std::vector<double> hidden;  // [(T+1) x H], row 0 is the zero state
  std::vector<double> mask;    // empty when dropout is off
  std::vector<double> output;  // final hidden state after masking
};

SequenceTrace encode_sequence_traced(const EncoderParams& params, EncoderSide side,
                                     std::span<const TokenId> tokens,
                                     std::span<const double> dropout_mask = {});

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
void backprop_sequence(const EncoderParams& params, const SequenceTrace& trace,
                       std::span<const double> d_output, EncoderParams& grads);

/// Checkpoint container: versioned JSON with dimensions, vocabulary
/// fingerprint and every tensor row-major.
struct Checkpoint {
  EncoderParams params;
  std::uint64_t vocab_fingerprint = 0;
  bool nota_trained = false;
  std::size_t epoch = 0;
  double validation_recall = 0.0;
  std::string objective;
  double dropout_keep = 1.0;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Validates tensor sizes against the stored dimensions and, when given,
/// the expected dimensions and vocabulary.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<EncoderDims>& expected_dims = std::nullopt,
                           const Vocabulary* expected_vocab = nullptr);

}  // namespace notakit
