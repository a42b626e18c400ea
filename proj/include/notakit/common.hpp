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

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace notakit {

/// Base exception for every recoverable failure in the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a configuration has one or more invalid entries. Carries every
/// violation, not only the first one found.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Which flavour of candidate score a detector or feature set consumes.
enum class ScoreKind { kLogits, kSoftmax };

std::string_view to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view text);

// 64-bit FNV-1a. Used for content hashes in manifests and for vocabulary
// fingerprints; not a cryptographic hash.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::span<const std::int32_t> values,
                    std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// SplitMix64 finalizer. Mixes a base seed with a tag into an independent
/// stream seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);

/// Derive a named sub-seed. When seed auditing is on, every derivation is
/// logged to the audit sink.
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t index = 0);

/// Global audit switch: when enabled, derive_seed() appends one line per call
/// to the collected log.
void set_seed_audit(bool enabled);
std::vector<std::string> take_seed_audit_log();

/// Seeded random source with platform-independent draws. The standard
/// distributions are implementation-defined, so integer/real/shuffle draws
/// are built directly on the raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace notakit
