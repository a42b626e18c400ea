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

#include "notakit/common.hpp"

#include <cstdio>

namespace notakit {

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::string out = "invalid configuration";
  for (const auto& v : violations) {
    out += "; ";
    out += v;
  }
  return out;
}

bool g_audit_enabled = false;
std::vector<std::string> g_audit_log;

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::kLogits ? "logits" : "softmax";
}

ScoreKind parse_score_kind(std::string_view text) {
  if (text == "logits") return ScoreKind::kLogits;
  if (text == "softmax") return ScoreKind::kSoftmax;
  throw Error("unknown score kind '" + std::string(text) + "' (expected logits|softmax)");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t fnv1a(std::span<const std::int32_t> values, std::uint64_t state) {
  for (std::int32_t v : values) {
    auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      state ^= (u >> (8 * b)) & 0xffU;
      state *= 0x100000001b3ULL;
    }
  }
  return state;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t index) {
  std::uint64_t seed = mix_seed(mix_seed(base, fnv1a(purpose)), index);
  if (g_audit_enabled) {
    g_audit_log.push_back(std::string(purpose) + "[" + std::to_string(index) +
                          "] base=" + std::to_string(base) + " -> " + std::to_string(seed));
  }
  return seed;
}

void set_seed_audit(bool enabled) {
  g_audit_enabled = enabled;
  if (!enabled) g_audit_log.clear();
}

std::vector<std::string> take_seed_audit_log() {
  std::vector<std::string> out;
  out.swap(g_audit_log);
  return out;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below called with n = 0");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

}  // namespace notakit
