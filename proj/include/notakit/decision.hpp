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

#include <cstddef>
#include <optional>

namespace notakit {

/// Output of a NOTA detector on one sample.
///
/// `confidence` is the detector's own score (max logit/probability, LogReg
/// probability of a present ground truth, or score variance). `nota_score`
/// is the same signal oriented so that larger values mean "more NOTA-like";
/// ROC analysis uses it.
struct Decision {
  std::optional<std::size_t> candidate;  // empty => NOTA
  double confidence = 0.0;
  double nota_score = 0.0;

  bool is_nota() const { return !candidate.has_value(); }

  static Decision nota(double confidence, double nota_score) {
    return {std::nullopt, confidence, nota_score};
  }
  static Decision pick(std::size_t index, double confidence, double nota_score) {
    return {index, confidence, nota_score};
  }
};

}  // namespace notakit
