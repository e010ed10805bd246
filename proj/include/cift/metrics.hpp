// Copyright 2026 The CIF-T Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CIFT_METRICS_HPP
#define CIFT_METRICS_HPP

#include <vector>

namespace cift {

struct EditStats {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int distance() const { return substitutions + insertions + deletions; }
};

// Levenshtein alignment of hypothesis against reference with operation
// counts (S/I/D resolved by backtrace; ties prefer substitution).
EditStats edit_align(const std::vector<int>& ref, const std::vector<int>& hyp);

}  // namespace cift

#endif  // CIFT_METRICS_HPP
