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

#ifndef CIFT_ERRORS_HPP
#define CIFT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cift {

// Shape / broadcast mismatches between tensors.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad static configuration (even kernel width, negative lambda, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset / file problems.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Token id outside the embedding table.
struct VocabError : std::runtime_error {
  explicit VocabError(const std::string& msg) : std::runtime_error(msg) {}
};

// An input no loss can be computed for (sum of CIF weights zero,
// CTC target longer than the frame budget allows). Callers skip the
// sample and count the event.
struct InfeasibleSampleError : std::runtime_error {
  explicit InfeasibleSampleError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// NaN/Inf where a finite number is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cift

#endif  // CIFT_ERRORS_HPP
