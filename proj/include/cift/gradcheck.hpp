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

#ifndef CIFT_GRADCHECK_HPP
#define CIFT_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "cift/tensor.hpp"

namespace cift {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
  std::size_t checked = 0;
};

// Central-difference check of d f / d x against the analytic gradient.
// f must be a pure scalar-valued function of x (it may close over other
// tensors). `indices` empty means every coordinate.
GradCheckReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, Tensor x,
    double step = 1e-5, double tolerance = 1e-4,
    const std::vector<std::size_t>& indices = {});

// Relative error convention shared by all checks.
inline double rel_err(double a, double b) {
  double denom = std::max(std::abs(a) + std::abs(b), 1e-6);
  return std::abs(a - b) / denom;
}

}  // namespace cift

#endif  // CIFT_GRADCHECK_HPP
