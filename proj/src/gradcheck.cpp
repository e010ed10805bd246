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

#include "cift/gradcheck.hpp"

#include <cmath>
#include <numeric>

namespace cift {

GradCheckReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, Tensor x, double step,
    double tolerance, const std::vector<std::size_t>& indices) {
  // analytic gradient
  x.zero_grad();
  Tensor loss = f(x);
  backward(loss);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  std::vector<std::size_t> idx = indices;
  if (idx.empty()) {
    idx.resize(x.size());
    std::iota(idx.begin(), idx.end(), 0);
  }

  GradCheckReport rep;
  rep.checked = idx.size();
  auto data = x.mutable_data();
  for (std::size_t i : idx) {
    const double orig = data[i];
    data[i] = orig + step;
    const double fp = f(x).value();
    data[i] = orig - step;
    const double fm = f(x).value();
    data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double e = rel_err(analytic[i], numeric);
    if (e > rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

}  // namespace cift
