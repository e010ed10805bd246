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

#ifndef CIFT_LOSSES_HPP
#define CIFT_LOSSES_HPP

#include <vector>

#include "cift/tensor.hpp"

namespace cift {

// Per-sample objective terms plus the weighted combination. The scalar
// fields are plain values for logging; `total` carries the graph.
struct LossBreakdown {
  double joint_ce = 0.0;
  double lm_ce = 0.0;
  double ctc = 0.0;
  double quantity = 0.0;
  double rnnt = 0.0;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 0.3;
  double total_value = 0.0;
  Tensor total;
  bool baseline = false;  // true when the rnnt term replaces joint_ce
};

struct LossParts {
  Tensor joint_ce;  // any of these may be undefined (term absent)
  Tensor lm_ce;
  Tensor quantity;
  Tensor ctc;
  Tensor rnnt;
};

// Mean over u of -log_softmax(logits_u)[target_u]. U == 0 contributes 0.
Tensor joint_ce(const Tensor& logits, const std::vector<int>& targets);
// Next-token CE on the predictor path; same arithmetic as joint_ce.
Tensor lm_ce(const Tensor& predictor_logits, const std::vector<int>& targets);

// -log p(targets | logits) by the log-space forward algorithm over the
// blank-extended label sequence. logits: [T x (V+1)], blank = last index.
// Throws InfeasibleSampleError when T is too short for the target.
Tensor ctc_loss(const Tensor& logits, const std::vector<int>& targets,
                int blank);

// -log of the path sum over all monotone transducer alignments.
// logits: [T x (U+1) x (V+1)], blank = last index. Gradient via the
// forward-backward occupancy recursion.
Tensor rnnt_loss(const Tensor& logits, const std::vector<int>& targets,
                 int blank);

enum class PathKind { kCtc, kRnnt };

// Exact -log path-probability by exhaustive enumeration in plain double
// arithmetic; independent of the DP code paths. Refuses instances with
// too many paths (ConfigError).
double enumerate_paths_oracle(const Tensor& logits,
                              const std::vector<int>& targets, PathKind kind,
                              int blank);

// total = joint + l1*lm + l2*quantity + l3*ctc, or for the baseline
// (parts.rnnt defined) total = rnnt + l1*lm + l3*ctc.
LossBreakdown combine(const LossParts& parts, double lambda1, double lambda2,
                      double lambda3);

}  // namespace cift

#endif  // CIFT_LOSSES_HPP
