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

#ifndef CIFT_CIF_HPP
#define CIFT_CIF_HPP

#include <optional>
#include <vector>

#include "cift/tensor.hpp"

namespace cift {

struct ModelParams;  // model.hpp

// Per-frame integrate-and-fire weights. alpha is the raw sigmoid output
// in (0,1); alpha_scaled exists only after scale_weights() and is what
// training-mode integration consumes.
struct CifWeights {
  Tensor alpha;                  // [T]
  std::optional<Tensor> alpha_scaled;  // [T]
  std::vector<char> frame_mask;  // 1 = valid frame
};

// One threshold crossing: frame where the weight was split, and the two
// pieces (a1 completes the closing cell, a2 seeds the next one).
struct CifBoundary {
  int frame;
  double a1;
  double a2;
};

struct CifOutput {
  Tensor fired;                       // [U_f x d]; undefined when U_f == 0
  std::vector<CifBoundary> boundaries;
  std::vector<std::pair<int, int>> ranges;  // [first, last] frame per cell
  Tensor residue_embed;               // [d] unnormalized leftover sum
  double residue_weight = 0.0;
  double consumed_weight = 0.0;       // total weight inside fired cells
  int fire_count = 0;
};

enum class CifMode { kTrain, kInfer };

// sigmoid(FC(Conv(H))) per frame; masked frames are forced to exactly 0
// after the sigmoid. Conv width 3, same padding.
CifWeights predict_weights(const Tensor& encoded, const ModelParams& params,
                           const std::vector<char>& frame_mask = {});

// alpha' = alpha * S_tilde / sum(alpha), summed over unmasked frames only.
// Throws InfeasibleSampleError when sum(alpha) == 0 and S_tilde > 0.
CifWeights scale_weights(const CifWeights& w, int target_len);

// Forward accumulation with threshold beta. Train mode consumes
// alpha_scaled and closes the last cell so fire_count == target_len;
// infer mode consumes alpha and fires the residue (normalized by its
// weight) iff residue >= tail_threshold. Differentiable w.r.t. both the
// frames and the weights.
CifOutput integrate_and_fire(const Tensor& encoded, const CifWeights& w,
                             double beta, CifMode mode, int target_len = -1,
                             double tail_threshold = 0.5);

// |sum(alpha) - S_tilde| on the UNSCALED weights.
Tensor quantity_loss(const CifWeights& w, int target_len);

// C' = C + Attention(q=C, kv=H), single head, residual.
Tensor funnel_cif(const Tensor& fired, const Tensor& encoded,
                  const ModelParams& params,
                  const std::vector<char>& frame_mask = {});

// N self-attention + feed-forward layers (pre-norm, residual) over the
// fired sequence. N == 0 is the identity.
Tensor context_blocks(const Tensor& fired, const ModelParams& params);

}  // namespace cift

#endif  // CIFT_CIF_HPP
