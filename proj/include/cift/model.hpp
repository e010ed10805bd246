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

#ifndef CIFT_MODEL_HPP
#define CIFT_MODEL_HPP

#include <map>
#include <string>
#include <vector>

#include "cift/cif.hpp"
#include "cift/tensor.hpp"

namespace cift {

enum class ModelMode { kCifT, kRnntBaseline };

struct ModelConfig {
  int feat_dim = 16;      // raw feature dim d_f
  int model_dim = 64;     // d
  int embed_dim = 32;     // reduced predictor embedding d_e
  int vocab = 16;         // V, real symbols only; blank lives in V+1 heads
  int heads = 2;
  int encoder_layers = 2;
  int context_layers = 2;
  int ffn_dim = 128;
  int bilinear_rank = 0;  // 0 -> model_dim / 2
  double beta = 1.0;
  double tail_threshold = 0.5;
  ModelMode mode = ModelMode::kCifT;

  int rank() const { return bilinear_rank > 0 ? bilinear_rank : model_dim / 2; }
  int bos_id() const { return vocab; }    // outside vocab, embedded only
  int blank_id() const { return vocab; }  // index V of the V+1-way heads
  void validate() const;
};

// Named parameter collection. Iteration order (std::map) is the
// checkpoint and optimizer order, so it is deterministic.
struct ModelParams {
  ModelConfig cfg;
  std::map<std::string, Tensor> tensors;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  void zero_grad();
  bool all_finite() const;

  // Re-randomizes only the predictor tensors ("pred.*"); used by the
  // re-init probe.
  void reinit_predictor(std::uint64_t seed);
};

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<double> step_top1;   // probability of the emitted symbol
  std::vector<int> boundaries;     // fired frame indices (encoder frames)
};

// Two stride-2 convs (4x temporal reduction) + N pre-norm
// attention/feed-forward layers. features: [T0 x d_f] -> [T x d] with
// T = ceil(ceil(T0/2)/2).
Tensor encode(const Tensor& features, const ModelParams& params);

// Teacher-forced predictor: ids is the BOS-prefixed token sequence.
// Reduced embedding -> projection -> norm, one output row per id.
Tensor predict(const std::vector<int>& ids, const ModelParams& params);

// Gating + low-rank bilinear pooling fusion of length-aligned acoustic
// (c) and semantic (z) rows, with shortcut and tanh.
Tensor ugbp_join(const Tensor& c, const Tensor& z, const ModelParams& params);

// Vanilla broadcast transducer joint:
// logits[t,u,:] = W_o tanh(W_1 h_t + W_2 z_u + b), vocab includes blank.
Tensor rnnt_join_baseline(const Tensor& encoded, const Tensor& z,
                          const ModelParams& params);

// Classifier heads.
Tensor classifier_logits(const Tensor& joint_out, const ModelParams& params);
Tensor ctc_logits(const Tensor& encoded, const ModelParams& params);
Tensor lm_logits(const Tensor& z, const ModelParams& params);

DecodeResult greedy_decode_cift(const Tensor& features,
                                const ModelParams& params, int max_len = 256);
DecodeResult greedy_decode_rnnt(const Tensor& features,
                                const ModelParams& params,
                                int max_symbols_per_frame = 3);

// Shared layer block: x + Attn(LN(x)) then + FFN(LN(x)), multi-head.
// Exposed because encoder and context blocks use the same shape.
Tensor transformer_layer(const Tensor& x, const ModelParams& params,
                         const std::string& prefix);

}  // namespace cift

#endif  // CIFT_MODEL_HPP
