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

#ifndef CIFT_DATA_HPP
#define CIFT_DATA_HPP

#include <string>
#include <utility>
#include <vector>

#include "cift/tensor.hpp"

namespace cift {

// One synthetic utterance. Features are frames x feat_dim row-major.
// spans are the generator's ground-truth frame ranges per target token.
struct Utterance {
  std::string id;
  int frames = 0;
  int feat_dim = 0;
  std::vector<double> features;
  std::vector<int> targets;
  std::vector<std::pair<int, int>> spans;  // [start, end) raw frames

  Tensor feature_tensor() const;
};

using Dataset = std::vector<Utterance>;

struct GenConfig {
  int vocab = 16;
  int feat_dim = 16;
  int count = 100;
  std::uint64_t seed = 1;
  int dwell_min = 6;
  int dwell_max = 10;
  double noise = 0.05;
  int len_min = 2;   // target tokens per utterance
  int len_max = 8;
};

// Prototype-vector task: each token id has a fixed prototype; an
// utterance repeats each target's prototype for a random dwell and adds
// isotropic noise. Deterministic under seed.
Dataset generate(const GenConfig& cfg);

// JSONL with one self-contained record per line; ".gz" suffix switches
// to gzip transparently.
void write_jsonl(const Dataset& data, const std::string& path);
Dataset read_jsonl(const std::string& path);

// Padded minibatch. Feature rows beyond an utterance's true length are
// the pad value 0.0; masks derive from the stored lengths.
struct Batch {
  Tensor features;  // [B x Tmax x d_f]
  std::vector<int> frames;
  std::vector<std::vector<int>> targets;
  std::vector<std::string> ids;
  int feat_dim = 0;
  int max_frames = 0;

  int size() const { return static_cast<int>(frames.size()); }
  Tensor utterance_features(int b) const;  // unpadded [frames[b] x d_f] view copy
};

std::vector<Batch> make_batches(const Dataset& data, int batch_size,
                                bool sort_by_length = true);

}  // namespace cift

#endif  // CIFT_DATA_HPP
