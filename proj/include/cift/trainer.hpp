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

#ifndef CIFT_TRAINER_HPP
#define CIFT_TRAINER_HPP

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cift/data.hpp"
#include "cift/losses.hpp"
#include "cift/model.hpp"

namespace cift {

struct OptimizerConfig {
  double lr_peak = 1e-3;
  int warmup = 100;  // linear warmup, then inverse-sqrt decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // 0 disables
};

struct RunConfig {
  ModelConfig model;
  GenConfig gen;
  OptimizerConfig opt;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.3;
  std::uint64_t seed = 1;
  int steps = 1000;
  int batch_size = 16;
  std::string train_path;
  std::string eval_path;
  std::string checkpoint_path;
  std::string metrics_path;
  double mem_cap_mb = 256.0;
  bool log_wall_time = true;  // off for byte-stable logs

  void validate() const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);

// Adam with linear-warmup / inverse-sqrt schedule.
class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) {}
  // step_index is 1-based; returns the pre-clip global gradient norm.
  double step(ModelParams& params, int step_index);
  double lr_at(int step_index) const;

 private:
  OptimizerConfig cfg_;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Per-utterance forward pass producing the combined training loss.
struct ForwardResult {
  LossBreakdown loss;
  int fire_count = 0;
  bool ctc_skipped = false;
};

ForwardResult utterance_loss(const Tensor& features,
                             const std::vector<int>& targets,
                             const ModelParams& params, double lambda1,
                             double lambda2, double lambda3);

struct TrainResult {
  int steps_done = 0;
  int skipped_samples = 0;   // degenerate / infeasible utterances
  int ctc_skipped = 0;
  bool aborted_on_nan = false;
  double final_loss = 0.0;
};

// Deterministic single-threaded loop. Appends one JSON line per step to
// metrics_out (if given). On a NaN loss the last finite parameter state
// is restored into `params` before returning.
TrainResult train(const RunConfig& cfg, ModelParams& params,
                  const Dataset& data, std::ostream* metrics_out = nullptr);

struct EvalReport {
  double cer = 0.0;
  int substitutions = 0, insertions = 0, deletions = 0;
  int ref_len = 0;
  int utterances = 0;
  int empty_refs = 0;
  double mean_fire_err = 0.0;          // |U_f - S| at inference
  double fire_err_within_one = 0.0;    // fraction of utterances
};

EvalReport evaluate(const ModelParams& params, const Dataset& data);

struct DecodedUtterance {
  std::string id;
  DecodeResult result;
};

std::vector<DecodedUtterance> decode_dataset(const ModelParams& params,
                                             const Dataset& data);

// ---- memory benchmark (fusion + classifier + loss stage) ----
struct BenchResult {
  // analytic fusion-stage activation counts per batch element
  double analytic_rnnt = 0.0;
  double analytic_cift = 0.0;
  double analytic_ratio = 0.0;
  std::int64_t peak_bytes_rnnt_b1 = 0;
  std::int64_t peak_bytes_cift_b1 = 0;
  int max_batch_rnnt = 0;
  int max_batch_cift = 0;
};

BenchResult bench_mem(int frames, int target_len, int vocab, int dim,
                      std::int64_t cap_bytes, std::uint64_t seed);

// ---- predictor re-init probe ----
struct ReinitReport {
  double cer_before = 0.0;
  std::vector<double> cer_after;  // one per re-init seed
  double mean_delta() const;
};

ReinitReport reinit_probe(const ModelParams& trained, const Dataset& data,
                          const std::vector<std::uint64_t>& seeds);

// ---- gradient check over every parameter group ----
struct GroupCheck {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

struct GradCheckSuiteReport {
  std::vector<GroupCheck> groups;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Finite-difference check of d(total loss)/d(param) for every named
// parameter group on one tiny utterance. Coordinates are subsampled
// deterministically (up to max_coords per group).
GradCheckSuiteReport gradcheck_model(ModelParams& params,
                                     const Tensor& features,
                                     const std::vector<int>& targets,
                                     double lambda1, double lambda2,
                                     double lambda3, double tolerance = 1e-3,
                                     std::size_t max_coords = 24);

}  // namespace cift

#endif  // CIFT_TRAINER_HPP
