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

#include "cift/cif.hpp"

#include <cmath>

#include "cift/model.hpp"

namespace cift {

namespace {
// Threshold comparisons tolerate accumulated rounding; a crossing that is
// short of beta by less than this still fires.
constexpr double kFireEps = 1e-9;
}  // namespace

CifWeights predict_weights(const Tensor& encoded, const ModelParams& params,
                           const std::vector<char>& frame_mask) {
  const int t = encoded.shape()[0];
  Tensor h = conv1d(encoded, params.at("cif.conv.w"));
  h = h + params.at("cif.conv.b");
  Tensor a = matmul(h, params.at("cif.fc.w")) + params.at("cif.fc.b");
  a = sigmoid(reshape(a, {t}));

  CifWeights w;
  w.frame_mask = frame_mask.empty() ? std::vector<char>(t, 1) : frame_mask;
  if (static_cast<int>(w.frame_mask.size()) != t)
    throw DimensionError("predict_weights: frame mask length mismatch");
  bool any_masked = false;
  std::vector<double> maskv(t, 1.0);
  for (int i = 0; i < t; ++i)
    if (!w.frame_mask[i]) {
      maskv[i] = 0.0;
      any_masked = true;
    }
  w.alpha = any_masked ? mul(a, Tensor::from({t}, maskv)) : a;
  return w;
}

CifWeights scale_weights(const CifWeights& w, int target_len) {
  Tensor total = sum(w.alpha);
  CifWeights out = w;
  if (target_len == 0) {
    out.alpha_scaled = scale(w.alpha, 0.0);
    return out;
  }
  if (total.value() <= 0.0)
    throw InfeasibleSampleError(
        "scale_weights: sum of CIF weights is zero for nonempty target");
  Tensor factor = div(Tensor::scalar(static_cast<double>(target_len)), total);
  out.alpha_scaled = mul(w.alpha, factor);
  return out;
}

CifOutput integrate_and_fire(const Tensor& encoded, const CifWeights& w,
                             double beta, CifMode mode, int target_len,
                             double tail_threshold) {
  const int t_len = encoded.shape()[0];
  const int d = encoded.shape()[1];
  const bool train = mode == CifMode::kTrain;
  if (train && !w.alpha_scaled.has_value())
    throw ConfigError("integrate_and_fire: train mode requires scaled weights");
  if (train && target_len < 0)
    throw ConfigError("integrate_and_fire: train mode requires target length");
  const Tensor& alpha = train ? *w.alpha_scaled : w.alpha;
  if (static_cast<int>(alpha.size()) != t_len)
    throw DimensionError("integrate_and_fire: weight/frame count mismatch");

  CifOutput out;
  std::vector<Tensor> fired;
  Tensor acc = Tensor::scalar(0.0);
  Tensor cell = Tensor::zeros({d});
  double acc_v = 0.0;
  int range_start = 0;
  int last_valid = -1;

  for (int t = 0; t < t_len; ++t) {
    if (!w.frame_mask.empty() && !w.frame_mask[t]) continue;
    last_valid = t;
    Tensor h = row(encoded, t);
    Tensor rem = element(alpha, t);
    double rem_v = rem.value();
    while (acc_v + rem_v >= beta - kFireEps && rem_v > 0.0) {
      Tensor a1 = sub(Tensor::scalar(beta), acc);
      const double a1_v = beta - acc_v;
      fired.push_back(add(cell, mul(a1, h)));
      out.boundaries.push_back({t, a1_v, rem_v - a1_v});
      out.ranges.emplace_back(range_start, t);
      out.consumed_weight += beta;
      rem = sub(rem, a1);
      rem_v -= a1_v;
      acc = Tensor::scalar(0.0);
      acc_v = 0.0;
      cell = Tensor::zeros({d});
      range_start = t;
      if (rem_v < 0.0) break;  // rounding dust from the split
    }
    if (rem_v != 0.0 || acc_v != 0.0) {
      acc = add(acc, rem);
      acc_v += rem_v;
      cell = add(cell, mul(rem, h));
    }
  }

  out.residue_weight = acc_v;
  out.residue_embed = cell;

  if (train) {
    // Close the trailing cell so the fire count is exactly the target
    // length even when scaling leaves the last accumulation epsilon short.
    if (static_cast<int>(fired.size()) < target_len) {
      fired.push_back(cell);
      out.ranges.emplace_back(range_start, std::max(last_valid, range_start));
      out.consumed_weight += acc_v;
      out.residue_weight = 0.0;
      out.residue_embed = Tensor::zeros({d});
    }
    if (static_cast<int>(fired.size()) != target_len)
      throw NumericError("integrate_and_fire: scaled mode fired " +
                         std::to_string(fired.size()) + " cells, expected " +
                         std::to_string(target_len));
  } else if (acc_v >= tail_threshold) {
    fired.push_back(div(cell, acc));
    out.ranges.emplace_back(range_start, std::max(last_valid, range_start));
  }

  out.fire_count = static_cast<int>(fired.size());
  if (!fired.empty()) out.fired = stack_rows(fired);
  return out;
}

Tensor quantity_loss(const CifWeights& w, int target_len) {
  return absval(
      sub(sum(w.alpha), Tensor::scalar(static_cast<double>(target_len))));
}

Tensor funnel_cif(const Tensor& fired, const Tensor& encoded,
                  const ModelParams& params,
                  const std::vector<char>& frame_mask) {
  const int u = fired.shape()[0];
  const int t = encoded.shape()[0];
  if (u == 0) return fired;
  Tensor q = matmul(fired, params.at("funnel.wq"));
  Tensor k = matmul(encoded, params.at("funnel.wk"));
  Tensor v = matmul(encoded, params.at("funnel.wv"));
  Tensor att;
  if (!frame_mask.empty()) {
    if (static_cast<int>(frame_mask.size()) != t)
      throw DimensionError("funnel_cif: frame mask length mismatch");
    std::vector<double> m(static_cast<std::size_t>(u) * t);
    for (int r = 0; r < u; ++r)
      for (int c = 0; c < t; ++c)
        m[static_cast<std::size_t>(r) * t + c] = frame_mask[c] ? 1.0 : 0.0;
    Tensor mask = Tensor::from({u, t}, std::move(m));
    att = attention(q, k, v, &mask);
  } else {
    att = attention(q, k, v);
  }
  return add(fired, matmul(att, params.at("funnel.wo")));
}

Tensor context_blocks(const Tensor& fired, const ModelParams& params) {
  Tensor x = fired;
  for (int i = 0; i < params.cfg.context_layers; ++i)
    x = transformer_layer(x, params, "ctx.L" + std::to_string(i));
  return x;
}

}  // namespace cift
