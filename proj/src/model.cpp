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

#include "cift/model.hpp"

#include <algorithm>
#include <cmath>

namespace cift {

void ModelConfig::validate() const {
  if (vocab < 2) throw ConfigError("vocab must be >= 2");
  if (model_dim < 1 || embed_dim < 1 || feat_dim < 1)
    throw ConfigError("dimensions must be positive");
  if (heads < 1 || model_dim % heads != 0)
    throw ConfigError("model_dim must be divisible by heads");
  if (encoder_layers < 0 || context_layers < 0)
    throw ConfigError("layer counts must be non-negative");
  if (beta <= 0.0) throw ConfigError("beta must be positive");
  if (bilinear_rank < 0) throw ConfigError("bilinear_rank must be >= 0");
}

namespace {

void add_param(ModelParams& p, const std::string& name, std::vector<int> shape,
               Rng& rng, double scl) {
  p.tensors.emplace(name, randn(std::move(shape), rng, scl, true));
}

void add_layer(ModelParams& p, const std::string& prefix, int d, int ffn,
               Rng& rng) {
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  p.tensors.emplace(prefix + ".ln1.g", Tensor::full({d}, 1.0, true));
  p.tensors.emplace(prefix + ".ln1.b", Tensor::zeros({d}, true));
  add_param(p, prefix + ".wq", {d, d}, rng, ws);
  add_param(p, prefix + ".wk", {d, d}, rng, ws);
  add_param(p, prefix + ".wv", {d, d}, rng, ws);
  add_param(p, prefix + ".wo", {d, d}, rng, ws);
  p.tensors.emplace(prefix + ".ln2.g", Tensor::full({d}, 1.0, true));
  p.tensors.emplace(prefix + ".ln2.b", Tensor::zeros({d}, true));
  add_param(p, prefix + ".ffn.w1", {d, ffn}, rng, ws);
  p.tensors.emplace(prefix + ".ffn.b1", Tensor::zeros({ffn}, true));
  add_param(p, prefix + ".ffn.w2", {ffn, d}, rng,
            1.0 / std::sqrt(static_cast<double>(ffn)));
  p.tensors.emplace(prefix + ".ffn.b2", Tensor::zeros({d}, true));
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  Rng rng(seed);
  const int d = cfg.model_dim;
  const int df = cfg.feat_dim;
  const int de = cfg.embed_dim;
  const int v = cfg.vocab;
  const int k = cfg.rank();
  const double wd = 1.0 / std::sqrt(static_cast<double>(d));
  const double wf = 1.0 / std::sqrt(static_cast<double>(df));

  // downsampling front-end
  add_param(p, "enc.conv1.w", {3, df, d}, rng, wf / std::sqrt(3.0));
  p.tensors.emplace("enc.conv1.b", Tensor::zeros({d}, true));
  add_param(p, "enc.conv2.w", {3, d, d}, rng, wd / std::sqrt(3.0));
  p.tensors.emplace("enc.conv2.b", Tensor::zeros({d}, true));
  for (int i = 0; i < cfg.encoder_layers; ++i)
    add_layer(p, "enc.L" + std::to_string(i), d, cfg.ffn_dim, rng);
  p.tensors.emplace("enc.ln.g", Tensor::full({d}, 1.0, true));
  p.tensors.emplace("enc.ln.b", Tensor::zeros({d}, true));

  // predictor: reduced embedding + projection (+ norm); BOS row included
  add_param(p, "pred.embed", {v + 1, de}, rng,
            1.0 / std::sqrt(static_cast<double>(de)));
  add_param(p, "pred.proj.w", {de, d}, rng,
            1.0 / std::sqrt(static_cast<double>(de)));
  p.tensors.emplace("pred.proj.b", Tensor::zeros({d}, true));
  p.tensors.emplace("pred.ln.g", Tensor::full({d}, 1.0, true));
  p.tensors.emplace("pred.ln.b", Tensor::zeros({d}, true));

  // auxiliary heads (both modes)
  add_param(p, "ctc.w", {d, v + 1}, rng, wd);
  p.tensors.emplace("ctc.b", Tensor::zeros({v + 1}, true));
  add_param(p, "lm.w", {d, v}, rng, wd);
  p.tensors.emplace("lm.b", Tensor::zeros({v}, true));

  if (cfg.mode == ModelMode::kCifT) {
    add_param(p, "cif.conv.w", {3, d, d}, rng, wd / std::sqrt(3.0));
    p.tensors.emplace("cif.conv.b", Tensor::zeros({d}, true));
    add_param(p, "cif.fc.w", {d, 1}, rng, wd);
    p.tensors.emplace("cif.fc.b", Tensor::zeros({1}, true));
    add_param(p, "funnel.wq", {d, d}, rng, wd);
    add_param(p, "funnel.wk", {d, d}, rng, wd);
    add_param(p, "funnel.wv", {d, d}, rng, wd);
    add_param(p, "funnel.wo", {d, d}, rng, wd);
    for (int i = 0; i < cfg.context_layers; ++i)
      add_layer(p, "ctx.L" + std::to_string(i), d, cfg.ffn_dim, rng);
    add_param(p, "joint.w_gc", {d, d}, rng, wd);
    add_param(p, "joint.w_gz", {d, d}, rng, wd);
    p.tensors.emplace("joint.b_g", Tensor::zeros({d}, true));
    add_param(p, "joint.w_a", {d, k}, rng, wd);
    add_param(p, "joint.w_b", {d, k}, rng, wd);
    add_param(p, "joint.w_p", {k, d}, rng,
              1.0 / std::sqrt(static_cast<double>(k)));
    add_param(p, "joint.w1", {d, d}, rng, wd);
    add_param(p, "joint.w2", {d, d}, rng, wd);
    add_param(p, "cls.w", {d, v}, rng, wd);
    p.tensors.emplace("cls.b", Tensor::zeros({v}, true));
  } else {
    add_param(p, "rjoint.w1", {d, d}, rng, wd);
    add_param(p, "rjoint.w2", {d, d}, rng, wd);
    p.tensors.emplace("rjoint.b", Tensor::zeros({d}, true));
    add_param(p, "rjoint.wo", {d, v + 1}, rng, wd);
    p.tensors.emplace("rjoint.bo", Tensor::zeros({v + 1}, true));
  }
  return p;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : tensors)
    for (double v : t.data())
      if (!std::isfinite(v)) return false;
  return true;
}

void ModelParams::reinit_predictor(std::uint64_t seed) {
  ModelParams fresh = ModelParams::init(cfg, seed);
  for (auto& [name, t] : tensors) {
    if (name.rfind("pred.", 0) != 0) continue;
    auto src = fresh.at(name).data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

Tensor transformer_layer(const Tensor& x, const ModelParams& params,
                         const std::string& prefix) {
  const int d = params.cfg.model_dim;
  const int heads = params.cfg.heads;
  const int dh = d / heads;
  Tensor h = layer_norm(x, params.at(prefix + ".ln1.g"),
                        params.at(prefix + ".ln1.b"));
  Tensor q = matmul(h, params.at(prefix + ".wq"));
  Tensor k = matmul(h, params.at(prefix + ".wk"));
  Tensor v = matmul(h, params.at(prefix + ".wv"));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (int i = 0; i < heads; ++i)
    head_out.push_back(attention(cols(q, i * dh, dh), cols(k, i * dh, dh),
                                 cols(v, i * dh, dh)));
  Tensor att = matmul(heads == 1 ? head_out[0] : concat_cols(head_out),
                      params.at(prefix + ".wo"));
  Tensor y = add(x, att);
  Tensor h2 = layer_norm(y, params.at(prefix + ".ln2.g"),
                         params.at(prefix + ".ln2.b"));
  Tensor f = relu(add(matmul(h2, params.at(prefix + ".ffn.w1")),
                      params.at(prefix + ".ffn.b1")));
  f = add(matmul(f, params.at(prefix + ".ffn.w2")),
          params.at(prefix + ".ffn.b2"));
  return add(y, f);
}

Tensor encode(const Tensor& features, const ModelParams& params) {
  if (features.rank() != 2 || features.shape()[1] != params.cfg.feat_dim)
    throw DimensionError("encode: features must be [T0 x feat_dim]");
  if (features.shape()[0] < 4)
    throw InfeasibleSampleError("encode: need at least 4 input frames, got " +
                                std::to_string(features.shape()[0]));
  Tensor x = relu(add(conv1d(features, params.at("enc.conv1.w"), 2),
                      params.at("enc.conv1.b")));
  x = relu(add(conv1d(x, params.at("enc.conv2.w"), 2),
               params.at("enc.conv2.b")));
  for (int i = 0; i < params.cfg.encoder_layers; ++i)
    x = transformer_layer(x, params, "enc.L" + std::to_string(i));
  return layer_norm(x, params.at("enc.ln.g"), params.at("enc.ln.b"));
}

Tensor predict(const std::vector<int>& ids, const ModelParams& params) {
  for (int id : ids)
    if (id < 0 || id > params.cfg.vocab)
      throw VocabError("predict: token id " + std::to_string(id) +
                       " outside vocab of " +
                       std::to_string(params.cfg.vocab) + " (+BOS)");
  Tensor e = embedding_lookup(params.at("pred.embed"), ids);
  Tensor z = add(matmul(e, params.at("pred.proj.w")),
                 params.at("pred.proj.b"));
  return layer_norm(z, params.at("pred.ln.g"), params.at("pred.ln.b"));
}

Tensor ugbp_join(const Tensor& c, const Tensor& z, const ModelParams& params) {
  if (c.shape()[0] != z.shape()[0])
    throw DimensionError(
        "ugbp_join: length mismatch between acoustic (" +
        std::to_string(c.shape()[0]) + ") and semantic (" +
        std::to_string(z.shape()[0]) + ") inputs; CIF alignment broken");
  Tensor g = sigmoid(add(add(matmul(c, params.at("joint.w_gc")),
                             matmul(z, params.at("joint.w_gz"))),
                         params.at("joint.b_g")));
  Tensor h_gate = mul(g, z);
  Tensor h_bi = matmul(mul(tanh(matmul(c, params.at("joint.w_a"))),
                           tanh(matmul(h_gate, params.at("joint.w_b")))),
                       params.at("joint.w_p"));
  return tanh(add(add(h_bi, matmul(c, params.at("joint.w1"))),
                  matmul(z, params.at("joint.w2"))));
}

Tensor rnnt_join_baseline(const Tensor& encoded, const Tensor& z,
                          const ModelParams& params) {
  Tensor pre = broadcast_outer_sum(matmul(encoded, params.at("rjoint.w1")),
                                   matmul(z, params.at("rjoint.w2")));
  pre = tanh(add(pre, params.at("rjoint.b")));
  return add(matmul(pre, params.at("rjoint.wo")), params.at("rjoint.bo"));
}

Tensor classifier_logits(const Tensor& joint_out, const ModelParams& params) {
  return add(matmul(joint_out, params.at("cls.w")), params.at("cls.b"));
}

Tensor ctc_logits(const Tensor& encoded, const ModelParams& params) {
  return add(matmul(encoded, params.at("ctc.w")), params.at("ctc.b"));
}

Tensor lm_logits(const Tensor& z, const ModelParams& params) {
  return add(matmul(z, params.at("lm.w")), params.at("lm.b"));
}

DecodeResult greedy_decode_cift(const Tensor& features,
                                const ModelParams& params, int max_len) {
  DecodeResult res;
  Tensor enc = encode(features, params);
  CifWeights w = predict_weights(enc, params);
  CifOutput cif = integrate_and_fire(enc, w, params.cfg.beta, CifMode::kInfer,
                                     -1, params.cfg.tail_threshold);
  for (const auto& r : cif.ranges) res.boundaries.push_back(r.second);
  if (cif.fire_count == 0) return res;
  Tensor c = context_blocks(funnel_cif(cif.fired, enc, params), params);
  const int u_f = std::min(cif.fire_count, max_len);
  std::vector<int> prefix = {params.cfg.bos_id()};
  for (int u = 0; u < u_f; ++u) {
    Tensor z = predict(prefix, params);
    Tensor j = ugbp_join(rows(c, u, 1), rows(z, u, 1), params);
    Tensor p = softmax(classifier_logits(j, params), 1);
    int best = 0;
    for (int i = 1; i < params.cfg.vocab; ++i)
      if (p[i] > p[best]) best = i;
    res.tokens.push_back(best);
    res.step_top1.push_back(p[best]);
    prefix.push_back(best);
  }
  return res;
}

DecodeResult greedy_decode_rnnt(const Tensor& features,
                                const ModelParams& params,
                                int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1)
    throw ConfigError("greedy_decode_rnnt: max_symbols_per_frame >= 1");
  DecodeResult res;
  Tensor enc = encode(features, params);
  const int t_len = enc.shape()[0];
  const int blank = params.cfg.blank_id();
  std::vector<int> prefix = {params.cfg.bos_id()};
  for (int t = 0; t < t_len; ++t) {
    int emitted = 0;
    while (emitted < max_symbols_per_frame) {
      Tensor z = predict({prefix.back()}, params);
      Tensor logits =
          rnnt_join_baseline(rows(enc, t, 1), z, params);  // [1 x 1 x V+1]
      Tensor p = softmax(logits, 2);
      int best = 0;
      for (int i = 1; i <= params.cfg.vocab; ++i)
        if (p[i] > p[best]) best = i;
      if (best == blank) break;
      res.tokens.push_back(best);
      res.step_top1.push_back(p[best]);
      res.boundaries.push_back(t);
      prefix.push_back(best);
      ++emitted;
    }
  }
  return res;
}

}  // namespace cift
