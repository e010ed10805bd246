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

#include "cift/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cift/checkpoint.hpp"
#include "cift/gradcheck.hpp"
#include "cift/metrics.hpp"

namespace cift {

using json = nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw ConfigError("loss weights must be non-negative");
  if (opt.warmup < 0) throw ConfigError("warmup must be >= 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = json::parse(model_config_to_json(cfg.model));
  j["gen"] = {{"vocab", cfg.gen.vocab},       {"feat_dim", cfg.gen.feat_dim},
              {"count", cfg.gen.count},       {"seed", cfg.gen.seed},
              {"dwell_min", cfg.gen.dwell_min}, {"dwell_max", cfg.gen.dwell_max},
              {"noise", cfg.gen.noise},       {"len_min", cfg.gen.len_min},
              {"len_max", cfg.gen.len_max}};
  j["opt"] = {{"lr_peak", cfg.opt.lr_peak}, {"warmup", cfg.opt.warmup},
              {"beta1", cfg.opt.beta1},     {"beta2", cfg.opt.beta2},
              {"eps", cfg.opt.eps},         {"clip_norm", cfg.opt.clip_norm}};
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["lambda3"] = cfg.lambda3;
  j["seed"] = cfg.seed;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["train_path"] = cfg.train_path;
  j["eval_path"] = cfg.eval_path;
  j["checkpoint_path"] = cfg.checkpoint_path;
  j["metrics_path"] = cfg.metrics_path;
  j["mem_cap_mb"] = cfg.mem_cap_mb;
  j["log_wall_time"] = cfg.log_wall_time;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  RunConfig cfg;
  if (j.contains("model"))
    cfg.model = model_config_from_json(j["model"].dump());
  if (j.contains("gen")) {
    const auto& g = j["gen"];
    cfg.gen.vocab = g.value("vocab", cfg.gen.vocab);
    cfg.gen.feat_dim = g.value("feat_dim", cfg.gen.feat_dim);
    cfg.gen.count = g.value("count", cfg.gen.count);
    cfg.gen.seed = g.value("seed", cfg.gen.seed);
    cfg.gen.dwell_min = g.value("dwell_min", cfg.gen.dwell_min);
    cfg.gen.dwell_max = g.value("dwell_max", cfg.gen.dwell_max);
    cfg.gen.noise = g.value("noise", cfg.gen.noise);
    cfg.gen.len_min = g.value("len_min", cfg.gen.len_min);
    cfg.gen.len_max = g.value("len_max", cfg.gen.len_max);
  }
  if (j.contains("opt")) {
    const auto& o = j["opt"];
    cfg.opt.lr_peak = o.value("lr_peak", cfg.opt.lr_peak);
    cfg.opt.warmup = o.value("warmup", cfg.opt.warmup);
    cfg.opt.beta1 = o.value("beta1", cfg.opt.beta1);
    cfg.opt.beta2 = o.value("beta2", cfg.opt.beta2);
    cfg.opt.eps = o.value("eps", cfg.opt.eps);
    cfg.opt.clip_norm = o.value("clip_norm", cfg.opt.clip_norm);
  }
  cfg.lambda1 = j.value("lambda1", cfg.lambda1);
  cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  cfg.lambda3 = j.value("lambda3", cfg.lambda3);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.train_path = j.value("train_path", cfg.train_path);
  cfg.eval_path = j.value("eval_path", cfg.eval_path);
  cfg.checkpoint_path = j.value("checkpoint_path", cfg.checkpoint_path);
  cfg.metrics_path = j.value("metrics_path", cfg.metrics_path);
  cfg.mem_cap_mb = j.value("mem_cap_mb", cfg.mem_cap_mb);
  cfg.log_wall_time = j.value("log_wall_time", cfg.log_wall_time);
  return cfg;
}

double Adam::lr_at(int step_index) const {
  const double w = std::max(1, cfg_.warmup);
  const double s = static_cast<double>(step_index);
  return cfg_.lr_peak * std::min(s / w, std::sqrt(w / s));
}

double Adam::step(ModelParams& params, int step_index) {
  double sq = 0.0;
  for (const auto& [name, t] : params.tensors)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  double gscale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm)
    gscale = cfg_.clip_norm / norm;

  const double lr = lr_at(step_index);
  const double b1c = 1.0 - std::pow(cfg_.beta1, step_index);
  const double b2c = 1.0 - std::pow(cfg_.beta2, step_index);
  for (auto& [name, t] : params.tensors) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(t.size(), 0.0);
      v.assign(t.size(), 0.0);
    }
    auto grads = t.grad();
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grads[i] * gscale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      data[i] -= lr * (m[i] / b1c) / (std::sqrt(v[i] / b2c) + cfg_.eps);
    }
  }
  return norm;
}

ForwardResult utterance_loss(const Tensor& features,
                             const std::vector<int>& targets,
                             const ModelParams& params, double lambda1,
                             double lambda2, double lambda3) {
  const ModelConfig& cfg = params.cfg;
  const int s_len = static_cast<int>(targets.size());
  ForwardResult out;
  Tensor enc = encode(features, params);
  LossParts parts;

  if (cfg.mode == ModelMode::kCifT) {
    CifWeights w = predict_weights(enc, params);
    parts.quantity = quantity_loss(w, s_len);
    if (s_len > 0) {
      CifWeights scaled = scale_weights(w, s_len);  // may throw infeasible
      CifOutput cif = integrate_and_fire(enc, scaled, cfg.beta,
                                         CifMode::kTrain, s_len,
                                         cfg.tail_threshold);
      out.fire_count = cif.fire_count;
      Tensor c = context_blocks(funnel_cif(cif.fired, enc, params), params);
      std::vector<int> prefix(1, cfg.bos_id());
      prefix.insert(prefix.end(), targets.begin(), targets.end() - 1);
      Tensor z = predict(prefix, params);
      Tensor joint = ugbp_join(c, z, params);
      parts.joint_ce = joint_ce(classifier_logits(joint, params), targets);
      parts.lm_ce = lm_ce(lm_logits(z, params), targets);
    } else {
      parts.joint_ce = Tensor::scalar(0.0);
    }
  } else {
    std::vector<int> prefix(1, cfg.bos_id());
    prefix.insert(prefix.end(), targets.begin(), targets.end());
    Tensor z = predict(prefix, params);  // U+1 rows
    Tensor logits = rnnt_join_baseline(enc, z, params);
    parts.rnnt = rnnt_loss(logits, targets, cfg.blank_id());
    if (s_len > 0)
      parts.lm_ce = lm_ce(lm_logits(rows(z, 0, s_len), params), targets);
  }

  if (s_len > 0) {
    try {
      parts.ctc = ctc_loss(ctc_logits(enc, params), targets, cfg.blank_id());
    } catch (const InfeasibleSampleError&) {
      out.ctc_skipped = true;
    }
  }
  out.loss = combine(parts, lambda1, lambda2, lambda3);
  return out;
}

TrainResult train(const RunConfig& cfg, ModelParams& params,
                  const Dataset& data, std::ostream* metrics_out) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty dataset");
  TrainResult res;
  Adam opt(cfg.opt);
  Rng shuffle_rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // force initial shuffle

  // snapshot for NaN rollback
  std::map<std::string, std::vector<double>> last_good;
  auto snapshot = [&]() {
    for (const auto& [name, t] : params.tensors)
      last_good[name].assign(t.data().begin(), t.data().end());
  };
  snapshot();

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= cfg.steps; ++step) {
    params.zero_grad();
    Tensor batch_total;
    int used = 0;
    double sum_joint = 0, sum_lm = 0, sum_ctc = 0, sum_qua = 0, sum_rnnt = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        cursor = 0;
      }
      const Utterance& u = data[order[cursor++]];
      try {
        ForwardResult fr = utterance_loss(u.feature_tensor(), u.targets,
                                          params, cfg.lambda1, cfg.lambda2,
                                          cfg.lambda3);
        if (fr.ctc_skipped) ++res.ctc_skipped;
        batch_total = batch_total.defined()
                          ? add(batch_total, fr.loss.total)
                          : fr.loss.total;
        sum_joint += fr.loss.joint_ce;
        sum_lm += fr.loss.lm_ce;
        sum_ctc += fr.loss.ctc;
        sum_qua += fr.loss.quantity;
        sum_rnnt += fr.loss.rnnt;
        ++used;
      } catch (const InfeasibleSampleError&) {
        ++res.skipped_samples;
      } catch (const NumericError&) {
        // a NaN-corrupted forward pass (e.g. diverged weights breaking the
        // fire count) is handled like a non-finite loss: roll back and stop
        for (auto& [name, t] : params.tensors) {
          auto& src = last_good[name];
          std::copy(src.begin(), src.end(), t.mutable_data().begin());
        }
        res.aborted_on_nan = true;
        return res;
      }
    }
    if (used == 0) continue;
    Tensor loss = scale(batch_total, 1.0 / used);
    const double loss_v = loss.value();
    if (!std::isfinite(loss_v)) {
      // restore last finite state and stop
      for (auto& [name, t] : params.tensors) {
        auto& src = last_good[name];
        std::copy(src.begin(), src.end(), t.mutable_data().begin());
      }
      res.aborted_on_nan = true;
      return res;
    }
    backward(loss);
    const double gnorm = opt.step(params, step);
    snapshot();
    res.steps_done = step;
    res.final_loss = loss_v;

    if (metrics_out != nullptr) {
      json line;
      line["step"] = step;
      line["total"] = loss_v;
      line["joint_ce"] = sum_joint / used;
      line["lm_ce"] = sum_lm / used;
      line["ctc"] = sum_ctc / used;
      line["quantity"] = sum_qua / used;
      if (params.cfg.mode == ModelMode::kRnntBaseline)
        line["rnnt"] = sum_rnnt / used;
      line["grad_norm"] = gnorm;
      line["lr"] = opt.lr_at(step);
      line["used"] = used;
      if (cfg.log_wall_time)
        line["wall_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
      (*metrics_out) << line.dump() << "\n";
    }
  }
  return res;
}

std::vector<DecodedUtterance> decode_dataset(const ModelParams& params,
                                             const Dataset& data) {
  std::vector<DecodedUtterance> out;
  out.reserve(data.size());
  for (const auto& u : data) {
    DecodedUtterance d;
    d.id = u.id;
    if (u.frames >= 4) {
      d.result = params.cfg.mode == ModelMode::kCifT
                     ? greedy_decode_cift(u.feature_tensor(), params)
                     : greedy_decode_rnnt(u.feature_tensor(), params);
    }
    out.push_back(std::move(d));
  }
  return out;
}

EvalReport evaluate(const ModelParams& params, const Dataset& data) {
  EvalReport rep;
  int within_one = 0;
  double fire_err = 0.0;
  for (const auto& u : data) {
    DecodeResult r;
    if (u.frames >= 4)
      r = params.cfg.mode == ModelMode::kCifT
              ? greedy_decode_cift(u.feature_tensor(), params)
              : greedy_decode_rnnt(u.feature_tensor(), params);
    EditStats s = edit_align(u.targets, r.tokens);
    rep.substitutions += s.substitutions;
    rep.insertions += s.insertions;
    rep.deletions += s.deletions;
    rep.ref_len += static_cast<int>(u.targets.size());
    if (u.targets.empty()) ++rep.empty_refs;
    ++rep.utterances;
    const int err = std::abs(static_cast<int>(r.tokens.size()) -
                             static_cast<int>(u.targets.size()));
    fire_err += err;
    if (err <= 1) ++within_one;
  }
  if (rep.utterances == 0) throw DataError("evaluate: empty dataset");
  if (rep.ref_len == 0) throw DataError("evaluate: reference corpus is empty");
  rep.cer = static_cast<double>(rep.substitutions + rep.insertions +
                                rep.deletions) /
            rep.ref_len;
  rep.mean_fire_err = fire_err / rep.utterances;
  rep.fire_err_within_one = static_cast<double>(within_one) / rep.utterances;
  return rep;
}

namespace {

// One forward+backward over the fusion + classifier + loss stage for a
// batch of identical synthetic utterances; returns peak live bytes.
std::int64_t bench_trial(ModelMode mode, const ModelParams& params, int batch,
                         int frames, int target_len, int vocab, int dim,
                         Rng& rng) {
  std::vector<int> targets(target_len);
  for (int i = 0; i < target_len; ++i) targets[i] = i % vocab;
  MemTracker::reset_peak();
  Tensor total;
  for (int b = 0; b < batch; ++b) {
    if (mode == ModelMode::kRnntBaseline) {
      Tensor h = randn({frames, dim}, rng, 1.0);
      Tensor z = randn({target_len + 1, dim}, rng, 1.0);
      Tensor logits = rnnt_join_baseline(h, z, params);
      Tensor l = rnnt_loss(logits, targets, vocab);
      total = total.defined() ? add(total, l) : l;
    } else {
      Tensor c = randn({target_len, dim}, rng, 1.0);
      Tensor z = randn({target_len, dim}, rng, 1.0);
      Tensor joint = ugbp_join(c, z, params);
      Tensor l = joint_ce(classifier_logits(joint, params), targets);
      total = total.defined() ? add(total, l) : l;
    }
  }
  backward(scale(total, 1.0 / batch));
  return MemTracker::peak;
}

}  // namespace

BenchResult bench_mem(int frames, int target_len, int vocab, int dim,
                      std::int64_t cap_bytes, std::uint64_t seed) {
  BenchResult res;
  // fusion-stage activations: pre-classifier join + logits elements
  res.analytic_rnnt = static_cast<double>(frames) * (target_len + 1) *
                      (vocab + 1 + dim);
  res.analytic_cift = static_cast<double>(target_len) * (vocab + dim);
  res.analytic_ratio = res.analytic_rnnt / res.analytic_cift;

  for (ModelMode mode : {ModelMode::kRnntBaseline, ModelMode::kCifT}) {
    ModelConfig cfg;
    cfg.model_dim = dim;
    cfg.vocab = vocab;
    cfg.feat_dim = dim;
    cfg.mode = mode;
    cfg.encoder_layers = 0;
    cfg.context_layers = 0;
    ModelParams params = ModelParams::init(cfg, seed);
    params.zero_grad();
    Rng rng(seed + 1);

    auto feasible = [&](int batch) {
      params.zero_grad();
      const std::int64_t peak = bench_trial(mode, params, batch, frames,
                                            target_len, vocab, dim, rng);
      if (batch == 1) {
        if (mode == ModelMode::kRnntBaseline)
          res.peak_bytes_rnnt_b1 = peak;
        else
          res.peak_bytes_cift_b1 = peak;
      }
      return peak <= cap_bytes;
    };

    int best = 0;
    int b = 1;
    while (b <= 4096 && feasible(b)) {
      best = b;
      b *= 2;
    }
    if (best > 0 && b <= 4096) {
      // refine inside (best, b)
      int lo = best, hi = b;
      while (hi - lo > 1) {
        int mid = lo + (hi - lo) / 2;
        if (feasible(mid))
          lo = mid;
        else
          hi = mid;
      }
      best = lo;
    }
    if (mode == ModelMode::kRnntBaseline)
      res.max_batch_rnnt = best;
    else
      res.max_batch_cift = best;
  }
  return res;
}

double ReinitReport::mean_delta() const {
  if (cer_after.empty()) return 0.0;
  double s = 0.0;
  for (double c : cer_after) s += c - cer_before;
  return s / cer_after.size();
}

ReinitReport reinit_probe(const ModelParams& trained, const Dataset& data,
                          const std::vector<std::uint64_t>& seeds) {
  ReinitReport rep;
  rep.cer_before = evaluate(trained, data).cer;
  for (std::uint64_t s : seeds) {
    ModelParams probe = trained;  // shared nodes; deep-copy below
    for (auto& [name, t] : probe.tensors) {
      t = Tensor::from(t.shape(),
                       std::vector<double>(t.data().begin(), t.data().end()),
                       true);
    }
    probe.reinit_predictor(s);
    rep.cer_after.push_back(evaluate(probe, data).cer);
  }
  return rep;
}

GradCheckSuiteReport gradcheck_model(ModelParams& params,
                                     const Tensor& features,
                                     const std::vector<int>& targets,
                                     double lambda1, double lambda2,
                                     double lambda3, double tolerance,
                                     std::size_t max_coords) {
  GradCheckSuiteReport rep;
  for (auto& [name, t] : params.tensors) {
    auto f = [&](const Tensor&) {
      return utterance_loss(features, targets, params, lambda1, lambda2,
                            lambda3)
          .loss.total;
    };
    std::vector<std::size_t> idx;
    if (t.size() <= max_coords) {
      idx.resize(t.size());
      std::iota(idx.begin(), idx.end(), 0);
    } else {
      // deterministic stratified subsample
      Rng rng(0xC0FFEEULL + std::hash<std::string>{}(name));
      for (std::size_t i = 0; i < max_coords; ++i)
        idx.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(t.size()) - 1)));
    }
    GradCheckReport r = finite_diff_check(f, t, 1e-5, tolerance, idx);
    rep.groups.push_back({name, r.max_rel_err, r.checked});
    rep.max_rel_err = std::max(rep.max_rel_err, r.max_rel_err);
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

}  // namespace cift
