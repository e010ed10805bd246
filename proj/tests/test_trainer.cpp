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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cift/metrics.hpp"
#include "cift/trainer.hpp"

using namespace cift;

namespace {

RunConfig small_run(ModelMode mode = ModelMode::kCifT) {
  RunConfig cfg;
  cfg.model.feat_dim = 8;
  cfg.model.model_dim = 8;
  cfg.model.embed_dim = 4;
  cfg.model.vocab = 6;
  cfg.model.heads = 2;
  cfg.model.encoder_layers = 1;
  cfg.model.context_layers = 1;
  cfg.model.ffn_dim = 16;
  cfg.model.mode = mode;
  cfg.gen.vocab = 6;
  cfg.gen.feat_dim = 8;
  cfg.gen.count = 32;
  cfg.gen.seed = 7;
  cfg.gen.len_min = 2;
  cfg.gen.len_max = 4;
  cfg.gen.dwell_min = 5;
  cfg.gen.dwell_max = 7;
  cfg.seed = 7;
  cfg.batch_size = 8;
  cfg.steps = 20;
  cfg.opt.warmup = 10;
  cfg.log_wall_time = false;
  return cfg;
}

}  // namespace

TEST_CASE("edit alignment: hand cases") {
  CHECK(edit_align({1, 2, 3}, {1, 2, 3}).distance() == 0);
  EditStats d = edit_align({1, 2, 3}, {1, 3});
  CHECK(d.deletions == 1);
  CHECK(d.substitutions == 0);
  CHECK(d.insertions == 0);
  EditStats s = edit_align({1, 2}, {1, 4});
  CHECK(s.substitutions == 1);
  EditStats i = edit_align({}, {5, 5});
  CHECK(i.insertions == 2);
  CHECK(edit_align({1, 2, 3, 4}, {2, 3}).distance() == 2);
}

TEST_CASE("adam schedule: linear warmup then inverse-sqrt decay") {
  OptimizerConfig oc;
  oc.lr_peak = 1e-3;
  oc.warmup = 100;
  Adam opt(oc);
  CHECK(opt.lr_at(1) == doctest::Approx(1e-5));
  CHECK(opt.lr_at(50) == doctest::Approx(5e-4));
  CHECK(opt.lr_at(100) == doctest::Approx(1e-3));
  CHECK(opt.lr_at(400) == doctest::Approx(5e-4));  // sqrt(100/400) = 0.5
  CHECK(opt.lr_at(101) < 1e-3);
}

TEST_CASE("adam applies clipped updates and reports the raw norm") {
  ModelConfig mc;
  mc.feat_dim = 2;
  mc.model_dim = 2;
  mc.embed_dim = 2;
  mc.vocab = 2;
  mc.heads = 1;
  mc.encoder_layers = 0;
  mc.context_layers = 0;
  mc.ffn_dim = 2;
  ModelParams params = ModelParams::init(mc, 1);
  params.zero_grad();
  // plant a known gradient on one tensor
  auto g = params.at("cls.b").mutable_grad();
  g[0] = 30.0;
  g[1] = 40.0;
  OptimizerConfig oc;
  oc.clip_norm = 5.0;
  Adam opt(oc);
  const double before0 = params.at("cls.b")[0];
  const double norm = opt.step(params, 1);
  CHECK(norm == doctest::Approx(50.0));
  CHECK(params.at("cls.b")[0] != before0);
  CHECK(params.all_finite());
}

TEST_CASE("run config json round trip and validation") {
  RunConfig cfg = small_run();
  cfg.lambda3 = 0.45;
  cfg.opt.lr_peak = 2e-3;
  cfg.train_path = "x.jsonl";
  cfg.mem_cap_mb = 64.0;
  RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(back.lambda3 == 0.45);
  CHECK(back.opt.lr_peak == 2e-3);
  CHECK(back.train_path == "x.jsonl");
  CHECK(back.mem_cap_mb == 64.0);
  CHECK(back.model.vocab == 6);
  CHECK(back.gen.count == 32);
  CHECK(back.log_wall_time == false);

  cfg.lambda1 = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{oops"), ConfigError);
}

TEST_CASE("train steps=0 leaves parameters at initialization") {
  RunConfig cfg = small_run();
  cfg.steps = 0;
  Dataset data = generate(cfg.gen);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  ModelParams init = ModelParams::init(cfg.model, cfg.seed);
  TrainResult res = train(cfg, params, data);
  CHECK(res.steps_done == 0);
  for (const auto& [name, t] : params.tensors)
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(t[i] == init.at(name)[i]);
}

TEST_CASE("training is deterministic: identical logs and parameters") {
  for (ModelMode mode : {ModelMode::kCifT, ModelMode::kRnntBaseline}) {
    RunConfig cfg = small_run(mode);
    cfg.steps = 5;
    Dataset data = generate(cfg.gen);

    std::ostringstream log1, log2;
    ModelParams p1 = ModelParams::init(cfg.model, cfg.seed);
    ModelParams p2 = ModelParams::init(cfg.model, cfg.seed);
    train(cfg, p1, data, &log1);
    train(cfg, p2, data, &log2);
    CHECK(!log1.str().empty());
    CHECK(log1.str() == log2.str());
    for (const auto& [name, t] : p1.tensors)
      for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(t[i] == p2.at(name)[i]);
  }
}

TEST_CASE("short training run reduces the loss") {
  RunConfig cfg = small_run();
  cfg.steps = 60;
  cfg.opt.warmup = 20;
  Dataset data = generate(cfg.gen);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  std::ostringstream log;
  TrainResult res = train(cfg, params, data, &log);
  CHECK(res.steps_done == 60);
  CHECK(!res.aborted_on_nan);

  // compare mean of first and last 10 recorded totals
  std::istringstream is(log.str());
  std::string line;
  std::vector<double> totals;
  while (std::getline(is, line)) {
    auto pos = line.find("\"total\":");
    REQUIRE(pos != std::string::npos);
    totals.push_back(std::stod(line.substr(pos + 8)));
  }
  REQUIRE(totals.size() == 60);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += totals[i];
    tail += totals[totals.size() - 1 - i];
  }
  CHECK(tail < head);
}

TEST_CASE("metrics lines carry every component and the wall-time flag") {
  RunConfig cfg = small_run();
  cfg.steps = 2;
  Dataset data = generate(cfg.gen);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  std::ostringstream log;
  train(cfg, params, data, &log);
  const std::string s = log.str();
  for (const char* key : {"\"step\"", "\"total\"", "\"joint_ce\"",
                          "\"lm_ce\"", "\"ctc\"", "\"quantity\"",
                          "\"grad_norm\"", "\"lr\""})
    CHECK(s.find(key) != std::string::npos);
  CHECK(s.find("wall_ms") == std::string::npos);  // log_wall_time off

  cfg.log_wall_time = true;
  std::ostringstream log2;
  ModelParams p2 = ModelParams::init(cfg.model, cfg.seed);
  train(cfg, p2, data, &log2);
  CHECK(log2.str().find("wall_ms") != std::string::npos);
}

TEST_CASE("train aborts on a non-finite loss and restores parameters") {
  RunConfig cfg = small_run();
  cfg.steps = 6;
  cfg.opt.warmup = 1;
  cfg.opt.lr_peak = 1e150;  // guarantees overflow after the first update
  cfg.opt.clip_norm = 0.0;
  Dataset data = generate(cfg.gen);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  TrainResult res = train(cfg, params, data);
  CHECK(res.aborted_on_nan);
  CHECK(res.steps_done < 6);
  CHECK(params.all_finite());
}

TEST_CASE("ctc-infeasible utterances are counted, not fatal") {
  RunConfig cfg = small_run();
  cfg.steps = 1;
  cfg.batch_size = 1;
  Dataset data;
  Utterance u;
  u.id = "tiny";
  u.frames = 4;  // encodes to T=1 < |targets|
  u.feat_dim = 8;
  u.features.assign(32, 0.5);
  u.targets = {1, 2, 3};
  data.push_back(u);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  TrainResult res = train(cfg, params, data);
  CHECK(res.steps_done == 1);
  CHECK(res.ctc_skipped == 1);
  CHECK(params.all_finite());
}

TEST_CASE("evaluate and decode_dataset run on both modes") {
  for (ModelMode mode : {ModelMode::kCifT, ModelMode::kRnntBaseline}) {
    RunConfig cfg = small_run(mode);
    Dataset data = generate(cfg.gen);
    ModelParams params = ModelParams::init(cfg.model, cfg.seed);
    EvalReport rep = evaluate(params, data);
    CHECK(rep.utterances == 32);
    CHECK(rep.ref_len > 0);
    CHECK(rep.cer >= 0.0);
    CHECK(rep.fire_err_within_one >= 0.0);
    CHECK(rep.fire_err_within_one <= 1.0);

    auto hyps = decode_dataset(params, data);
    REQUIRE(hyps.size() == data.size());
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      CHECK(hyps[i].id == data[i].id);
      for (int tok : hyps[i].result.tokens) CHECK(tok < cfg.model.vocab);
    }
  }
  CHECK_THROWS_AS(evaluate(ModelParams::init(small_run().model, 1), Dataset{}),
                  DataError);
}

TEST_CASE("reinit probe with the original seed is a no-op") {
  RunConfig cfg = small_run();
  Dataset data = generate(cfg.gen);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  ReinitReport rep = reinit_probe(params, data, {cfg.seed});
  REQUIRE(rep.cer_after.size() == 1);
  CHECK(rep.cer_after[0] == rep.cer_before);
  CHECK(rep.mean_delta() == 0.0);
  // the probe must not disturb the trained parameters
  ModelParams fresh = ModelParams::init(cfg.model, cfg.seed);
  for (const auto& [name, t] : params.tensors)
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(t[i] == fresh.at(name)[i]);
}

TEST_CASE("gradcheck_model passes on tiny dims for both modes") {
  for (ModelMode mode : {ModelMode::kCifT, ModelMode::kRnntBaseline}) {
    ModelConfig mc;
    mc.feat_dim = 4;
    mc.model_dim = 4;
    mc.embed_dim = 3;
    mc.vocab = 4;
    mc.heads = 2;
    mc.encoder_layers = 1;
    mc.context_layers = 1;
    mc.ffn_dim = 8;
    mc.mode = mode;
    ModelParams params = ModelParams::init(mc, 3);
    Rng rng(4);
    Tensor features = randn({12, 4}, rng, 1.0);
    GradCheckSuiteReport rep =
        gradcheck_model(params, features, {1, 3}, 1.0, 1.0, 0.3, 1e-3, 8);
    CHECK_MESSAGE(rep.pass, "max_rel_err=" << rep.max_rel_err);
    CHECK(rep.groups.size() == params.tensors.size());
  }
}

TEST_CASE("memory benchmark: analytic counts, ordering, doubling search") {
  // spec'd analytic logits-element ratio at T=100, U=20, V=50
  const double ratio = (100.0 * 21 * 51) / (20.0 * 50);
  CHECK(ratio == doctest::Approx(107.1));

  BenchResult r = bench_mem(40, 6, 20, 8, 8ll << 20, 5);
  CHECK(r.analytic_rnnt > r.analytic_cift);
  CHECK(r.peak_bytes_rnnt_b1 > r.peak_bytes_cift_b1);  // CIF-T < RNN-T
  CHECK(r.max_batch_cift > r.max_batch_rnnt);
  CHECK(r.max_batch_rnnt >= 1);
  CHECK(r.analytic_ratio ==
        doctest::Approx(40.0 * 7 * (21 + 8) / (6.0 * (20 + 8))));

  // floor case T=1, U=1: logits ratio (U+1)(V+1)/V ~ 2x
  const double floor_ratio = (1.0 * 2 * 21) / (1.0 * 20);
  CHECK(floor_ratio == doctest::Approx(2.1));
}

TEST_CASE("utterance_loss: empty target contributes only quantity+joint=0") {
  RunConfig cfg = small_run();
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  Rng rng(9);
  Tensor features = randn({8, 8}, rng, 1.0);
  ForwardResult fr = utterance_loss(features, {}, params, 1.0, 1.0, 0.3);
  CHECK(fr.loss.joint_ce == 0.0);
  CHECK(fr.loss.lm_ce == 0.0);
  CHECK(fr.loss.ctc == 0.0);
  CHECK(fr.loss.quantity > 0.0);  // weights sum past 0 on random init
  CHECK(std::isfinite(fr.loss.total_value));
}
