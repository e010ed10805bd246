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
//
// Command-line front end: data generation, training, evaluation, greedy
// decoding, gradient checking, the fusion-memory benchmark, and the
// predictor re-initialization probe.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cift/checkpoint.hpp"
#include "cift/data.hpp"
#include "cift/errors.hpp"
#include "cift/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace cift;

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cmd_gen_data(const GenConfig& gen, const std::string& out) {
  Dataset data = generate(gen);
  write_jsonl(data, out);
  std::cout << "wrote " << data.size() << " utterances to " << out << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  cfg.validate();
  Dataset data = cfg.train_path.empty() ? generate(cfg.gen)
                                        : read_jsonl(cfg.train_path);
  ModelParams params = ModelParams::init(cfg.model, cfg.seed);

  std::ofstream metrics;
  std::ostream* mout = nullptr;
  if (!cfg.metrics_path.empty()) {
    metrics.open(cfg.metrics_path);
    if (!metrics) throw DataError("cannot open " + cfg.metrics_path);
    mout = &metrics;
  }
  TrainResult res = train(cfg, params, data, mout);
  if (res.aborted_on_nan) {
    std::cerr << "training aborted: non-finite loss at step "
              << res.steps_done + 1 << "\n";
    if (!cfg.checkpoint_path.empty())
      save_checkpoint(params, cfg.checkpoint_path, run_config_to_json(cfg));
    throw NumericError("non-finite training loss");
  }
  if (!cfg.checkpoint_path.empty())
    save_checkpoint(params, cfg.checkpoint_path, run_config_to_json(cfg));
  std::cout << "steps=" << res.steps_done << " final_loss=" << res.final_loss
            << " skipped=" << res.skipped_samples
            << " ctc_skipped=" << res.ctc_skipped << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path) {
  ModelParams params = load_checkpoint(ckpt);
  Dataset data = read_jsonl(data_path);
  EvalReport r = evaluate(params, data);
  json j = {{"cer", r.cer},
            {"substitutions", r.substitutions},
            {"insertions", r.insertions},
            {"deletions", r.deletions},
            {"ref_len", r.ref_len},
            {"utterances", r.utterances},
            {"empty_refs", r.empty_refs},
            {"mean_fire_err", r.mean_fire_err},
            {"fire_err_within_one", r.fire_err_within_one}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& data_path,
               const std::string& out) {
  ModelParams params = load_checkpoint(ckpt);
  Dataset data = read_jsonl(data_path);
  std::ofstream os(out);
  if (!os) throw DataError("cannot open " + out + " for writing");
  for (const auto& d : decode_dataset(params, data)) {
    json j = {{"id", d.id},
              {"tokens", d.result.tokens},
              {"boundaries", d.result.boundaries},
              {"top1", d.result.step_top1}};
    os << j.dump() << "\n";
  }
  std::cout << "decoded " << data.size() << " utterances to " << out << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& mode, std::uint64_t seed,
                  double tolerance) {
  ModelConfig cfg;
  cfg.feat_dim = 6;
  cfg.model_dim = 8;
  cfg.embed_dim = 4;
  cfg.vocab = 5;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.context_layers = 1;
  cfg.ffn_dim = 16;
  if (mode == "rnnt-baseline")
    cfg.mode = ModelMode::kRnntBaseline;
  else if (mode != "cift")
    throw ConfigError("unknown mode '" + mode + "'");
  ModelParams params = ModelParams::init(cfg, seed);
  Rng rng(seed + 17);
  Tensor features = randn({16, cfg.feat_dim}, rng, 1.0);
  std::vector<int> targets = {1, 3, 2};
  GradCheckSuiteReport rep =
      gradcheck_model(params, features, targets, 1.0, 1.0, 0.3, tolerance);
  for (const auto& g : rep.groups)
    std::cout << (g.max_rel_err <= tolerance ? "ok   " : "FAIL ") << g.name
              << " max_rel_err=" << g.max_rel_err << " coords=" << g.checked
              << "\n";
  std::cout << (rep.pass ? "PASS" : "FAIL")
            << " max_rel_err=" << rep.max_rel_err << "\n";
  if (!rep.pass) throw NumericError("gradient check failed");
  return 0;
}

int cmd_bench_mem(int frames, int target_len, int vocab, int dim,
                  double cap_mb, std::uint64_t seed) {
  BenchResult r =
      bench_mem(frames, target_len, vocab, dim,
                static_cast<std::int64_t>(cap_mb * 1024.0 * 1024.0), seed);
  json j = {{"analytic_rnnt", r.analytic_rnnt},
            {"analytic_cift", r.analytic_cift},
            {"analytic_ratio", r.analytic_ratio},
            {"peak_bytes_rnnt_b1", r.peak_bytes_rnnt_b1},
            {"peak_bytes_cift_b1", r.peak_bytes_cift_b1},
            {"max_batch_rnnt", r.max_batch_rnnt},
            {"max_batch_cift", r.max_batch_cift}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_reinit_probe(const std::string& ckpt, const std::string& data_path,
                     const std::vector<std::uint64_t>& seeds) {
  ModelParams params = load_checkpoint(ckpt);
  Dataset data = read_jsonl(data_path);
  ReinitReport r = reinit_probe(params, data, seeds);
  json j = {{"cer_before", r.cer_before},
            {"cer_after", r.cer_after},
            {"mean_delta", r.mean_delta()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CIF transducer toolkit"};
  app.require_subcommand(1);

  // shared run config; --config file first, flags override
  RunConfig run;
  std::string config_path, mode = "cift";

  auto add_config_flag = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config file");
  };
  auto load_config = [&]() {
    if (!config_path.empty()) run = run_config_from_json(slurp(config_path));
  };

  // gen-data
  GenConfig gen;
  std::string gen_out = "data.jsonl";
  auto* sg = app.add_subcommand("gen-data", "generate a synthetic corpus");
  sg->add_option("--out", gen_out, "output JSONL (.gz supported)");
  sg->add_option("--count", gen.count);
  sg->add_option("--vocab", gen.vocab);
  sg->add_option("--feat-dim", gen.feat_dim);
  sg->add_option("--seed", gen.seed);
  sg->add_option("--dwell-min", gen.dwell_min);
  sg->add_option("--dwell-max", gen.dwell_max);
  sg->add_option("--noise", gen.noise);
  sg->add_option("--len-min", gen.len_min);
  sg->add_option("--len-max", gen.len_max);

  // train
  auto* st = app.add_subcommand("train", "train a model");
  add_config_flag(st);
  auto* opt_mode = st->add_option("--mode", mode, "cift | rnnt-baseline");
  auto* opt_steps = st->add_option("--steps", run.steps);
  auto* opt_batch = st->add_option("--batch-size", run.batch_size);
  auto* opt_seed = st->add_option("--seed", run.seed);
  auto* opt_train = st->add_option("--train", run.train_path, "JSONL corpus");
  auto* opt_ckpt = st->add_option("--checkpoint", run.checkpoint_path);
  auto* opt_metrics = st->add_option("--metrics", run.metrics_path);
  auto* opt_l1 = st->add_option("--lambda1", run.lambda1);
  auto* opt_l2 = st->add_option("--lambda2", run.lambda2);
  auto* opt_l3 = st->add_option("--lambda3", run.lambda3);
  auto* opt_lr = st->add_option("--lr", run.opt.lr_peak);
  auto* opt_vocab = st->add_option("--vocab", run.model.vocab);
  auto* opt_dim = st->add_option("--model-dim", run.model.model_dim);
  auto* opt_feat = st->add_option("--feat-dim", run.model.feat_dim);
  bool no_wall = false;
  st->add_flag("--no-wall-time", no_wall, "byte-stable metrics log");

  // eval / decode / reinit-probe
  std::string ckpt_path, data_path, hyp_out = "hyps.jsonl";
  auto* se = app.add_subcommand("eval", "edit-distance evaluation");
  se->add_option("--checkpoint", ckpt_path)->required();
  se->add_option("--data", data_path)->required();

  auto* sd = app.add_subcommand("decode", "greedy decode to JSONL");
  sd->add_option("--checkpoint", ckpt_path)->required();
  sd->add_option("--data", data_path)->required();
  sd->add_option("--out", hyp_out);

  std::vector<std::uint64_t> probe_seeds = {101, 202, 303};
  auto* sr = app.add_subcommand("reinit-probe",
                                "re-randomize predictor, re-evaluate");
  sr->add_option("--checkpoint", ckpt_path)->required();
  sr->add_option("--data", data_path)->required();
  sr->add_option("--seeds", probe_seeds);

  // gradcheck
  double tol = 1e-3;
  std::uint64_t gc_seed = 7;
  auto* sc = app.add_subcommand("gradcheck", "finite-difference check");
  sc->add_option("--mode", mode, "cift | rnnt-baseline");
  sc->add_option("--seed", gc_seed);
  sc->add_option("--tolerance", tol);

  // bench-mem
  int b_frames = 400, b_len = 30, b_vocab = 500, b_dim = 64;
  double b_cap = 256.0;
  std::uint64_t b_seed = 7;
  auto* sb = app.add_subcommand("bench-mem", "fusion-stage memory benchmark");
  sb->add_option("--frames", b_frames);
  sb->add_option("--target-len", b_len);
  sb->add_option("--vocab", b_vocab);
  sb->add_option("--dim", b_dim);
  sb->add_option("--cap-mb", b_cap);
  sb->add_option("--seed", b_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sg->parsed()) return cmd_gen_data(gen, gen_out);
    if (st->parsed()) {
      // defaults <- config file <- explicit flags
      RunConfig flags = run;
      load_config();
      if (opt_mode->count()) {
        if (mode == "rnnt-baseline")
          run.model.mode = ModelMode::kRnntBaseline;
        else if (mode == "cift")
          run.model.mode = ModelMode::kCifT;
        else
          throw ConfigError("unknown mode '" + mode + "'");
      }
      if (opt_steps->count()) run.steps = flags.steps;
      if (opt_batch->count()) run.batch_size = flags.batch_size;
      if (opt_seed->count()) run.seed = flags.seed;
      if (opt_train->count()) run.train_path = flags.train_path;
      if (opt_ckpt->count()) run.checkpoint_path = flags.checkpoint_path;
      if (opt_metrics->count()) run.metrics_path = flags.metrics_path;
      if (opt_l1->count()) run.lambda1 = flags.lambda1;
      if (opt_l2->count()) run.lambda2 = flags.lambda2;
      if (opt_l3->count()) run.lambda3 = flags.lambda3;
      if (opt_lr->count()) run.opt.lr_peak = flags.opt.lr_peak;
      if (opt_vocab->count()) run.model.vocab = flags.model.vocab;
      if (opt_dim->count()) run.model.model_dim = flags.model.model_dim;
      if (opt_feat->count()) run.model.feat_dim = flags.model.feat_dim;
      if (no_wall) run.log_wall_time = false;
      return cmd_train(run);
    }
    if (se->parsed()) return cmd_eval(ckpt_path, data_path);
    if (sd->parsed()) return cmd_decode(ckpt_path, data_path, hyp_out);
    if (sc->parsed()) return cmd_gradcheck(mode, gc_seed, tol);
    if (sb->parsed())
      return cmd_bench_mem(b_frames, b_len, b_vocab, b_dim, b_cap, b_seed);
    if (sr->parsed()) return cmd_reinit_probe(ckpt_path, data_path, probe_seeds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const VocabError& e) {
    std::cerr << "vocab error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const InfeasibleSampleError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const DimensionError& e) {
    std::cerr << "internal shape error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
