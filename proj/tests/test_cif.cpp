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
#include <vector>

#include "cift/cif.hpp"
#include "cift/gradcheck.hpp"
#include "cift/model.hpp"

using namespace cift;

namespace {

// Independent scalar-loop simulator of integrate-and-fire. Mirrors the
// accumulate/split rule in plain doubles with the same operation order,
// so fired values must agree bit-for-bit with the graph implementation.
struct ScalarCifRef {
  std::vector<std::vector<double>> fired;
  std::vector<int> boundary_frames;
  double residue_weight = 0.0;
  double consumed = 0.0;

  ScalarCifRef(const std::vector<std::vector<double>>& frames,
               const std::vector<double>& alpha, double beta, bool train,
               int target_len, double tail_threshold,
               const std::vector<char>& mask = {}) {
    const int t_len = static_cast<int>(frames.size());
    const int d = t_len ? static_cast<int>(frames[0].size()) : 0;
    std::vector<double> cell(d, 0.0);
    double acc = 0.0;
    for (int t = 0; t < t_len; ++t) {
      if (!mask.empty() && !mask[t]) continue;
      double rem = alpha[t];
      while (acc + rem >= beta - 1e-9 && rem > 0.0) {
        const double a1 = beta - acc;
        std::vector<double> out(d);
        for (int j = 0; j < d; ++j) out[j] = cell[j] + a1 * frames[t][j];
        fired.push_back(std::move(out));
        boundary_frames.push_back(t);
        consumed += beta;
        rem -= a1;
        acc = 0.0;
        std::fill(cell.begin(), cell.end(), 0.0);
        if (rem < 0.0) break;
      }
      if (rem != 0.0 || acc != 0.0) {
        acc += rem;
        for (int j = 0; j < d; ++j) cell[j] = cell[j] + rem * frames[t][j];
      }
    }
    residue_weight = acc;
    if (train) {
      if (static_cast<int>(fired.size()) < target_len) {
        fired.push_back(cell);
        consumed += acc;
        residue_weight = 0.0;
      }
    } else if (acc >= tail_threshold) {
      std::vector<double> out(d);
      for (int j = 0; j < d; ++j) out[j] = cell[j] / acc;
      fired.push_back(std::move(out));
    }
  }
};

CifWeights raw_weights(const std::vector<double>& alpha) {
  CifWeights w;
  w.alpha = Tensor::from({static_cast<int>(alpha.size())}, alpha, true);
  w.frame_mask.assign(alpha.size(), 1);
  return w;
}

std::vector<std::vector<double>> to_rows(const Tensor& x) {
  const int n = x.shape()[0], d = x.shape()[1];
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[i][j] = x[static_cast<std::size_t>(i) * d + j];
  return out;
}

ModelParams tiny_cift_params(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.model_dim = 4;
  cfg.embed_dim = 4;
  cfg.vocab = 4;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.context_layers = 1;
  cfg.ffn_dim = 8;
  return ModelParams::init(cfg, seed);
}

}  // namespace

TEST_CASE("hand trace: alpha 0.4/0.7/0.9, beta 1") {
  Rng rng(1);
  Tensor h = randn({3, 2}, rng, 1.0, true);
  CifWeights w = raw_weights({0.4, 0.7, 0.9});
  CifOutput out = integrate_and_fire(h, w, 1.0, CifMode::kInfer);
  REQUIRE(out.fire_count == 2);
  REQUIRE(out.boundaries.size() == 2);
  CHECK(out.boundaries[0].frame == 1);
  CHECK(out.boundaries[1].frame == 2);
  CHECK(out.boundaries[0].a1 == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out.boundaries[0].a2 == doctest::Approx(0.1).epsilon(1e-9));
  // c1 = 0.4 h0 + 0.6 h1, c2 = 0.1 h1 + 0.9 h2
  for (int j = 0; j < 2; ++j) {
    CHECK(out.fired[j] ==
          doctest::Approx(0.4 * h[j] + 0.6 * h[2 + j]).epsilon(1e-9));
    CHECK(out.fired[2 + j] ==
          doctest::Approx(0.1 * h[2 + j] + 0.9 * h[4 + j]).epsilon(1e-9));
  }
  CHECK(out.residue_weight == doctest::Approx(0.0).epsilon(1e-9));
  // split is one subtraction: a2 re-derives exactly
  for (const auto& b : out.boundaries) {
    const double alpha_t = w.alpha[b.frame];
    CHECK(b.a2 == alpha_t - b.a1);  // bit-exact by construction
  }
}

TEST_CASE("single frame below threshold never fires") {
  Rng rng(2);
  Tensor h = randn({1, 3}, rng, 1.0);
  CifWeights w = raw_weights({1.0 - 1e-6});
  CifOutput out = integrate_and_fire(h, w, 1.0, CifMode::kInfer, -1, 2.0);
  CHECK(out.fire_count == 0);
  CHECK(out.residue_weight == doctest::Approx(1.0 - 1e-6));
}

TEST_CASE("weight above beta multi-fires within one frame") {
  Rng rng(3);
  Tensor h = randn({1, 2}, rng, 1.0);
  CifWeights w = raw_weights({2.5});
  CifOutput out = integrate_and_fire(h, w, 1.0, CifMode::kInfer, -1, 2.0);
  CHECK(out.fire_count == 2);
  CHECK(out.residue_weight == doctest::Approx(0.5));
  CHECK(out.consumed_weight == doctest::Approx(2.0));
}

TEST_CASE("oracle equivalence: 1000 random sequences, bit-exact") {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const int t_len = 1 + rng.uniform_int(0, 29);
    const int d = 1 + rng.uniform_int(0, 3);
    Tensor h = randn({t_len, d}, rng, 1.0);
    std::vector<double> alpha(t_len);
    for (double& a : alpha) a = rng.uniform() * 1.5;  // allow multi-fire
    CifWeights w = raw_weights(alpha);

    CifOutput inf = integrate_and_fire(h, w, 1.0, CifMode::kInfer);
    ScalarCifRef ref(to_rows(h), alpha, 1.0, false, -1, 0.5);
    REQUIRE(inf.fire_count == static_cast<int>(ref.fired.size()));
    for (int u = 0; u < inf.fire_count; ++u)
      for (int j = 0; j < d; ++j)
        CHECK(inf.fired[static_cast<std::size_t>(u) * d + j] == ref.fired[u][j]);
    CHECK(inf.residue_weight == ref.residue_weight);

    // scaled/train mode: fires exactly S_tilde whenever sum > 0
    const int s_tilde = 1 + rng.uniform_int(0, 4);
    CifWeights scaled = scale_weights(w, s_tilde);
    CifOutput tr =
        integrate_and_fire(h, scaled, 1.0, CifMode::kTrain, s_tilde);
    CHECK(tr.fire_count == s_tilde);
    std::vector<double> as(scaled.alpha_scaled->data().begin(),
                           scaled.alpha_scaled->data().end());
    ScalarCifRef tref(to_rows(h), as, 1.0, true, s_tilde, 0.5);
    REQUIRE(static_cast<int>(tref.fired.size()) == s_tilde);
    for (int u = 0; u < s_tilde; ++u)
      for (int j = 0; j < d; ++j)
        CHECK(tr.fired[static_cast<std::size_t>(u) * d + j] == tref.fired[u][j]);
  }
}

TEST_CASE("conservation: train consumed == S, infer consumed+residue == sum") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int t_len = 1 + rng.uniform_int(0, 29);
    Tensor h = randn({t_len, 2}, rng, 1.0);
    std::vector<double> alpha(t_len);
    double total = 0.0;
    for (double& a : alpha) {
      a = rng.uniform();
      total += a;
    }
    CifWeights w = raw_weights(alpha);

    CifOutput inf = integrate_and_fire(h, w, 1.0, CifMode::kInfer);
    CHECK(inf.consumed_weight + inf.residue_weight ==
          doctest::Approx(total).epsilon(1e-9));

    if (total > 0.0) {
      const int s_tilde = 1 + rng.uniform_int(0, 4);
      CifOutput tr = integrate_and_fire(h, scale_weights(w, s_tilde), 1.0,
                                        CifMode::kTrain, s_tilde);
      CHECK(tr.consumed_weight ==
            doctest::Approx(static_cast<double>(s_tilde)).epsilon(1e-9));
    }
  }
}

TEST_CASE("monotone boundaries; ranges tile the frame axis") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int t_len = 2 + rng.uniform_int(0, 20);
    Tensor h = randn({t_len, 2}, rng, 1.0);
    std::vector<double> alpha(t_len);
    for (double& a : alpha) a = rng.uniform();
    CifOutput out =
        integrate_and_fire(h, raw_weights(alpha), 1.0, CifMode::kInfer);
    for (std::size_t i = 1; i < out.boundaries.size(); ++i)
      CHECK(out.boundaries[i].frame >= out.boundaries[i - 1].frame);
    for (std::size_t i = 0; i < out.ranges.size(); ++i) {
      CHECK(out.ranges[i].first <= out.ranges[i].second);
      if (i > 0) CHECK(out.ranges[i].first == out.ranges[i - 1].second);
    }
    if (!out.ranges.empty()) CHECK(out.ranges.front().first == 0);
  }
}

TEST_CASE("causality: frames after a boundary cannot affect earlier fires") {
  Rng rng(19);
  Tensor h = randn({6, 3}, rng, 1.0);
  std::vector<double> alpha = {0.5, 0.6, 0.2, 0.3, 0.4, 0.1};
  CifOutput before =
      integrate_and_fire(h, raw_weights(alpha), 1.0, CifMode::kInfer, -1, 2.0);
  REQUIRE(before.fire_count >= 1);
  const int cut = before.boundaries[0].frame;

  // permute everything after the first boundary frame
  auto rowsv = to_rows(h);
  std::vector<std::vector<double>> perm = rowsv;
  std::vector<double> alpha2 = alpha;
  for (int t = cut + 1; t < 6; ++t) {
    perm[t] = rowsv[cut + 1 + (5 - t)];
    alpha2[t] = alpha[cut + 1 + (5 - t)];
  }
  std::vector<double> flat;
  for (const auto& r : perm) flat.insert(flat.end(), r.begin(), r.end());
  CifOutput after = integrate_and_fire(Tensor::from({6, 3}, flat),
                                       raw_weights(alpha2), 1.0,
                                       CifMode::kInfer, -1, 2.0);
  for (int j = 0; j < 3; ++j) CHECK(before.fired[j] == after.fired[j]);
}

TEST_CASE("scale_weights arithmetic and errors") {
  CifWeights w = raw_weights({0.5, 0.5, 1.0});
  CifWeights s3 = scale_weights(w, 3);
  CHECK((*s3.alpha_scaled)[0] == doctest::Approx(0.75));
  CHECK((*s3.alpha_scaled)[1] == doctest::Approx(0.75));
  CHECK((*s3.alpha_scaled)[2] == doctest::Approx(1.5));
  double tot = 0;
  for (double v : s3.alpha_scaled->data()) tot += v;
  CHECK(tot == doctest::Approx(3.0).epsilon(1e-9));

  // sum already equals S -> identity
  CifWeights s2 = scale_weights(w, 2);
  for (int i = 0; i < 3; ++i) CHECK((*s2.alpha_scaled)[i] == w.alpha[i]);

  // empty target -> zero weights
  CifWeights s0 = scale_weights(w, 0);
  for (double v : s0.alpha_scaled->data()) CHECK(v == 0.0);

  CifWeights z = raw_weights({0.0, 0.0});
  CHECK_THROWS_AS(scale_weights(z, 2), InfeasibleSampleError);
}

TEST_CASE("quantity loss values and gradient") {
  CifWeights tie = raw_weights({1.0, 1.0});
  CHECK(quantity_loss(tie, 2).value() == 0.0);
  CifWeights off = raw_weights({1.0, 1.5});
  CHECK(quantity_loss(off, 2).value() == doctest::Approx(0.5));

  Tensor a = Tensor::from({4}, {0.3, 0.6, 0.2, 0.7}, true);
  auto f = [&](const Tensor& t) {
    CifWeights w;
    w.alpha = t;
    w.frame_mask.assign(4, 1);
    return quantity_loss(w, 3);
  };
  CHECK(finite_diff_check(f, a, 1e-5, 1e-6).pass);
}

TEST_CASE("predict_weights: zero head gives 0.5, mask forces zero") {
  ModelParams params = tiny_cift_params(5);
  for (const char* n : {"cif.conv.w", "cif.conv.b", "cif.fc.w", "cif.fc.b"}) {
    auto d = params.at(n).mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  Rng rng(6);
  Tensor h = randn({5, 4}, rng, 1.0);
  CifWeights w = predict_weights(h, params);
  for (double v : w.alpha.data()) CHECK(v == 0.5);

  std::vector<char> mask(5, 0);
  CifWeights wm = predict_weights(h, params, mask);
  for (double v : wm.alpha.data()) CHECK(v == 0.0);
  CifOutput out = integrate_and_fire(h, wm, 1.0, CifMode::kInfer);
  CHECK(out.fire_count == 0);
}

TEST_CASE("predict_weights gradient w.r.t. encoder output") {
  ModelParams params = tiny_cift_params(9);
  Rng rng(10);
  Tensor h = randn({4, 4}, rng, 1.0, true);
  auto f = [&](const Tensor& t) {
    return sum(predict_weights(t, params).alpha);
  };
  CHECK(finite_diff_check(f, h, 1e-5, 1e-5).pass);
}

TEST_CASE("integrate_and_fire is differentiable in frames and weights") {
  Rng rng(13);
  Tensor h = randn({5, 3}, rng, 1.0, true);
  Tensor a = Tensor::from({5}, {0.5, 0.7, 0.4, 0.9, 0.6}, true);
  auto fh = [&](const Tensor& t) {
    CifWeights w;
    w.alpha = a;
    w.frame_mask.assign(5, 1);
    CifOutput o = integrate_and_fire(t, scale_weights(w, 3), 1.0,
                                     CifMode::kTrain, 3);
    return sum(o.fired);
  };
  auto fa = [&](const Tensor& t) {
    CifWeights w;
    w.alpha = t;
    w.frame_mask.assign(5, 1);
    CifOutput o = integrate_and_fire(h, scale_weights(w, 3), 1.0,
                                     CifMode::kTrain, 3);
    return sum(o.fired);
  };
  CHECK(finite_diff_check(fh, h, 1e-5, 1e-4).pass);
  CHECK(finite_diff_check(fa, a, 1e-5, 1e-4).pass);
}

TEST_CASE("funnel: zero output projection is the identity residual") {
  ModelParams params = tiny_cift_params(21);
  auto d = params.at("funnel.wo").mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
  Rng rng(22);
  Tensor c = randn({3, 4}, rng, 1.0);
  Tensor h = randn({6, 4}, rng, 1.0);
  Tensor out = funnel_cif(c, h, params);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(out[i] == c[i]);
}

TEST_CASE("funnel with one frame adds the same readback to every row") {
  ModelParams params = tiny_cift_params(23);
  Rng rng(24);
  Tensor c = randn({3, 4}, rng, 1.0);
  Tensor h = randn({1, 4}, rng, 1.0);
  Tensor out = funnel_cif(c, h, params);
  // delta rows must all be equal: single key -> identical attention output
  for (int j = 0; j < 4; ++j) {
    const double delta0 = out[j] - c[j];
    for (int u = 1; u < 3; ++u)
      CHECK(out[static_cast<std::size_t>(u) * 4 + j] -
                c[static_cast<std::size_t>(u) * 4 + j] ==
            doctest::Approx(delta0).epsilon(1e-12));
  }
}

TEST_CASE("funnel gradients to both inputs") {
  ModelParams params = tiny_cift_params(25);
  Rng rng(26);
  Tensor c = randn({2, 4}, rng, 1.0, true);
  Tensor h = randn({4, 4}, rng, 1.0, true);
  auto fc = [&](const Tensor& t) { return sum(funnel_cif(t, h, params)); };
  auto fh = [&](const Tensor& t) { return sum(funnel_cif(c, t, params)); };
  CHECK(finite_diff_check(fc, c, 1e-5, 1e-4).pass);
  CHECK(finite_diff_check(fh, h, 1e-5, 1e-4).pass);
}

TEST_CASE("context blocks: zero layers is identity; U=1 finite") {
  ModelConfig cfg;
  cfg.feat_dim = 4;
  cfg.model_dim = 4;
  cfg.embed_dim = 4;
  cfg.vocab = 4;
  cfg.heads = 2;
  cfg.encoder_layers = 0;
  cfg.context_layers = 0;
  cfg.ffn_dim = 8;
  ModelParams p0 = ModelParams::init(cfg, 3);
  Rng rng(30);
  Tensor c = randn({3, 4}, rng, 1.0);
  Tensor out0 = context_blocks(c, p0);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(out0[i] == c[i]);

  ModelParams p2 = tiny_cift_params(31);
  Tensor one = randn({1, 4}, rng, 1.0);
  Tensor o1a = context_blocks(one, p2);
  Tensor o1b = context_blocks(one, p2);
  for (std::size_t i = 0; i < o1a.size(); ++i) {
    CHECK(std::isfinite(o1a[i]));
    CHECK(o1a[i] == o1b[i]);
  }
}

TEST_CASE("context blocks gradient") {
  ModelParams params = tiny_cift_params(33);
  Rng rng(34);
  Tensor c = randn({4, 4}, rng, 1.0, true);
  auto f = [&](const Tensor& t) { return sum(context_blocks(t, params)); };
  CHECK(finite_diff_check(f, c, 1e-5, 1e-4).pass);
}
