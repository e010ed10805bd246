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

#include "cift/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cift {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// ensure_grad equivalent without access to tensor.cpp internals
void accumulate_ready(TensorNode& n) {
  if (n.grad.empty()) n.alloc_grad();
}

// per-row log-sum-exp over the last extent; rows = numel / n
std::vector<double> row_lse(const std::vector<double>& data, int n) {
  const std::size_t rows = data.size() / n;
  std::vector<double> lz(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = data.data() + r * n;
    double mx = p[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, p[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(p[i] - mx);
    lz[r] = mx + std::log(s);
  }
  return lz;
}

// Minimum frame count a CTC target needs: one frame per label plus one
// separating blank per adjacent repeat.
int ctc_min_frames(const std::vector<int>& targets) {
  int need = static_cast<int>(targets.size());
  for (std::size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++need;
  return need;
}

}  // namespace

Tensor joint_ce(const Tensor& logits, const std::vector<int>& targets) {
  if (targets.empty()) return Tensor::scalar(0.0);
  if (logits.rank() != 2 ||
      logits.shape()[0] != static_cast<int>(targets.size()))
    throw DimensionError(
        "joint_ce: logits rows != target length (alignment error)");
  return nll_pick(log_softmax(logits, 1), targets);
}

Tensor lm_ce(const Tensor& predictor_logits, const std::vector<int>& targets) {
  return joint_ce(predictor_logits, targets);
}

Tensor ctc_loss(const Tensor& logits, const std::vector<int>& targets,
                int blank) {
  if (logits.rank() != 2) throw DimensionError("ctc_loss: logits must be 2-D");
  const int t_len = logits.shape()[0];
  const int nsym = logits.shape()[1];
  if (blank < 0 || blank >= nsym)
    throw ConfigError("ctc_loss: blank index out of range");
  for (int y : targets)
    if (y < 0 || y >= nsym || y == blank)
      throw VocabError("ctc_loss: bad target symbol " + std::to_string(y));
  if (t_len < ctc_min_frames(targets))
    throw InfeasibleSampleError(
        "ctc_loss: target needs at least " +
        std::to_string(ctc_min_frames(targets)) + " frames, got " +
        std::to_string(t_len));

  const int u_len = static_cast<int>(targets.size());
  const int s_len = 2 * u_len + 1;
  // extended labels: blank at even positions
  std::vector<int> ext(s_len, blank);
  for (int u = 0; u < u_len; ++u) ext[2 * u + 1] = targets[u];

  // softmax is folded into the DP: keep only per-frame log-normalizers
  // instead of a second T x nsym graph node.
  auto ln = logits.node();
  auto lz = std::make_shared<std::vector<double>>(row_lse(ln->data, nsym));
  auto lp = [&](int t, int s) {
    return ln->data[static_cast<std::size_t>(t) * nsym + ext[s]] - (*lz)[t];
  };

  auto alpha = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(t_len) * s_len, kNegInf);
  auto a = [&](int t, int s) -> double& {
    return (*alpha)[static_cast<std::size_t>(t) * s_len + s];
  };
  a(0, 0) = lp(0, 0);
  if (s_len > 1) a(0, 1) = lp(0, 1);
  for (int t = 1; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s) {
      double best = a(t - 1, s);
      if (s >= 1) best = lse2(best, a(t - 1, s - 1));
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        best = lse2(best, a(t - 1, s - 2));
      a(t, s) = best == kNegInf ? kNegInf : best + lp(t, s);
    }
  double log_z = a(t_len - 1, s_len - 1);
  if (s_len > 1) log_z = lse2(log_z, a(t_len - 1, s_len - 2));
  if (!std::isfinite(log_z))
    throw NumericError("ctc_loss: non-finite path sum");

  auto node = std::make_shared<TensorNode>();
  node->shape = {1};
  node->alloc_data(1);
  node->data[0] = -log_z;
  node->requires_grad = ln->requires_grad;
  if (node->requires_grad) {
    node->parents = {ln};
    std::vector<int> ext_c = ext;
    node->backward_fn = [ln, lz, alpha, ext_c, t_len, s_len, nsym, blank,
                         log_z](TensorNode& self) {
      accumulate_ready(*ln);
      const double g = self.grad[0];
      // beta excludes the emission at frame t
      std::vector<double> beta(static_cast<std::size_t>(t_len) * s_len,
                               kNegInf);
      auto b = [&](int t, int s) -> double& {
        return beta[static_cast<std::size_t>(t) * s_len + s];
      };
      auto lp = [&](int t, int s) {
        return ln->data[static_cast<std::size_t>(t) * nsym + ext_c[s]] -
               (*lz)[t];
      };
      b(t_len - 1, s_len - 1) = 0.0;
      if (s_len > 1) b(t_len - 1, s_len - 2) = 0.0;
      for (int t = t_len - 2; t >= 0; --t)
        for (int s = 0; s < s_len; ++s) {
          double acc = b(t + 1, s) == kNegInf
                           ? kNegInf
                           : lp(t + 1, s) + b(t + 1, s);
          if (s + 1 < s_len && b(t + 1, s + 1) != kNegInf)
            acc = lse2(acc, lp(t + 1, s + 1) + b(t + 1, s + 1));
          if (s + 2 < s_len && ext_c[s + 2] != blank &&
              ext_c[s + 2] != ext_c[s] && b(t + 1, s + 2) != kNegInf)
            acc = lse2(acc, lp(t + 1, s + 2) + b(t + 1, s + 2));
          b(t, s) = acc;
        }
      // chain -gamma through the softmax: d/dlogit = g*(p*Gamma - gamma_k)
      std::vector<double> gamma(nsym);
      for (int t = 0; t < t_len; ++t) {
        std::fill(gamma.begin(), gamma.end(), 0.0);
        double total = 0.0;
        for (int s = 0; s < s_len; ++s) {
          const double as = (*alpha)[static_cast<std::size_t>(t) * s_len + s];
          const double bs = b(t, s);
          if (as == kNegInf || bs == kNegInf) continue;
          const double occ = std::exp(as + bs - log_z);
          gamma[ext_c[s]] += occ;
          total += occ;
        }
        const std::size_t base = static_cast<std::size_t>(t) * nsym;
        for (int k = 0; k < nsym; ++k)
          ln->grad[base + k] +=
              g * (std::exp(ln->data[base + k] - (*lz)[t]) * total - gamma[k]);
      }
    };
  }
  return Tensor(node);
}

Tensor rnnt_loss(const Tensor& logits, const std::vector<int>& targets,
                 int blank) {
  if (logits.rank() != 3) throw DimensionError("rnnt_loss: logits must be 3-D");
  const int t_len = logits.shape()[0];
  const int u_rows = logits.shape()[1];
  const int nsym = logits.shape()[2];
  const int u_len = static_cast<int>(targets.size());
  if (t_len < 1) throw DimensionError("rnnt_loss: T must be >= 1");
  if (u_rows != u_len + 1)
    throw DimensionError("rnnt_loss: logits U extent " +
                         std::to_string(u_rows) + " != targets+1 = " +
                         std::to_string(u_len + 1));
  if (blank < 0 || blank >= nsym)
    throw ConfigError("rnnt_loss: blank index out of range");
  for (int y : targets)
    if (y < 0 || y >= nsym || y == blank)
      throw VocabError("rnnt_loss: bad target symbol " + std::to_string(y));

  auto ln = logits.node();
  auto lz = std::make_shared<std::vector<double>>(row_lse(ln->data, nsym));
  auto lp = [&](int t, int u, int k) {
    const std::size_t r = static_cast<std::size_t>(t) * u_rows + u;
    return ln->data[r * nsym + k] - (*lz)[r];
  };

  auto alpha = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(t_len) * u_rows, kNegInf);
  auto a = [&](int t, int u) -> double& {
    return (*alpha)[static_cast<std::size_t>(t) * u_rows + u];
  };
  a(0, 0) = 0.0;
  for (int t = 0; t < t_len; ++t)
    for (int u = 0; u <= u_len; ++u) {
      if (t == 0 && u == 0) continue;
      double v = kNegInf;
      if (t > 0 && a(t - 1, u) != kNegInf)
        v = a(t - 1, u) + lp(t - 1, u, blank);
      if (u > 0 && a(t, u - 1) != kNegInf)
        v = lse2(v, a(t, u - 1) + lp(t, u - 1, targets[u - 1]));
      a(t, u) = v;
    }
  const double log_z = a(t_len - 1, u_len) + lp(t_len - 1, u_len, blank);
  if (!std::isfinite(log_z))
    throw NumericError("rnnt_loss: non-finite path sum");

  auto node = std::make_shared<TensorNode>();
  node->shape = {1};
  node->alloc_data(1);
  node->data[0] = -log_z;
  node->requires_grad = ln->requires_grad;
  if (node->requires_grad) {
    node->parents = {ln};
    std::vector<int> tc = targets;
    node->backward_fn = [ln, lz, alpha, tc, t_len, u_rows, nsym, blank,
                         log_z](TensorNode& self) {
      accumulate_ready(*ln);
      const double g = self.grad[0];
      const int u_len = static_cast<int>(tc.size());
      auto lp = [&](int t, int u, int k) {
        const std::size_t r = static_cast<std::size_t>(t) * u_rows + u;
        return ln->data[r * nsym + k] - (*lz)[r];
      };
      // beta over t in [0, T]; beta(T, U) = 0
      std::vector<double> beta(static_cast<std::size_t>(t_len + 1) * u_rows,
                               kNegInf);
      auto b = [&](int t, int u) -> double& {
        return beta[static_cast<std::size_t>(t) * u_rows + u];
      };
      b(t_len, u_len) = 0.0;
      for (int t = t_len - 1; t >= 0; --t)
        for (int u = u_len; u >= 0; --u) {
          double v = kNegInf;
          if (b(t + 1, u) != kNegInf) v = lp(t, u, blank) + b(t + 1, u);
          if (u < u_len && b(t, u + 1) != kNegInf)
            v = lse2(v, lp(t, u, tc[u]) + b(t, u + 1));
          b(t, u) = v;
        }
      for (int t = 0; t < t_len; ++t)
        for (int u = 0; u <= u_len; ++u) {
          const std::size_t r = static_cast<std::size_t>(t) * u_rows + u;
          const double at = (*alpha)[r];
          if (at == kNegInf) continue;
          double occ_blank = 0.0, occ_emit = 0.0;
          if (b(t + 1, u) != kNegInf)
            occ_blank = std::exp(at + lp(t, u, blank) + b(t + 1, u) - log_z);
          if (u < u_len && b(t, u + 1) != kNegInf)
            occ_emit = std::exp(at + lp(t, u, tc[u]) + b(t, u + 1) - log_z);
          const double total = occ_blank + occ_emit;
          if (total == 0.0) continue;
          const std::size_t base = r * nsym;
          // softmax chain: d/dlogit_k = g*(p_k*total - occ_k)
          for (int k = 0; k < nsym; ++k)
            ln->grad[base + k] +=
                g * std::exp(ln->data[base + k] - (*lz)[r]) * total;
          ln->grad[base + blank] -= g * occ_blank;
          if (u < u_len) ln->grad[base + tc[u]] -= g * occ_emit;
        }
    };
  }
  return Tensor(node);
}

namespace {

// plain softmax of one logit row, no shared code with the graph ops
std::vector<double> plain_softmax(const double* row, int n) {
  double mx = row[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(row[i] - mx);
    z += p[i];
  }
  for (int i = 0; i < n; ++i) p[i] /= z;
  return p;
}

double rnnt_enum(int t, int u, int t_len, int u_len,
                 const std::vector<std::vector<double>>& probs, int u_rows,
                 int nsym, int blank, const std::vector<int>& targets) {
  if (t == t_len) return u == u_len ? 1.0 : 0.0;
  const auto& p = probs[static_cast<std::size_t>(t) * u_rows + u];
  double total = p[blank] * rnnt_enum(t + 1, u, t_len, u_len, probs, u_rows,
                                      nsym, blank, targets);
  if (u < u_len)
    total += p[targets[u]] * rnnt_enum(t, u + 1, t_len, u_len, probs, u_rows,
                                       nsym, blank, targets);
  return total;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

double enumerate_paths_oracle(const Tensor& logits,
                              const std::vector<int>& targets, PathKind kind,
                              int blank) {
  if (kind == PathKind::kCtc) {
    const int t_len = logits.shape()[0];
    const int nsym = logits.shape()[1];
    double count = std::pow(static_cast<double>(nsym), t_len);
    if (count > 2e6)
      throw ConfigError("enumerate_paths_oracle: instance too large");
    std::vector<std::vector<double>> probs(t_len);
    for (int t = 0; t < t_len; ++t)
      probs[t] = plain_softmax(logits.data().data() +
                                   static_cast<std::size_t>(t) * nsym,
                               nsym);
    double total = 0.0;
    std::vector<int> path(t_len, 0);
    while (true) {
      // collapse: merge repeats, drop blanks
      std::vector<int> lab;
      int prev = -1;
      for (int t = 0; t < t_len; ++t) {
        if (path[t] != prev && path[t] != blank) lab.push_back(path[t]);
        prev = path[t];
      }
      if (lab == targets) {
        double p = 1.0;
        for (int t = 0; t < t_len; ++t) p *= probs[t][path[t]];
        total += p;
      }
      int i = t_len - 1;
      while (i >= 0 && path[i] == nsym - 1) path[i--] = 0;
      if (i < 0) break;
      ++path[i];
    }
    return -std::log(total);
  }

  const int t_len = logits.shape()[0];
  const int u_rows = logits.shape()[1];
  const int nsym = logits.shape()[2];
  const int u_len = static_cast<int>(targets.size());
  if (binomial(t_len + u_len, u_len) > 2e5)
    throw ConfigError("enumerate_paths_oracle: instance too large");
  std::vector<std::vector<double>> probs(
      static_cast<std::size_t>(t_len) * u_rows);
  for (int t = 0; t < t_len; ++t)
    for (int u = 0; u < u_rows; ++u)
      probs[static_cast<std::size_t>(t) * u_rows + u] = plain_softmax(
          logits.data().data() +
              (static_cast<std::size_t>(t) * u_rows + u) * nsym,
          nsym);
  double total = rnnt_enum(0, 0, t_len, u_len, probs, u_rows, nsym, blank,
                           targets);
  return -std::log(total);
}

LossBreakdown combine(const LossParts& parts, double lambda1, double lambda2,
                      double lambda3) {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
    throw ConfigError("combine: loss weights must be non-negative");
  LossBreakdown out;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;
  out.lambda3 = lambda3;
  Tensor total;
  auto accumulate = [&total](const Tensor& term, double lam) {
    if (!term.defined() || lam == 0.0) return;
    Tensor weighted = lam == 1.0 ? term : scale(term, lam);
    total = total.defined() ? add(total, weighted) : weighted;
  };
  if (parts.rnnt.defined()) {
    out.baseline = true;
    out.rnnt = parts.rnnt.value();
    accumulate(parts.rnnt, 1.0);
  } else if (parts.joint_ce.defined()) {
    out.joint_ce = parts.joint_ce.value();
    accumulate(parts.joint_ce, 1.0);
  }
  if (parts.lm_ce.defined()) {
    out.lm_ce = parts.lm_ce.value();
    accumulate(parts.lm_ce, lambda1);
  }
  if (parts.quantity.defined() && !out.baseline) {
    out.quantity = parts.quantity.value();
    accumulate(parts.quantity, lambda2);
  }
  if (parts.ctc.defined()) {
    out.ctc = parts.ctc.value();
    accumulate(parts.ctc, lambda3);
  }
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  out.total_value = out.total.value();
  return out;
}

}  // namespace cift
