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

#include "cift/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cift {

using json = nlohmann::json;

namespace {

bool is_gz(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

std::string read_all(const std::string& path) {
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open " + path);
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, n);
    gzclose(f);
    return out;
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_all(const std::string& path, const std::string& content) {
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot open " + path + " for writing");
    if (!content.empty() &&
        gzwrite(f, content.data(), static_cast<unsigned>(content.size())) <= 0) {
      gzclose(f);
      throw DataError("gzip write failed for " + path);
    }
    gzclose(f);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw DataError("write failed for " + path);
}

}  // namespace

Tensor Utterance::feature_tensor() const {
  return Tensor::from({frames, feat_dim}, features);
}

Dataset generate(const GenConfig& cfg) {
  if (cfg.vocab < 2) throw ConfigError("generate: vocab must be >= 2");
  if (cfg.dwell_min < 1 || cfg.dwell_max > 16 ||
      cfg.dwell_min > cfg.dwell_max)
    throw ConfigError("generate: dwell range must lie in [1, 16]");
  if (cfg.len_min < 0 || cfg.len_min > cfg.len_max)
    throw ConfigError("generate: bad target length range");

  Rng rng(cfg.seed);
  std::vector<std::vector<double>> proto(cfg.vocab,
                                         std::vector<double>(cfg.feat_dim));
  for (auto& p : proto)
    for (double& v : p) v = rng.normal();

  Dataset out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    Utterance u;
    u.id = "utt-" + std::to_string(i);
    u.feat_dim = cfg.feat_dim;
    const int len = rng.uniform_int(cfg.len_min, cfg.len_max);
    for (int k = 0; k < len; ++k) {
      const int tok = rng.uniform_int(0, cfg.vocab - 1);
      const int dwell = rng.uniform_int(cfg.dwell_min, cfg.dwell_max);
      const int start = u.frames;
      for (int f = 0; f < dwell; ++f) {
        for (int c = 0; c < cfg.feat_dim; ++c) {
          double v = proto[tok][c];
          if (cfg.noise > 0.0) v += cfg.noise * rng.normal();
          u.features.push_back(v);
        }
        ++u.frames;
      }
      u.targets.push_back(tok);
      u.spans.emplace_back(start, u.frames);
    }
    out.push_back(std::move(u));
  }
  return out;
}

void write_jsonl(const Dataset& data, const std::string& path) {
  std::ostringstream os;
  for (const auto& u : data) {
    json rec;
    rec["id"] = u.id;
    json feat = json::array();
    for (int t = 0; t < u.frames; ++t) {
      json rowj = json::array();
      for (int c = 0; c < u.feat_dim; ++c)
        rowj.push_back(u.features[static_cast<std::size_t>(t) * u.feat_dim + c]);
      feat.push_back(std::move(rowj));
    }
    rec["features"] = std::move(feat);
    rec["targets"] = u.targets;
    if (!u.spans.empty()) {
      json sp = json::array();
      for (auto [s, e] : u.spans) sp.push_back(json::array({s, e}));
      rec["spans"] = std::move(sp);
    }
    os << rec.dump() << "\n";
  }
  write_all(path, os.str());
}

Dataset read_jsonl(const std::string& path) {
  std::istringstream is(read_all(path));
  Dataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": parse error: " + e.what());
    }
    Utterance u;
    try {
      u.id = rec.at("id").get<std::string>();
      const auto& feat = rec.at("features");
      u.frames = static_cast<int>(feat.size());
      for (const auto& rowj : feat) {
        if (u.feat_dim == 0) u.feat_dim = static_cast<int>(rowj.size());
        if (static_cast<int>(rowj.size()) != u.feat_dim)
          throw DataError(path + ":" + std::to_string(lineno) +
                          ": inconsistent feature row widths");
        for (const auto& v : rowj) u.features.push_back(v.get<double>());
      }
      u.targets = rec.at("targets").get<std::vector<int>>();
      if (rec.contains("spans"))
        for (const auto& sp : rec["spans"])
          u.spans.emplace_back(sp.at(0).get<int>(), sp.at(1).get<int>());
    } catch (const DataError&) {
      throw;
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": schema error: " + e.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<Batch> make_batches(const Dataset& data, int batch_size,
                                bool sort_by_length) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (sort_by_length)
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return data[a].frames < data[b].frames;
                     });
  std::vector<Batch> out;
  for (std::size_t pos = 0; pos < order.size(); pos += batch_size) {
    const std::size_t n =
        std::min<std::size_t>(batch_size, order.size() - pos);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
      const Utterance& u = data[order[pos + i]];
      if (b.feat_dim == 0) b.feat_dim = u.feat_dim;
      if (u.feat_dim != b.feat_dim)
        throw DataError("make_batches: feature dims differ inside batch");
      b.max_frames = std::max(b.max_frames, u.frames);
      b.frames.push_back(u.frames);
      b.targets.push_back(u.targets);
      b.ids.push_back(u.id);
    }
    std::vector<double> padded(static_cast<std::size_t>(n) * b.max_frames *
                                   b.feat_dim,
                               0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Utterance& u = data[order[pos + i]];
      std::copy(u.features.begin(), u.features.end(),
                padded.begin() + i * static_cast<std::size_t>(b.max_frames) *
                                     b.feat_dim);
    }
    b.features = Tensor::from(
        {static_cast<int>(n), b.max_frames, b.feat_dim}, std::move(padded));
    out.push_back(std::move(b));
  }
  return out;
}

Tensor Batch::utterance_features(int b) const {
  const int t = frames[b];
  std::vector<double> buf(static_cast<std::size_t>(t) * feat_dim);
  const std::size_t off =
      static_cast<std::size_t>(b) * max_frames * feat_dim;
  std::copy(features.data().begin() + off,
            features.data().begin() + off + buf.size(), buf.begin());
  return Tensor::from({t, feat_dim}, std::move(buf));
}

}  // namespace cift
