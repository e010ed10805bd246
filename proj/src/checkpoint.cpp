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

#include "cift/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cift {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'I', 'F', 'T', '0', '0', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated tensor payload");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["feat_dim"] = cfg.feat_dim;
  j["model_dim"] = cfg.model_dim;
  j["embed_dim"] = cfg.embed_dim;
  j["vocab"] = cfg.vocab;
  j["heads"] = cfg.heads;
  j["encoder_layers"] = cfg.encoder_layers;
  j["context_layers"] = cfg.context_layers;
  j["ffn_dim"] = cfg.ffn_dim;
  j["bilinear_rank"] = cfg.bilinear_rank;
  j["beta"] = cfg.beta;
  j["tail_threshold"] = cfg.tail_threshold;
  j["mode"] = cfg.mode == ModelMode::kCifT ? "cift" : "rnnt-baseline";
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  cfg.feat_dim = j.value("feat_dim", cfg.feat_dim);
  cfg.model_dim = j.value("model_dim", cfg.model_dim);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.vocab = j.value("vocab", cfg.vocab);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.encoder_layers = j.value("encoder_layers", cfg.encoder_layers);
  cfg.context_layers = j.value("context_layers", cfg.context_layers);
  cfg.ffn_dim = j.value("ffn_dim", cfg.ffn_dim);
  cfg.bilinear_rank = j.value("bilinear_rank", cfg.bilinear_rank);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.tail_threshold = j.value("tail_threshold", cfg.tail_threshold);
  const std::string mode = j.value("mode", "cift");
  if (mode == "cift")
    cfg.mode = ModelMode::kCifT;
  else if (mode == "rnnt-baseline")
    cfg.mode = ModelMode::kRnntBaseline;
  else
    throw ConfigError("model config: unknown mode '" + mode + "'");
  return cfg;
}

void save_checkpoint(const ModelParams& params, const std::string& path,
                     const std::string& extra_config_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_f64(os, v);
  }
  json trailer = json::parse(model_config_to_json(params.cfg));
  if (!extra_config_json.empty()) trailer["run"] = json::parse(extra_config_json);
  const std::string text = trailer.dump();
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path,
                            std::string* extra_config_json) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const std::uint32_t count = get_u32(is);
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<int>(get_u32(is));
      numel *= shape[r];
    }
    std::vector<double> data(numel);
    for (double& v : data) v = get_f64(is);
    tensors.emplace(name, Tensor::from(shape, std::move(data), true));
  }
  const std::uint32_t cfg_len = get_u32(is);
  std::string text(cfg_len, '\0');
  is.read(text.data(), cfg_len);
  if (!is) throw DataError("checkpoint: truncated trailer");
  json trailer = json::parse(text);
  ModelParams p;
  json cfg_only = trailer;
  cfg_only.erase("run");
  p.cfg = model_config_from_json(cfg_only.dump());
  p.tensors = std::move(tensors);
  if (extra_config_json != nullptr)
    *extra_config_json = trailer.contains("run") ? trailer["run"].dump() : "";
  return p;
}

}  // namespace cift
