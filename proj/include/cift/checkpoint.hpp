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

#ifndef CIFT_CHECKPOINT_HPP
#define CIFT_CHECKPOINT_HPP

#include <string>

#include "cift/model.hpp"

namespace cift {

// Binary format: magic "CIFT0001", u32 tensor count, then per tensor
// u32 name length + name, u32 rank, u32 extents, little-endian f64
// payload; trailing u32 + JSON copy of the model config. Round-trips
// bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path,
                     const std::string& extra_config_json = "");
ModelParams load_checkpoint(const std::string& path,
                            std::string* extra_config_json = nullptr);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace cift

#endif  // CIFT_CHECKPOINT_HPP
