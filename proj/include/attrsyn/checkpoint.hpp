#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "attrsyn/nn.hpp"

namespace attrsyn {

using Json = nlohmann::json;
using NamedArrays = std::vector<std::pair<std::string, Tensor<float>>>;

// Checkpoint directory layout: one little-endian float32 file per array plus
// manifest.json listing name, shape, file, offset and caller metadata.
void save_checkpoint(const std::string& dir, const NamedArrays& arrays, const Json& meta);
NamedArrays load_checkpoint(const std::string& dir, Json* meta_out = nullptr);
Json load_checkpoint_meta(const std::string& dir);

const Tensor<float>& find_array(const NamedArrays& arrays, const std::string& name);

NamedArrays snapshot_params(const ParamStore<float>& ps, const std::string& prefix);
void restore_params(ParamStore<float>& ps, const NamedArrays& arrays,
                    const std::string& prefix);

}  // namespace attrsyn
