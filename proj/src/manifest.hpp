#pragma once

// Shared manifest plumbing for float and quantized model containers.

#include "ternia/model.hpp"

#include <json.hpp>

#include <functional>

namespace ternia::detail {

/// Supplies the weight tensor of a dense/conv layer; the default reads the "weights" blob.
using WeightResolver =
    std::function<Tensor(std::size_t index, const nlohmann::json& spec, const Shape& shape, const std::string& where)>;

ModelGraph parse_manifest(const nlohmann::json& doc, const std::filesystem::path& dir, const WeightResolver& weights);

/// Float tensor blob referenced by `key`, checked against `shape` and for finiteness.
Tensor load_param(const std::filesystem::path& dir, const nlohmann::json& spec, const char* key, const Shape& shape,
                  const std::string& where);

/// Writes every non-weight parameter; `weights` emits the weight entry of dense/conv layers.
using WeightWriter = std::function<void(std::size_t index, nlohmann::json& spec)>;
nlohmann::json build_manifest(const ModelGraph& model, const std::filesystem::path& manifest, StagedFiles& files,
                              const WeightWriter& weights);

}  // namespace ternia::detail
