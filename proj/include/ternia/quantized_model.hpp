#pragma once

#include "ternia/model.hpp"
#include "ternia/quant.hpp"

#include <map>

namespace ternia {

/// A model whose dense/conv weights are ternary expansion stacks. `graph` carries every
/// other parameter; its weight tensors hold the dequantized stacks so it can be run directly.
struct QuantizedModel {
  ModelGraph graph;
  std::map<std::size_t, ExpansionStack> weights;

  void refresh_weights();
};

/// Expansion of every weight layer; biases and batchnorm parameters are copied unchanged.
QuantizedModel quantize_model(const ModelGraph& model, Operator op, int order);

/// Container manifest: the float manifest layout with each weight entry replaced by
/// {"op", "order", "terms": [{"codes": int8 blob, "scale": float32 blob}]}.
StagedFiles quantized_model_files(const QuantizedModel& model, const std::filesystem::path& manifest);
void save_quantized_model(const QuantizedModel& model, const std::filesystem::path& manifest);
QuantizedModel load_quantized_model(const std::filesystem::path& manifest);

bool is_quantized_manifest(const std::filesystem::path& manifest);

}  // namespace ternia
