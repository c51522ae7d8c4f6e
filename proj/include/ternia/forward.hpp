#pragma once

#include "ternia/model.hpp"

#include <functional>

namespace ternia {

/// Called with each layer's batch output right after it is computed; may rewrite it in place
/// (fake-quantized activations hook in here).
using LayerHook = std::function<void(std::size_t layer, Tensor& output)>;

/// Reference float forward pass. `batch` is [n, input...]; returns the last layer's output.
Tensor forward(const ModelGraph& model, const Tensor& batch, const LayerHook& hook = {});

/// Outputs of every layer, in order.
std::vector<Tensor> forward_all(const ModelGraph& model, const Tensor& batch, const LayerHook& hook = {});

/// The input seen by layer `index` (the batch itself for index 0).
Tensor layer_input(const ModelGraph& model, const Tensor& batch, std::size_t index, const LayerHook& hook = {});

/// Lowers [n, c, h, w] to [n*oh*ow, c*k*k] patches, rows ordered (n, oy, ox).
RowMatrixXf im2col(const Tensor& x, Index kernel, Index stride, Index padding, Index& out_h, Index& out_w);

/// Rows a weight layer multiplies against its [out, fan_in] weight matrix: the batch itself for
/// dense layers, im2col patches for conv layers.
RowMatrixXf weight_layer_rows(const Layer& layer, const Tensor& input);

Tensor apply_layer(const Layer& layer, const Tensor& x);

}  // namespace ternia
