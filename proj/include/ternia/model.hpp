#pragma once

#include "ternia/files.hpp"
#include "ternia/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ternia {

enum class LayerKind { dense, conv2d, batchnorm, relu, avgpool, flatten, add };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct Layer {
  LayerKind kind = LayerKind::relu;

  // dense: weights [out, in]; conv2d: weights [out, in, k, k]. bias [out].
  Index in = 0;
  Index out = 0;
  Index kernel = 0;  // conv2d / avgpool (avgpool: 0 = global)
  Index stride = 1;
  Index padding = 0;
  Tensor weights;
  Tensor bias;

  // batchnorm, per channel
  Index channels = 0;
  Tensor gamma;
  Tensor beta;
  Tensor mean;
  Tensor var;
  float eps = 1e-5f;

  // add: output of an earlier layer (-1 = model input) is summed with the previous output.
  int from = -1;

  bool has_weights() const noexcept { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
  std::string describe(std::size_t index) const;
};

/// Sequence of layers operating on a batch whose per-sample shape is `input`.
struct ModelGraph {
  Shape input;  // per-sample shape, e.g. [d] or [c, h, w]
  std::vector<Layer> layers;

  /// Per-sample output shape of every layer; throws naming the first incompatible layer.
  std::vector<Shape> infer_shapes() const;
  void validate() const;
  std::vector<std::size_t> weight_layers() const;
};

Layer make_dense(const Tensor& weights, const Tensor& bias);
Layer make_conv2d(const Tensor& weights, const Tensor& bias, Index stride = 1, Index padding = 0);
Layer make_batchnorm(const Tensor& gamma, const Tensor& beta, const Tensor& mean, const Tensor& var,
                     float eps = 1e-5f);
Layer make_relu();
Layer make_flatten();
Layer make_avgpool(Index kernel, Index stride = 0);
Layer make_add(int from);

/// Reads a JSON manifest plus its raw float32 blobs (paths relative to the manifest).
ModelGraph load_model(const std::filesystem::path& manifest);

/// Manifest and blobs for `model`, blobs named <stem>_l<i>_<param>.bin next to the manifest.
StagedFiles model_files(const ModelGraph& model, const std::filesystem::path& manifest);
void save_model(const ModelGraph& model, const std::filesystem::path& manifest);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ternia
