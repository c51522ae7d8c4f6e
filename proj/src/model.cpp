#include "ternia/model.hpp"

#include "manifest.hpp"

#include <array>

namespace ternia {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kKindNames{{
    {LayerKind::dense, "dense"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},
    {LayerKind::avgpool, "avgpool"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::add, "add"},
}};

}  // namespace

namespace detail {

Tensor load_param(const std::filesystem::path& dir, const json& spec, const char* key, const Shape& shape,
                  const std::string& where) {
  if (!spec.contains(key)) throw ModelError(where + ": missing \"" + key + "\" blob");
  const auto path = dir / spec.at(key).get<std::string>();
  std::vector<float> values;
  try {
    values = read_f32_blob(path);
  } catch (const std::exception& e) {
    throw ModelError(where + ": " + e.what());
  }
  if (static_cast<Index>(values.size()) != shape_size(shape)) {
    throw ModelError(where + ": shape mismatch for " + key + ", blob has " + std::to_string(values.size()) +
                     " floats, declared " + shape_string(shape));
  }
  Tensor t(shape, std::move(values));
  if (!t.all_finite()) throw ModelError(where + ": non-finite value in " + key);
  return t;
}

}  // namespace detail

namespace {

using detail::load_param;

Index positive(const json& spec, const char* key, const std::string& where) {
  if (!spec.contains(key)) throw ModelError(where + ": missing \"" + key + "\"");
  const auto v = spec.at(key).get<Index>();
  if (v <= 0) throw ModelError(where + ": \"" + key + "\" must be positive");
  return v;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ModelError("unknown layer kind \"" + std::string(name) + "\"");
}

std::string Layer::describe(std::size_t index) const {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(kind)) + ")";
}

Layer make_dense(const Tensor& weights, const Tensor& bias) {
  Layer l;
  l.kind = LayerKind::dense;
  l.out = weights.dim(0);
  l.in = weights.dim(1);
  l.weights = weights;
  l.bias = bias;
  return l;
}

Layer make_conv2d(const Tensor& weights, const Tensor& bias, Index stride, Index padding) {
  Layer l;
  l.kind = LayerKind::conv2d;
  l.out = weights.dim(0);
  l.in = weights.dim(1);
  l.kernel = weights.dim(2);
  l.stride = stride;
  l.padding = padding;
  l.weights = weights;
  l.bias = bias;
  return l;
}

Layer make_batchnorm(const Tensor& gamma, const Tensor& beta, const Tensor& mean, const Tensor& var, float eps) {
  Layer l;
  l.kind = LayerKind::batchnorm;
  l.channels = gamma.size();
  l.gamma = gamma;
  l.beta = beta;
  l.mean = mean;
  l.var = var;
  l.eps = eps;
  return l;
}

Layer make_relu() { return Layer{}; }

Layer make_flatten() {
  Layer l;
  l.kind = LayerKind::flatten;
  return l;
}

Layer make_avgpool(Index kernel, Index stride) {
  Layer l;
  l.kind = LayerKind::avgpool;
  l.kernel = kernel;
  l.stride = stride > 0 ? stride : kernel;
  return l;
}

Layer make_add(int from) {
  Layer l;
  l.kind = LayerKind::add;
  l.from = from;
  return l;
}

std::vector<Shape> ModelGraph::infer_shapes() const {
  if (input.empty()) throw ModelError("model input shape is not set");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string where = l.describe(i);
    auto fail = [&](const std::string& msg) { throw ModelError(where + ": " + msg + ", input " + shape_string(cur)); };
    switch (l.kind) {
      case LayerKind::dense:
        if (cur.size() != 1 || cur[0] != l.in) fail("expects [" + std::to_string(l.in) + "]");
        if (l.weights.shape() != Shape{l.out, l.in}) fail("weights shape " + shape_string(l.weights.shape()));
        if (l.bias.shape() != Shape{l.out}) fail("bias shape " + shape_string(l.bias.shape()));
        cur = {l.out};
        break;
      case LayerKind::conv2d: {
        if (cur.size() != 3 || cur[0] != l.in) fail("expects [" + std::to_string(l.in) + ",h,w]");
        if (l.weights.shape() != Shape{l.out, l.in, l.kernel, l.kernel}) {
          fail("weights shape " + shape_string(l.weights.shape()));
        }
        if (l.bias.shape() != Shape{l.out}) fail("bias shape " + shape_string(l.bias.shape()));
        if (l.stride <= 0 || l.padding < 0) fail("invalid stride/padding");
        const Index oh = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
        const Index ow = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
        if (oh <= 0 || ow <= 0) fail("kernel larger than padded input");
        cur = {l.out, oh, ow};
        break;
      }
      case LayerKind::batchnorm:
        if (cur.empty() || cur[0] != l.channels) fail("expects " + std::to_string(l.channels) + " channels");
        for (const Tensor* t : {&l.gamma, &l.beta, &l.mean, &l.var}) {
          if (t->shape() != Shape{l.channels}) fail("parameter shape " + shape_string(t->shape()));
        }
        if ((l.var.flat().array() + l.eps <= 0.0f).any()) fail("non-positive variance");
        break;
      case LayerKind::relu:
        break;
      case LayerKind::avgpool:
        if (cur.size() != 3) fail("expects [c,h,w]");
        if (l.kernel == 0) {
          cur = {cur[0], 1, 1};
        } else {
          if (l.stride <= 0 || l.kernel > cur[1] || l.kernel > cur[2]) fail("invalid pooling window");
          cur = {cur[0], (cur[1] - l.kernel) / l.stride + 1, (cur[2] - l.kernel) / l.stride + 1};
        }
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::add: {
        if (l.from >= static_cast<int>(i) || l.from < -1) fail("skip reference must precede the layer");
        const Shape& other = l.from < 0 ? input : shapes[static_cast<std::size_t>(l.from)];
        if (other != cur) fail("skip shape " + shape_string(other) + " differs");
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void ModelGraph::validate() const { (void)infer_shapes(); }

std::vector<std::size_t> ModelGraph::weight_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_weights()) out.push_back(i);
  }
  return out;
}

namespace detail {

ModelGraph parse_manifest(const json& doc, const std::filesystem::path& dir, const WeightResolver& weights) {
  if (!doc.contains("layers") || !doc.at("layers").is_array()) throw ModelError("manifest has no layers array");

  ModelGraph g;
  const auto& layers = doc.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& spec = layers[i];
    Layer l;
    l.kind = layer_kind_from_string(spec.at("kind").get<std::string>());
    const std::string where = l.describe(i);
    try {
      switch (l.kind) {
        case LayerKind::dense:
          l.in = positive(spec, "in", where);
          l.out = positive(spec, "out", where);
          l.weights = weights(i, spec, {l.out, l.in}, where);
          l.bias = load_param(dir, spec, "bias", {l.out}, where);
          break;
        case LayerKind::conv2d:
          l.in = positive(spec, "in", where);
          l.out = positive(spec, "out", where);
          l.kernel = positive(spec, "kernel", where);
          l.stride = spec.value("stride", Index{1});
          l.padding = spec.value("padding", Index{0});
          l.weights = weights(i, spec, {l.out, l.in, l.kernel, l.kernel}, where);
          l.bias = load_param(dir, spec, "bias", {l.out}, where);
          break;
        case LayerKind::batchnorm:
          l.channels = positive(spec, "channels", where);
          l.gamma = load_param(dir, spec, "gamma", {l.channels}, where);
          l.beta = load_param(dir, spec, "beta", {l.channels}, where);
          l.mean = load_param(dir, spec, "mean", {l.channels}, where);
          l.var = load_param(dir, spec, "var", {l.channels}, where);
          l.eps = spec.value("eps", 1e-5f);
          break;
        case LayerKind::avgpool:
          l.kernel = spec.value("kernel", Index{0});
          l.stride = spec.value("stride", l.kernel);
          break;
        case LayerKind::add:
          l.from = spec.at("from").get<int>();
          break;
        case LayerKind::relu:
        case LayerKind::flatten:
          break;
      }
    } catch (const json::exception& e) {
      throw ModelError(where + ": " + e.what());
    }
    g.layers.push_back(std::move(l));
  }

  if (doc.contains("input")) {
    g.input = doc.at("input").get<Shape>();
  } else if (!g.layers.empty() && g.layers.front().kind == LayerKind::dense) {
    g.input = {g.layers.front().in};
  } else {
    throw ModelError("\"input\" shape required when the first layer is not dense");
  }
  g.validate();
  return g;
}

json build_manifest(const ModelGraph& model, const std::filesystem::path& manifest, StagedFiles& files,
                    const WeightWriter& weights) {
  const auto dir = manifest.parent_path();
  const std::string stem = manifest.stem().string();
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    json spec;
    spec["kind"] = to_string(l.kind);
    auto blob = [&](const char* key, const Tensor& t) {
      const std::string name = stem + "_l" + std::to_string(i) + "_" + key + ".bin";
      files.add(dir / name, encode_f32_blob(t.data()));
      spec[key] = name;
    };
    switch (l.kind) {
      case LayerKind::dense:
        spec["in"] = l.in;
        spec["out"] = l.out;
        weights(i, spec);
        blob("bias", l.bias);
        break;
      case LayerKind::conv2d:
        spec["in"] = l.in;
        spec["out"] = l.out;
        spec["kernel"] = l.kernel;
        spec["stride"] = l.stride;
        spec["padding"] = l.padding;
        weights(i, spec);
        blob("bias", l.bias);
        break;
      case LayerKind::batchnorm:
        spec["channels"] = l.channels;
        spec["eps"] = l.eps;
        blob("gamma", l.gamma);
        blob("beta", l.beta);
        blob("mean", l.mean);
        blob("var", l.var);
        break;
      case LayerKind::avgpool:
        spec["kernel"] = l.kernel;
        spec["stride"] = l.stride;
        break;
      case LayerKind::add:
        spec["from"] = l.from;
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
    }
    layers.push_back(std::move(spec));
  }
  json doc;
  doc["input"] = model.input;
  doc["layers"] = std::move(layers);
  return doc;
}

}  // namespace detail

ModelGraph load_model(const std::filesystem::path& manifest) {
  json doc;
  try {
    doc = json::parse(read_file_bytes(manifest));
  } catch (const std::exception& e) {
    throw ModelError(manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  if (doc.contains("format")) throw ModelError(manifest.string() + ": not a float model manifest");
  return detail::parse_manifest(doc, dir, [&](std::size_t, const json& spec, const Shape& shape, const std::string& where) {
    return load_param(dir, spec, "weights", shape, where);
  });
}

StagedFiles model_files(const ModelGraph& model, const std::filesystem::path& manifest) {
  StagedFiles files;
  const std::string stem = manifest.stem().string();
  const auto dir = manifest.parent_path();
  json doc = detail::build_manifest(model, manifest, files, [&](std::size_t i, json& spec) {
    const std::string name = stem + "_l" + std::to_string(i) + "_weights.bin";
    files.add(dir / name, encode_f32_blob(model.layers[i].weights.data()));
    spec["weights"] = name;
  });
  files.add(manifest, doc.dump(2) + "\n");
  return files;
}

void save_model(const ModelGraph& model, const std::filesystem::path& manifest) {
  model.validate();
  model_files(model, manifest).commit();
}

}  // namespace ternia
