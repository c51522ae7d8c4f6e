#include "ternia/quantized_model.hpp"

#include "manifest.hpp"

namespace ternia {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "ternia-quantized";

}  // namespace

void QuantizedModel::refresh_weights() {
  for (const auto& [index, stack] : weights) graph.layers.at(index).weights = stack.dequantize();
}

QuantizedModel quantize_model(const ModelGraph& model, Operator op, int order) {
  QuantizedModel q{model, {}};
  for (std::size_t i : model.weight_layers()) q.weights.emplace(i, expand(model.layers[i].weights, op, order));
  q.refresh_weights();
  return q;
}

StagedFiles quantized_model_files(const QuantizedModel& model, const std::filesystem::path& manifest) {
  StagedFiles files;
  const std::string stem = manifest.stem().string();
  const auto dir = manifest.parent_path();
  json doc = detail::build_manifest(model.graph, manifest, files, [&](std::size_t i, json& spec) {
    const auto it = model.weights.find(i);
    if (it == model.weights.end()) throw ModelError(model.graph.layers[i].describe(i) + ": no quantized weights");
    const ExpansionStack& stack = it->second;
    spec["op"] = to_string(stack.op);
    spec["order"] = stack.order();
    json terms = json::array();
    for (int t = 0; t < stack.order(); ++t) {
      const auto& term = stack.terms[static_cast<std::size_t>(t)];
      const std::string base = stem + "_l" + std::to_string(i) + "_t" + std::to_string(t);
      files.add(dir / (base + "_codes.bin"),
                encode_i8_blob(std::span<const std::int8_t>(term.codes.data(), static_cast<std::size_t>(term.codes.size()))));
      files.add(dir / (base + "_scale.bin"),
                encode_f32_blob(std::span<const float>(term.scale.data(), static_cast<std::size_t>(term.scale.size()))));
      terms.push_back({{"codes", base + "_codes.bin"}, {"scale", base + "_scale.bin"}});
    }
    spec["terms"] = std::move(terms);
  });
  doc["format"] = kFormat;
  doc["version"] = 1;
  files.add(manifest, doc.dump(2) + "\n");
  return files;
}

void save_quantized_model(const QuantizedModel& model, const std::filesystem::path& manifest) {
  quantized_model_files(model, manifest).commit();
}

bool is_quantized_manifest(const std::filesystem::path& manifest) {
  try {
    const json doc = json::parse(read_file_bytes(manifest));
    return doc.value("format", std::string{}) == kFormat;
  } catch (const json::exception&) {
    return false;
  }
}

QuantizedModel load_quantized_model(const std::filesystem::path& manifest) {
  json doc;
  try {
    doc = json::parse(read_file_bytes(manifest));
  } catch (const std::exception& e) {
    throw ModelError(manifest.string() + ": " + e.what());
  }
  if (doc.value("format", std::string{}) != kFormat) throw ModelError(manifest.string() + ": not a quantized container");
  const auto dir = manifest.parent_path();

  QuantizedModel q;
  q.graph = detail::parse_manifest(doc, dir, [&](std::size_t i, const json& spec, const Shape& shape,
                                                  const std::string& where) {
    ExpansionStack stack{shape, operator_from_string(spec.at("op").get<std::string>()), {}};
    const auto& terms = spec.at("terms");
    if (terms.size() != spec.at("order").get<std::size_t>() || terms.empty()) {
      throw ModelError(where + ": order does not match the number of terms");
    }
    const Index rows = shape[0];
    const Index cols = shape_size(shape) / rows;
    for (const json& term : terms) {
      const auto codes = read_i8_blob(dir / term.at("codes").get<std::string>());
      if (static_cast<Index>(codes.size()) != rows * cols) throw ModelError(where + ": code blob size mismatch");
      for (std::int8_t c : codes) {
        if (c < -1 || c > 1) throw ModelError(where + ": code outside {-1,0,1}");
      }
      const Tensor scale = detail::load_param(dir, term, "scale", {rows}, where);
      TernaryMatrix<float> m{Eigen::Map<const CodeMatrix>(codes.data(), rows, cols), scale.flat()};
      stack.terms.push_back(std::move(m));
    }
    Tensor deq = stack.dequantize();
    q.weights.emplace(i, std::move(stack));
    return deq;
  });
  return q;
}

}  // namespace ternia
