#include "ternia/quant.hpp"

namespace ternia {

std::string_view to_string(Operator op) {
  switch (op) {
    case Operator::naive:
      return "naive";
    case Operator::tquant:
      return "tquant";
    case Operator::mquant:
      return "mquant";
  }
  return "naive";
}

Operator operator_from_string(std::string_view name) {
  for (Operator op : kAllOperators) {
    if (to_string(op) == name) return op;
  }
  throw std::invalid_argument("unknown operator \"" + std::string(name) + "\" (naive|tquant|mquant)");
}

CodeTensor TernaryTensor::codes() const {
  return CodeTensor(shape, std::vector<std::int8_t>(q.codes.data(), q.codes.data() + q.codes.size()));
}

Tensor TernaryTensor::dequantize() const {
  Tensor out(shape);
  out.matrix() = q.dequantize();
  return out;
}

TernaryTensor quantize(const Tensor& w, Operator op) {
  if (w.rank() < 2) throw std::invalid_argument("quantize needs rank >= 2, got " + shape_string(w.shape()));
  return {w.shape(), quantize(w.matrix(), op)};
}

Tensor dequantize(const TernaryTensor& t) { return t.dequantize(); }

Tensor ExpansionStack::dequantize() const {
  Tensor out(shape);
  out.matrix() = reconstruct<float>(terms);
  return out;
}

ExpansionStack expand(const Tensor& w, Operator op, int order) {
  if (w.rank() < 2) throw std::invalid_argument("expand needs rank >= 2, got " + shape_string(w.shape()));
  return {w.shape(), op, expand(w.matrix(), op, order)};
}

namespace {

struct ChannelLayout {
  Index batch;
  Index channels;
  Index plane;
};

ChannelLayout layout_of(const Tensor& x, std::size_t range_len) {
  if (x.rank() < 2) throw std::invalid_argument("activations need a batch axis and a channel axis");
  const Index channels = x.dim(1);
  if (range_len != 1 && static_cast<Index>(range_len) != channels) {
    throw std::invalid_argument("activation range has " + std::to_string(range_len) + " entries for " +
                                std::to_string(channels) + " channels");
  }
  return {x.dim(0), channels, x.size() / (x.dim(0) * channels)};
}

float activation_step(int bits, float range, Operator op) {
  if (bits == 2) return static_cast<float>(step_factor(op)) * range;
  const auto [lo, hi] = code_interval(bits);
  return std::max(range / static_cast<float>(-lo), range / static_cast<float>(hi));
}

// Ternary activations share the weight code set {-1, 0, 1}.
std::pair<std::int32_t, std::int32_t> clamp_interval(int bits) {
  return bits == 2 ? std::pair<std::int32_t, std::int32_t>{-1, 1} : code_interval(bits);
}

void check_bits(int bits) {
  if (bits != 2 && bits != 4 && bits != 8) throw std::invalid_argument("activation bits must be 2, 4 or 8");
}

template <typename Visit>
void for_each_channel(const ChannelLayout& lay, std::span<const float> range, int bits, Operator op, Visit&& visit) {
  for (Index c = 0; c < lay.channels; ++c) {
    const float r = range.size() == 1 ? range[0] : range[static_cast<std::size_t>(c)];
    const float step = r > 0.0f ? activation_step(bits, r, op) : 0.0f;
    for (Index b = 0; b < lay.batch; ++b) visit(c, step, (b * lay.channels + c) * lay.plane);
  }
}

}  // namespace

Tensor QuantizedTensorB::dequantize() const {
  Tensor out(shape);
  const ChannelLayout lay{shape[0], shape[1], shape_size(shape) / (shape[0] * shape[1])};
  for (Index c = 0; c < lay.channels; ++c) {
    for (Index b = 0; b < lay.batch; ++b) {
      const Index base = (b * lay.channels + c) * lay.plane;
      for (Index i = 0; i < lay.plane; ++i) out[base + i] = static_cast<float>(codes[base + i]) * scale[c];
    }
  }
  return out;
}

QuantizedTensorB quantize_activations(const Tensor& x, int bits, std::span<const float> range, Operator op) {
  check_bits(bits);
  const ChannelLayout lay = layout_of(x, range.size());
  const auto [lo, hi] = clamp_interval(bits);
  QuantizedTensorB out{x.shape(), bits, BasicTensor<std::int32_t>(x.shape()), Vector<float>::Zero(lay.channels)};
  for_each_channel(lay, range, bits, op, [&](Index c, float step, Index base) {
    out.scale[c] = step;
    if (step == 0.0f) return;
    for (Index i = 0; i < lay.plane; ++i) {
      const float v = std::round(x[base + i] / step);
      out.codes[base + i] = static_cast<std::int32_t>(std::clamp(v, static_cast<float>(lo), static_cast<float>(hi)));
    }
  });
  return out;
}

void fake_quantize_activations(Tensor& x, int bits, std::span<const float> range, Operator op) {
  check_bits(bits);
  const ChannelLayout lay = layout_of(x, range.size());
  const auto [lo, hi] = clamp_interval(bits);
  const float lo_f = static_cast<float>(lo), hi_f = static_cast<float>(hi);
  for_each_channel(lay, range, bits, op, [&](Index, float step, Index base) {
    for (Index i = 0; i < lay.plane; ++i) {
      x[base + i] = step == 0.0f ? 0.0f : std::clamp(std::round(x[base + i] / step), lo_f, hi_f) * step;
    }
  });
}

}  // namespace ternia
