#include "ternia/forward.hpp"

namespace ternia {

namespace {

Tensor dense_forward(const Layer& l, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != l.in) {
    throw ModelError("dense layer expects [n," + std::to_string(l.in) + "], got " + shape_string(x.shape()));
  }
  Tensor y(Shape{x.rows(), l.out});
  y.matrix().noalias() = x.matrix() * l.weights.matrix().transpose();
  y.matrix().rowwise() += l.bias.flat().transpose();
  return y;
}

Tensor conv_forward(const Layer& l, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != l.in) {
    throw ModelError("conv2d layer expects [n," + std::to_string(l.in) + ",h,w], got " + shape_string(x.shape()));
  }
  Index oh = 0, ow = 0;
  const RowMatrixXf cols = im2col(x, l.kernel, l.stride, l.padding, oh, ow);
  const RowMatrixXf prod = cols * l.weights.matrix().transpose();  // [n*oh*ow, out]
  const Index n = x.dim(0);
  const Index plane = oh * ow;
  Tensor y(Shape{n, l.out, oh, ow});
  auto ym = y.matrix();  // [n, out*plane]
  for (Index b = 0; b < n; ++b) {
    for (Index o = 0; o < l.out; ++o) {
      ym.row(b).segment(o * plane, plane) = prod.col(o).segment(b * plane, plane).transpose().array() + l.bias[o];
    }
  }
  return y;
}

Tensor batchnorm_forward(const Layer& l, const Tensor& x) {
  if (x.rank() < 2 || x.dim(1) != l.channels) {
    throw ModelError("batchnorm expects channel axis of " + std::to_string(l.channels) + ", got " +
                     shape_string(x.shape()));
  }
  Tensor y = x;
  const Index plane = x.size() / (x.dim(0) * l.channels);
  auto ym = y.matrix();
  for (Index c = 0; c < l.channels; ++c) {
    const float scale = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
    const float shift = l.beta[c] - l.mean[c] * scale;
    for (Index b = 0; b < ym.rows(); ++b) {
      auto seg = ym.row(b).segment(c * plane, plane).array();
      seg = seg * scale + shift;
    }
  }
  return y;
}

Tensor avgpool_forward(const Layer& l, const Tensor& x) {
  if (x.rank() != 4) throw ModelError("avgpool expects [n,c,h,w], got " + shape_string(x.shape()));
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index k_h = l.kernel == 0 ? h : l.kernel;
  const Index k_w = l.kernel == 0 ? w : l.kernel;
  const Index stride = l.kernel == 0 ? 1 : l.stride;
  const Index oh = (h - k_h) / stride + 1, ow = (w - k_w) / stride + 1;
  Tensor y(Shape{n, c, oh, ow});
  const float norm = 1.0f / static_cast<float>(k_h * k_w);
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index base = (b * c + ch) * h * w;
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (Index ky = 0; ky < k_h; ++ky) {
            for (Index kx = 0; kx < k_w; ++kx) acc += x[base + (oy * stride + ky) * w + ox * stride + kx];
          }
          y[((b * c + ch) * oh + oy) * ow + ox] = acc * norm;
        }
      }
    }
  }
  return y;
}

}  // namespace

RowMatrixXf im2col(const Tensor& x, Index kernel, Index stride, Index padding, Index& out_h, Index& out_w) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  out_h = (h + 2 * padding - kernel) / stride + 1;
  out_w = (w + 2 * padding - kernel) / stride + 1;
  RowMatrixXf cols = RowMatrixXf::Zero(n * out_h * out_w, c * kernel * kernel);
  for (Index b = 0; b < n; ++b) {
    for (Index oy = 0; oy < out_h; ++oy) {
      for (Index ox = 0; ox < out_w; ++ox) {
        const Index row = (b * out_h + oy) * out_w + ox;
        for (Index ch = 0; ch < c; ++ch) {
          for (Index ky = 0; ky < kernel; ++ky) {
            const Index iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= h) continue;
            for (Index kx = 0; kx < kernel; ++kx) {
              const Index ix = ox * stride + kx - padding;
              if (ix < 0 || ix >= w) continue;
              cols(row, (ch * kernel + ky) * kernel + kx) = x[((b * c + ch) * h + iy) * w + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

RowMatrixXf weight_layer_rows(const Layer& layer, const Tensor& input) {
  if (layer.kind == LayerKind::dense) return input.matrix();
  if (layer.kind == LayerKind::conv2d) {
    Index oh = 0, ow = 0;
    return im2col(input, layer.kernel, layer.stride, layer.padding, oh, ow);
  }
  throw ModelError("layer has no weights");
}

Tensor apply_layer(const Layer& layer, const Tensor& x) {
  switch (layer.kind) {
    case LayerKind::dense:
      return dense_forward(layer, x);
    case LayerKind::conv2d:
      return conv_forward(layer, x);
    case LayerKind::batchnorm:
      return batchnorm_forward(layer, x);
    case LayerKind::relu: {
      Tensor y = x;
      y.flat() = y.flat().cwiseMax(0.0f);
      return y;
    }
    case LayerKind::avgpool:
      return avgpool_forward(layer, x);
    case LayerKind::flatten:
      return x.reshaped(Shape{x.dim(0), x.size() / x.dim(0)});
    case LayerKind::add:
      throw ModelError("add layers need the graph context");
  }
  throw ModelError("unhandled layer kind");
}

namespace {

void check_batch(const ModelGraph& model, const Tensor& batch) {
  Shape expect{batch.rank() > 0 ? batch.dim(0) : 0};
  expect.insert(expect.end(), model.input.begin(), model.input.end());
  if (batch.shape() != expect) {
    throw ModelError("batch shape " + shape_string(batch.shape()) + " does not match model input " +
                     shape_string(model.input));
  }
}

template <typename Sink>
void run(const ModelGraph& model, const Tensor& batch, std::size_t stop, const LayerHook& hook, Sink&& sink) {
  check_batch(model, batch);
  std::vector<Tensor> outputs;
  outputs.reserve(stop);
  for (std::size_t i = 0; i < stop; ++i) {
    const Layer& l = model.layers[i];
    const Tensor& x = i == 0 ? batch : outputs.back();
    Tensor y;
    if (l.kind == LayerKind::add) {
      const Tensor& skip = l.from < 0 ? batch : outputs.at(static_cast<std::size_t>(l.from));
      if (skip.shape() != x.shape()) throw ModelError(l.describe(i) + ": skip shape mismatch");
      y = x;
      y.flat() += skip.flat();
    } else {
      try {
        y = apply_layer(l, x);
      } catch (const ModelError& e) {
        throw ModelError(l.describe(i) + ": " + e.what());
      }
    }
    if (hook) hook(i, y);
    outputs.push_back(std::move(y));
  }
  sink(batch, outputs);
}

}  // namespace

Tensor forward(const ModelGraph& model, const Tensor& batch, const LayerHook& hook) {
  Tensor out;
  run(model, batch, model.layers.size(), hook, [&](const Tensor& in, std::vector<Tensor>& outs) {
    out = outs.empty() ? in : std::move(outs.back());
  });
  return out;
}

std::vector<Tensor> forward_all(const ModelGraph& model, const Tensor& batch, const LayerHook& hook) {
  std::vector<Tensor> out;
  run(model, batch, model.layers.size(), hook, [&](const Tensor&, std::vector<Tensor>& outs) { out = std::move(outs); });
  return out;
}

Tensor layer_input(const ModelGraph& model, const Tensor& batch, std::size_t index, const LayerHook& hook) {
  Tensor out;
  run(model, batch, index, hook, [&](const Tensor& in, std::vector<Tensor>& outs) {
    out = outs.empty() ? in : std::move(outs.back());
  });
  return out;
}

}  // namespace ternia
