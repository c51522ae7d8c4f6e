#pragma once

#include "ternia/dataset.hpp"
#include "ternia/model.hpp"
#include "ternia/quant.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ternia {

struct QatConfig {
  std::vector<Index> hidden{16, 16};  // mlp hidden widths
  int epochs = 30;
  double learning_rate = 0.05;
  double momentum = 0.9;
  Index batch_size = 32;
  int weight_bits = 2;
  int act_bits = 4;                 // 0 keeps activations in full precision
  std::optional<Operator> op = Operator::tquant;  // nullopt trains full-precision weights
  double range_momentum = 0.9;      // running max of hidden activations: EMA of per-batch max
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

/// "mlp:16,16" -> {16, 16}; "mlp" or "mlp:" -> no hidden layers.
std::vector<Index> parse_arch(const std::string& arch);
std::string format_arch(const std::vector<Index>& hidden);

/// Full-precision master parameters of a ReLU MLP plus the tracked activation ranges.
template <typename Scalar>
struct Mlp {
  std::vector<RowMatrix<Scalar>> weights;  // [out, in]
  std::vector<Vector<Scalar>> biases;
  std::vector<Scalar> act_range;           // one per hidden layer; 0 = not yet observed

  std::size_t depth() const noexcept { return weights.size(); }

  static Mlp init(Index inputs, const std::vector<Index>& hidden, Index classes, std::mt19937_64& rng) {
    Mlp net;
    Index fan_in = inputs;
    std::vector<Index> widths = hidden;
    widths.push_back(classes);
    for (Index width : widths) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      RowMatrix<Scalar> w(width, fan_in);
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(normal(rng));
      net.weights.push_back(std::move(w));
      net.biases.push_back(Vector<Scalar>::Zero(width));
      fan_in = width;
    }
    net.act_range.assign(hidden.size(), Scalar(0));
    return net;
  }
};

/// Weights the forward pass uses: round-to-nearest with the operator's per-row step, or the
/// master weights themselves when no operator is set.
template <typename Scalar>
RowMatrix<Scalar> forward_weights(const RowMatrix<Scalar>& master, const std::optional<Operator>& op) {
  if (!op) return master;
  return quantize(master, *op).dequantize();
}

template <typename Scalar>
struct MlpGradients {
  Scalar loss = 0;
  std::vector<RowMatrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;
};

struct ForwardOptions {
  std::optional<Operator> op;
  int act_bits = 0;
  bool update_ranges = false;
  double range_momentum = 0.9;
};

namespace detail {

// Fake-quantized hidden activations: b-bit step r / (2^(b-1) - 1) on [-r, r], clamped to the code interval.
template <typename Scalar>
void fake_quantize_hidden(RowMatrix<Scalar>& a, Scalar range, int bits) {
  if (!(range > Scalar(0))) return;
  const auto [lo, hi] = code_interval(bits);
  const Scalar step = range / static_cast<Scalar>(hi);
  a = a.unaryExpr([&](Scalar v) {
    return std::clamp(std::round(v / step), static_cast<Scalar>(lo), static_cast<Scalar>(hi)) * step;
  });
}

}  // namespace detail

/// Logits for a batch [n, inputs]. With update_ranges, each hidden layer's range moves
/// toward the batch max before quantizing (training mode).
template <typename Scalar>
RowMatrix<Scalar> mlp_forward(Mlp<Scalar>& net, const RowMatrix<Scalar>& x, const ForwardOptions& opt,
                              std::vector<RowMatrix<Scalar>>* activations = nullptr,
                              std::vector<RowMatrix<Scalar>>* preacts = nullptr,
                              std::vector<RowMatrix<Scalar>>* used_weights = nullptr) {
  RowMatrix<Scalar> a = x;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    RowMatrix<Scalar> wq = forward_weights(net.weights[l], opt.op);
    if (activations) activations->push_back(a);
    RowMatrix<Scalar> z = a * wq.transpose();
    z.rowwise() += net.biases[l].transpose();
    if (used_weights) used_weights->push_back(std::move(wq));
    if (l + 1 == net.depth()) return z;
    if (preacts) preacts->push_back(z);
    a = z.cwiseMax(Scalar(0));
    if (opt.act_bits > 0) {
      Scalar& range = net.act_range[l];
      if (opt.update_ranges) {
        const Scalar batch_max = a.size() ? a.maxCoeff() : Scalar(0);
        const auto m = static_cast<Scalar>(opt.range_momentum);
        range = range > Scalar(0) ? m * range + (Scalar(1) - m) * batch_max : batch_max;
      }
      detail::fake_quantize_hidden(a, range, opt.act_bits);
    }
  }
  return a;
}

/// Mean softmax cross-entropy of logits against labels, and its gradient w.r.t. the logits.
template <typename Scalar>
Scalar softmax_cross_entropy(const RowMatrix<Scalar>& logits, std::span<const int> labels, RowMatrix<Scalar>* grad) {
  const Index n = logits.rows();
  Scalar loss = 0;
  if (grad) grad->resize(n, logits.cols());
  for (Index i = 0; i < n; ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    const Vector<Scalar> e = (logits.row(i).array() - mx).exp().matrix().transpose();
    const Scalar z = e.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    loss += std::log(z) - (logits(i, y) - mx);
    if (grad) {
      grad->row(i) = (e / z).transpose();
      (*grad)(i, y) -= Scalar(1);
    }
  }
  if (grad) *grad /= static_cast<Scalar>(n);
  return loss / static_cast<Scalar>(n);
}

/// Straight-through gradients: the backward pass differentiates the quantized forward as if
/// the weight quantizer were the identity inside [-lambda, lambda] (zero outside), and the
/// activation quantizer the identity inside its range.
template <typename Scalar>
MlpGradients<Scalar> ste_gradients(Mlp<Scalar>& net, const RowMatrix<Scalar>& x, std::span<const int> labels,
                                   const ForwardOptions& opt) {
  std::vector<RowMatrix<Scalar>> acts, pre, used;
  const RowMatrix<Scalar> logits = mlp_forward(net, x, opt, &acts, &pre, &used);
  RowMatrix<Scalar> dz;
  MlpGradients<Scalar> g;
  g.loss = softmax_cross_entropy(logits, labels, &dz);
  g.weights.resize(net.depth());
  g.biases.resize(net.depth());
  for (std::size_t l = net.depth(); l-- > 0;) {
    RowMatrix<Scalar> dw = dz.transpose() * acts[l];
    if (opt.op) {
      const Vector<Scalar> lambda = ternary_scale(net.weights[l]);
      for (Index r = 0; r < dw.rows(); ++r) {
        for (Index c = 0; c < dw.cols(); ++c) {
          if (std::abs(net.weights[l](r, c)) > lambda[r]) dw(r, c) = Scalar(0);
        }
      }
    }
    g.weights[l] = std::move(dw);
    g.biases[l] = dz.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix<Scalar> da = dz * used[l];
    const RowMatrix<Scalar>& z = pre[l - 1];
    const Scalar range = opt.act_bits > 0 ? net.act_range[l - 1] : Scalar(0);
    for (Index i = 0; i < da.size(); ++i) {
      const Scalar zi = z.data()[i];
      const bool pass = zi > Scalar(0) && (!(range > Scalar(0)) || zi <= range);
      if (!pass) da.data()[i] = Scalar(0);
    }
    dz = std::move(da);
  }
  return g;
}

struct SeedResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;        // held-out split, quantized forward
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
  std::vector<double> epoch_accuracy;  // held-out accuracy after each epoch
};

struct RunSummary {
  std::vector<SeedResult> seeds;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over non-diverged seeds
  int diverged = 0;
};

struct TrainedMlp {
  Mlp<float> net;
  QatConfig cfg;
};

/// Accuracy under the same quantized forward used in training (ranges frozen).
double evaluate_quantized(const Mlp<float>& net, const QatConfig& cfg, const Dataset& data);

/// One seed of STE training; `test` is the held-out split reported per epoch.
TrainedMlp ste_train_seed(const Dataset& train, const Dataset& test, const QatConfig& cfg, std::uint64_t seed,
                          SeedResult& result);

/// Every seed in cfg.seeds (run concurrently); returns the summary and the first seed's model.
RunSummary ste_train(const Dataset& train, const Dataset& test, const QatConfig& cfg,
                     std::vector<TrainedMlp>* models = nullptr);

/// Master weights as a float ModelGraph (dense/relu stack).
ModelGraph to_model_graph(const Mlp<float>& net);

}  // namespace ternia
