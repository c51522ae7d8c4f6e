#include "ternia/qat.hpp"

#include "ternia/parallel.hpp"

#include <numeric>
#include <sstream>

namespace ternia {

void QatConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("qat: epochs must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("qat: learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("qat: momentum must be in [0, 1)");
  if (batch_size <= 0) throw std::invalid_argument("qat: batch size must be positive");
  if (weight_bits != 2) throw std::invalid_argument("qat: only ternary (2-bit) weights are supported");
  if (act_bits != 0 && act_bits != 2 && act_bits != 4 && act_bits != 8) {
    throw std::invalid_argument("qat: activation bits must be 0 (off), 2, 4 or 8");
  }
  if (range_momentum < 0.0 || range_momentum >= 1.0) throw std::invalid_argument("qat: range momentum must be in [0, 1)");
  if (seeds.empty()) throw std::invalid_argument("qat: at least one seed required");
  for (Index h : hidden) {
    if (h <= 0) throw std::invalid_argument("qat: hidden widths must be positive");
  }
}

std::vector<Index> parse_arch(const std::string& arch) {
  if (arch.rfind("mlp", 0) != 0) throw std::invalid_argument("unsupported architecture \"" + arch + "\" (mlp:W1,W2,...)");
  std::vector<Index> hidden;
  if (arch.size() <= 4) return hidden;
  if (arch[3] != ':') throw std::invalid_argument("expected mlp:W1,W2,... got \"" + arch + "\"");
  std::stringstream ss(arch.substr(4));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(tok, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad layer width \"" + tok + "\"");
    }
    if (used != tok.size() || v <= 0) throw std::invalid_argument("bad layer width \"" + tok + "\"");
    hidden.push_back(v);
  }
  return hidden;
}

std::string format_arch(const std::vector<Index>& hidden) {
  std::string out = "mlp:";
  for (std::size_t i = 0; i < hidden.size(); ++i) out += (i ? "," : "") + std::to_string(hidden[i]);
  return out;
}

namespace {

ForwardOptions eval_options(const QatConfig& cfg) { return {cfg.op, cfg.act_bits, false, cfg.range_momentum}; }

RowMatrixXf flat_features(const Dataset& d) { return d.features.matrix(); }

}  // namespace

double evaluate_quantized(const Mlp<float>& net, const QatConfig& cfg, const Dataset& data) {
  Mlp<float> copy = net;
  const RowMatrixXf logits = mlp_forward(copy, flat_features(data), eval_options(cfg));
  return accuracy(Tensor::from_matrix(logits), data.labels);
}

TrainedMlp ste_train_seed(const Dataset& train, const Dataset& test, const QatConfig& cfg, std::uint64_t seed,
                          SeedResult& result) {
  cfg.validate();
  const int classes = std::max(train.num_classes(), test.num_classes());
  std::mt19937_64 rng(seed);
  TrainedMlp out{Mlp<float>::init(train.features.cols(), cfg.hidden, classes, rng), cfg};
  Mlp<float>& net = out.net;

  std::vector<RowMatrixXf> vel_w;
  std::vector<Vector<float>> vel_b;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    vel_w.push_back(RowMatrixXf::Zero(net.weights[l].rows(), net.weights[l].cols()));
    vel_b.push_back(Vector<float>::Zero(net.biases[l].size()));
  }

  const RowMatrixXf x_all = flat_features(train);
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  ForwardOptions train_opt{cfg.op, cfg.act_bits, true, cfg.range_momentum};
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mom = static_cast<float>(cfg.momentum);

  result = SeedResult{};
  result.seed = seed;
  for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    Index batches = 0;
    for (Index start = 0; start < train.size(); start += cfg.batch_size) {
      const Index n = std::min(cfg.batch_size, train.size() - start);
      RowMatrixXf xb(n, x_all.cols());
      std::vector<int> yb(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x_all.row(src);
        yb[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(src)];
      }
      const MlpGradients<float> g = ste_gradients(net, xb, yb, train_opt);
      if (!std::isfinite(g.loss)) {
        result.diverged = true;
        break;
      }
      epoch_loss += g.loss;
      ++batches;
      for (std::size_t l = 0; l < net.depth(); ++l) {
        vel_w[l] = mom * vel_w[l] + g.weights[l];
        vel_b[l] = mom * vel_b[l] + g.biases[l];
        net.weights[l] -= lr * vel_w[l];
        net.biases[l] -= lr * vel_b[l];
      }
    }
    if (result.diverged) break;
    result.final_loss = epoch_loss / static_cast<double>(std::max<Index>(1, batches));
    result.epoch_accuracy.push_back(evaluate_quantized(net, cfg, test));
  }
  if (!result.diverged) {
    result.accuracy = result.epoch_accuracy.back();
    result.train_accuracy = evaluate_quantized(net, cfg, train);
  }
  return out;
}

RunSummary ste_train(const Dataset& train, const Dataset& test, const QatConfig& cfg, std::vector<TrainedMlp>* models) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.features.cols() != test.features.cols()) throw std::invalid_argument("qat: train/test feature widths differ");

  RunSummary summary;
  summary.seeds.resize(cfg.seeds.size());
  std::vector<TrainedMlp> trained(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), [&](std::size_t i) {
    trained[i] = ste_train_seed(train, test, cfg, cfg.seeds[i], summary.seeds[i]);
  });

  std::vector<double> acc;
  for (const SeedResult& s : summary.seeds) {
    if (s.diverged) {
      ++summary.diverged;
    } else {
      acc.push_back(s.accuracy);
    }
  }
  if (!acc.empty()) {
    summary.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    double ss = 0.0;
    for (double a : acc) ss += (a - summary.mean) * (a - summary.mean);
    summary.std = acc.size() > 1 ? std::sqrt(ss / static_cast<double>(acc.size() - 1)) : 0.0;
  }
  if (models) *models = std::move(trained);
  return summary;
}

ModelGraph to_model_graph(const Mlp<float>& net) {
  ModelGraph g;
  g.input = {net.weights.front().cols()};
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Vector<float>& b = net.biases[l];
    g.layers.push_back(make_dense(Tensor::from_matrix(net.weights[l]),
                                  Tensor(Shape{b.size()}, std::vector<float>(b.data(), b.data() + b.size()))));
    if (l + 1 < net.depth()) g.layers.push_back(make_relu());
  }
  return g;
}

}  // namespace ternia
