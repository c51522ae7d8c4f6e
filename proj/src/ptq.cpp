#include "ternia/ptq.hpp"

#include "ternia/forward.hpp"

#include <random>

namespace ternia {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

constexpr double kPinnedLogit = -20.0;

RowMatrixXd gram_of(const RowMatrixXf& inputs) {
  const RowMatrixXd x = inputs.cast<double>();
  RowMatrixXd g = x.transpose() * x;
  return g / static_cast<double>(x.rows());
}

RowMatrixXd nearest_weights(const RowMatrixXd& w, const Vector<double>& step) {
  RowMatrixXd out = RowMatrixXd::Zero(w.rows(), w.cols());
  for (Index r = 0; r < w.rows(); ++r) {
    if (step[r] <= 0.0) continue;
    for (Index c = 0; c < w.cols(); ++c) out(r, c) = step[r] * std::clamp(std::round(w(r, c) / step[r]), -1.0, 1.0);
  }
  return out;
}

struct Adam {
  RowMatrixXd m, v;
  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;

  void step(RowMatrixXd& param, const RowMatrixXd& grad, double lr) {
    if (m.size() == 0) {
      m = RowMatrixXd::Zero(param.rows(), param.cols());
      v = m;
    }
    ++t;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

void PtqConfig::validate() const {
  if (iterations <= 0) throw std::invalid_argument("ptq: iterations must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ptq: learning rate must be positive");
  if (reg_weight < 0.0) throw std::invalid_argument("ptq: regularizer weight must be >= 0");
  if (beta_end < 1.0 || beta_start < beta_end) throw std::invalid_argument("ptq: need beta_start >= beta_end >= 1");
  if (warmup < 0.0 || warmup >= 1.0) throw std::invalid_argument("ptq: warmup must be in [0, 1)");
}

double rectified_sigmoid(double v) { return std::clamp(1.2 * sigmoid(v) - 0.1, 0.0, 1.0); }

RoundingState RoundingState::init(const RowMatrixXf& weights, const Vector<float>& step) {
  RoundingState s{RowMatrixXd::Zero(weights.rows(), weights.cols()), RowMatrixXd::Zero(weights.rows(), weights.cols()),
                  step.cast<double>()};
  for (Index r = 0; r < weights.rows(); ++r) {
    if (s.step[r] <= 0.0) continue;
    for (Index c = 0; c < weights.cols(); ++c) {
      const double scaled = static_cast<double>(weights(r, c)) / s.step[r];
      if (std::abs(scaled) > 1.0) {
        // Beyond the outer level only the clamped code is within one step; h is pinned at 0
        // inside the flat part of the rectified sigmoid, where it receives no gradient.
        s.floor_part(r, c) = scaled > 0.0 ? 1.0 : -1.0;
        s.logits(r, c) = kPinnedLogit;
        continue;
      }
      const double fl = std::floor(scaled);
      const double frac = scaled - fl;
      const double p = (frac + 0.1) / 1.2;
      s.floor_part(r, c) = fl;
      s.logits(r, c) = std::log(p / (1.0 - p));
    }
  }
  return s;
}

RowMatrixXd RoundingState::h() const { return logits.unaryExpr([](double v) { return rectified_sigmoid(v); }); }

RowMatrixXd RoundingState::soft_weights() const {
  const RowMatrixXd level = (floor_part + h()).cwiseMax(-1.0).cwiseMin(1.0);
  return step.asDiagonal() * level;
}

CodeMatrix RoundingState::hard_codes() const {
  const RowMatrixXd hv = h();
  CodeMatrix codes = CodeMatrix::Zero(floor_part.rows(), floor_part.cols());
  for (Index r = 0; r < codes.rows(); ++r) {
    if (step[r] <= 0.0) continue;
    for (Index c = 0; c < codes.cols(); ++c) {
      const double up = hv(r, c) > 0.5 ? 1.0 : 0.0;
      codes(r, c) = static_cast<std::int8_t>(std::clamp(floor_part(r, c) + up, -1.0, 1.0));
    }
  }
  return codes;
}

double reconstruction_loss(const RowMatrixXd& gram, const RowMatrixXd& weights, const RowMatrixXd& approx) {
  const RowMatrixXd d = approx - weights;
  return (d * gram).cwiseProduct(d).sum();
}

AdaroundResult adaround_fit(const RowMatrixXf& weights, const Vector<float>& step, const RowMatrixXf& inputs,
                            const PtqConfig& cfg) {
  cfg.validate();
  if (inputs.rows() == 0) throw std::invalid_argument("adaround_fit: empty calibration set");
  if (inputs.cols() != weights.cols()) throw std::invalid_argument("adaround_fit: calibration width mismatch");
  if (step.size() != weights.rows()) throw std::invalid_argument("adaround_fit: one step per row required");

  const RowMatrixXd gram = gram_of(inputs);
  const RowMatrixXd w = weights.cast<double>();
  RoundingState state = RoundingState::init(weights, step);

  AdaroundResult result;
  result.nearest_loss = reconstruction_loss(gram, w, nearest_weights(w, state.step));

  const int warm = static_cast<int>(cfg.warmup * cfg.iterations);
  Adam adam;
  for (int it = 0; it < cfg.iterations; ++it) {
    const bool regularize = it >= warm;
    const double progress =
        regularize ? static_cast<double>(it - warm) / std::max(1, cfg.iterations - warm) : 0.0;
    const double beta = cfg.beta_end + (cfg.beta_start - cfg.beta_end) * std::max(0.0, 1.0 - progress);

    const RowMatrixXd sig = state.logits.unaryExpr([](double v) { return sigmoid(v); });
    const RowMatrixXd h = (1.2 * sig.array() - 0.1).cwiseMax(0.0).cwiseMin(1.0).matrix();
    const RowMatrixXd level = state.floor_part + h;
    const RowMatrixXd approx = state.step.asDiagonal() * level.cwiseMax(-1.0).cwiseMin(1.0);
    const RowMatrixXd diff = approx - w;
    const RowMatrixXd d_approx = 2.0 * diff * gram;

    const RowMatrixXd two_h = (2.0 * h.array() - 1.0).matrix();
    double reg = 0.0;
    if (regularize) reg = cfg.reg_weight * (1.0 - two_h.array().abs().pow(beta)).sum();

    if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      result.trajectory.push_back({it, (d_approx.cwiseProduct(diff)).sum() / 2.0, reg, regularize ? beta : 0.0});
      if (!std::isfinite(result.trajectory.back().reconstruction) || !std::isfinite(reg)) {
        throw std::runtime_error("adaround_fit: non-finite loss at iteration " + std::to_string(it));
      }
    }

    RowMatrixXd grad(w.rows(), w.cols());
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) {
        const double raw = 1.2 * sig(r, c) - 0.1;
        if (state.step[r] <= 0.0 || raw <= 0.0 || raw >= 1.0) {
          grad(r, c) = 0.0;
          continue;
        }
        double d_h = 0.0;
        if (level(r, c) > -1.0 && level(r, c) < 1.0) d_h = d_approx(r, c) * state.step[r];
        if (regularize) {
          const double t = two_h(r, c);
          const double mag = std::abs(t);
          if (mag > 0.0) d_h -= cfg.reg_weight * beta * std::pow(mag, beta - 1.0) * (t > 0 ? 2.0 : -2.0);
        }
        grad(r, c) = d_h * 1.2 * sig(r, c) * (1.0 - sig(r, c));
      }
    }
    adam.step(state.logits, grad, cfg.learning_rate);
  }

  const CodeMatrix codes = state.hard_codes();
  result.quantized = {codes, step};
  for (Index r = 0; r < step.size(); ++r) {
    if (!(step[r] > 0.0f)) result.quantized.scale[r] = 0.0f;
  }
  result.final_loss = reconstruction_loss(gram, w, result.quantized.dequantize().cast<double>());
  result.h = state.h();
  if (result.final_loss > result.nearest_loss) {
    // Hard rounding of the learned h can land above the starting point when the regularizer
    // never fully separates h; never return something worse than round-to-nearest.
    result.quantized = quantize_with_step(weights, step);
    result.final_loss = reconstruction_loss(gram, w, result.quantized.dequantize().cast<double>());
    result.kept_nearest = true;
  }
  return result;
}

PtqResult ptq_quantize_model(const ModelGraph& model, const Dataset& calib, Operator op, const PtqConfig& cfg) {
  cfg.validate();
  if (calib.size() == 0) throw std::invalid_argument("ptq: empty calibration set");
  const Dataset shaped = calib.with_sample_shape(model.input);

  PtqResult result{QuantizedModel{model, {}}, {}};
  for (std::size_t i : model.weight_layers()) {
    const Layer& layer = model.layers[i];
    const Tensor input = layer_input(result.model.graph, shaped.features, i);
    RowMatrixXf rows = weight_layer_rows(layer, input);
    if (cfg.max_rows > 0 && rows.rows() > cfg.max_rows) {
      std::vector<Index> pick(static_cast<std::size_t>(rows.rows()));
      std::iota(pick.begin(), pick.end(), Index{0});
      std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + i);
      std::shuffle(pick.begin(), pick.end(), rng);
      pick.resize(static_cast<std::size_t>(cfg.max_rows));
      std::sort(pick.begin(), pick.end());
      RowMatrixXf sub(cfg.max_rows, rows.cols());
      for (Index k = 0; k < cfg.max_rows; ++k) sub.row(k) = rows.row(pick[static_cast<std::size_t>(k)]);
      rows = std::move(sub);
    }

    const RowMatrixXf w = layer.weights.matrix();
    const Vector<float> step = operator_step(w, op);
    AdaroundResult fit = adaround_fit(w, step, rows, cfg);

    result.layers.push_back({i, std::move(fit.trajectory), fit.nearest_loss, fit.final_loss, fit.kept_nearest});
    result.model.weights[i] = ExpansionStack{layer.weights.shape(), op, {std::move(fit.quantized)}};
    result.model.refresh_weights();
  }
  return result;
}

}  // namespace ternia
