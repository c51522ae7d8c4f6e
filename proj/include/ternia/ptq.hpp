#pragma once

#include "ternia/dataset.hpp"
#include "ternia/quantized_model.hpp"

#include <cstdint>
#include <vector>

namespace ternia {

/// Learned up/down rounding in the style of AdaRound. The fit only ever sees the per-row
/// step, never the operator that produced it.
struct PtqConfig {
  int iterations = 1500;
  double learning_rate = 1e-2;  // Adam
  double reg_weight = 1.0;
  double beta_start = 20.0;     // regularizer exponent, annealed linearly to beta_end
  double beta_end = 2.0;
  double warmup = 0.2;          // fraction of iterations without the rounding regularizer
  Index max_rows = 4096;        // calibration rows kept per layer (0 = all); sampled with `seed`
  int log_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rectified sigmoid h(V) = clip(1.2 sigmoid(V) - 0.1, 0, 1).
double rectified_sigmoid(double v);

/// Per-scalar rounding logits for one weight matrix. Soft weights are
/// s_r * clamp(floor(W / s_r) + h(V), -1, 1).
struct RoundingState {
  RowMatrixXd floor_part;
  RowMatrixXd logits;
  Vector<double> step;

  /// Logits chosen so that h(V) equals the fractional part of W / s (soft weights reproduce W,
  /// hard rounding reproduces round-to-nearest). Entries with |W / s| > 1 are pinned to the
  /// outer code.
  static RoundingState init(const RowMatrixXf& weights, const Vector<float>& step);

  RowMatrixXd h() const;
  RowMatrixXd soft_weights() const;
  /// h > 0.5 rounds up; codes clamped to {-1, 0, 1}.
  CodeMatrix hard_codes() const;
};

struct LossPoint {
  int iteration = 0;
  double reconstruction = 0.0;
  double regularizer = 0.0;
  double beta = 0.0;
};

struct AdaroundResult {
  TernaryMatrix<float> quantized;
  RowMatrixXd h;
  std::vector<LossPoint> trajectory;
  double nearest_loss = 0.0;  // reconstruction loss of round-to-nearest on the same grid
  double final_loss = 0.0;    // reconstruction loss of the returned hard codes
  bool kept_nearest = false;  // learned rounding was worse, nearest codes returned instead
};

/// sum over rows of d G d^T with G = X^T X / n and d a row of (approx - weights): the squared
/// output error summed over outputs, averaged over calibration rows.
double reconstruction_loss(const RowMatrixXd& gram, const RowMatrixXd& weights, const RowMatrixXd& approx);

/// Fits rounding for weights [out, fan_in] against calibration rows X [n, fan_in].
AdaroundResult adaround_fit(const RowMatrixXf& weights, const Vector<float>& step, const RowMatrixXf& inputs,
                            const PtqConfig& cfg);

struct LayerTrajectory {
  std::size_t layer = 0;
  std::vector<LossPoint> points;
  double nearest_loss = 0.0;
  double final_loss = 0.0;
  bool kept_nearest = false;
};

struct PtqResult {
  QuantizedModel model;
  std::vector<LayerTrajectory> layers;
};

/// Weight-only ternary PTQ. Weight layers are fitted in order; each layer's calibration
/// inputs come from the already-quantized prefix of the network.
PtqResult ptq_quantize_model(const ModelGraph& model, const Dataset& calib, Operator op, const PtqConfig& cfg);

}  // namespace ternia
