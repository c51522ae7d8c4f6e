#pragma once

#include "ternia/tensor.hpp"

#include <array>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace ternia {

/// Ternary quantization operator. Each one rescales the symmetric per-row range
/// lambda = max|w| into an effective step s before rounding to {-1, 0, 1}:
///   naive:  s = lambda              (plain round to nearest)
///   tquant: s = 2/3 lambda          (pre-images of -1, 0, 1 have equal width lambda*2/3)
///   mquant: s = 5/(7 sqrt 2) lambda (expected-error optimal under a centered Gaussian)
enum class Operator { naive, tquant, mquant };

inline constexpr double kTQuantFactor = 2.0 / 3.0;
inline constexpr double kMQuantFactor = 5.0 / (7.0 * std::numbers::sqrt2);

constexpr double step_factor(Operator op) noexcept {
  switch (op) {
    case Operator::naive:
      return 1.0;
    case Operator::tquant:
      return kTQuantFactor;
    case Operator::mquant:
      return kMQuantFactor;
  }
  return 1.0;
}

/// Worst-case |w - dequant(quant(w))| on [-lambda, lambda], in units of lambda.
constexpr double max_error_factor(Operator op) noexcept {
  switch (op) {
    case Operator::naive:
      return 0.5;
    case Operator::tquant:
      return 1.0 / 3.0;
    case Operator::mquant:
      return 1.0 - kMQuantFactor;
  }
  return 0.5;
}

std::string_view to_string(Operator op);
Operator operator_from_string(std::string_view name);
inline constexpr std::array<Operator, 3> kAllOperators{Operator::naive, Operator::tquant, Operator::mquant};

using CodeMatrix = RowMatrix<std::int8_t>;

/// Row-wise lambda_i = max(|min_i| / 2^(b-1), |max_i| / (2^(b-1) - 1)).
template <typename Derived>
Vector<typename Derived::Scalar> compute_scale(const Eigen::MatrixBase<Derived>& w, int bits) {
  using Scalar = typename Derived::Scalar;
  if (bits < 2 || bits > 16) throw std::invalid_argument("bit-width must be in [2, 16]");
  const Scalar neg = static_cast<Scalar>(Index{1} << (bits - 1));
  const Scalar pos = neg - Scalar(1);
  return (w.rowwise().minCoeff().cwiseAbs() / neg).cwiseMax(w.rowwise().maxCoeff().cwiseAbs() / pos);
}

/// Symmetric ternary range lambda_i = max_j |w_ij|.
template <typename Derived>
Vector<typename Derived::Scalar> ternary_scale(const Eigen::MatrixBase<Derived>& w) {
  return w.cwiseAbs().rowwise().maxCoeff();
}

template <typename Scalar>
struct TernaryMatrix {
  CodeMatrix codes;
  Vector<Scalar> scale;  // effective step per row; 0 for all-zero rows

  RowMatrix<Scalar> dequantize() const { return scale.asDiagonal() * codes.template cast<Scalar>(); }
};

/// codes = clamp(round(w / s), -1, 1) per row, ties away from zero. Rows with s == 0 get zero codes.
template <typename Derived>
TernaryMatrix<typename Derived::Scalar> quantize_with_step(const Eigen::MatrixBase<Derived>& w,
                                                           const Vector<typename Derived::Scalar>& step) {
  using Scalar = typename Derived::Scalar;
  if (step.size() != w.rows()) throw std::invalid_argument("one step per row required");
  TernaryMatrix<Scalar> out{CodeMatrix::Zero(w.rows(), w.cols()), step};
  for (Index r = 0; r < w.rows(); ++r) {
    const Scalar s = step[r];
    if (!(s > Scalar(0))) {
      out.scale[r] = Scalar(0);
      continue;
    }
    for (Index c = 0; c < w.cols(); ++c) {
      const Scalar v = std::round(w(r, c) / s);
      out.codes(r, c) = static_cast<std::int8_t>(std::clamp(v, Scalar(-1), Scalar(1)));
    }
  }
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> operator_step(const Eigen::MatrixBase<Derived>& w, Operator op) {
  using Scalar = typename Derived::Scalar;
  return ternary_scale(w) * static_cast<Scalar>(step_factor(op));
}

template <typename Derived>
TernaryMatrix<typename Derived::Scalar> quantize(const Eigen::MatrixBase<Derived>& w, Operator op) {
  return quantize_with_step(w, operator_step(w, op));
}

/// Residual expansion: term j quantizes what the previous j-1 terms left over.
template <typename Derived>
std::vector<TernaryMatrix<typename Derived::Scalar>> expand(const Eigen::MatrixBase<Derived>& w, Operator op,
                                                            int order) {
  using Scalar = typename Derived::Scalar;
  if (order < 1) throw std::invalid_argument("expansion order must be >= 1");
  std::vector<TernaryMatrix<Scalar>> terms;
  terms.reserve(static_cast<std::size_t>(order));
  RowMatrix<Scalar> residual = w;
  for (int k = 0; k < order; ++k) {
    terms.push_back(quantize(residual, op));
    residual -= terms.back().dequantize();
  }
  return terms;
}

template <typename Scalar>
RowMatrix<Scalar> reconstruct(std::span<const TernaryMatrix<Scalar>> terms) {
  if (terms.empty()) throw std::invalid_argument("empty expansion");
  RowMatrix<Scalar> out = terms.front().dequantize();
  for (std::size_t k = 1; k < terms.size(); ++k) out += terms[k].dequantize();
  return out;
}

/// Ternary codes and per-row steps for a tensor of rank >= 2 (rows = leading axis).
struct TernaryTensor {
  Shape shape;
  TernaryMatrix<float> q;

  CodeTensor codes() const;
  Tensor dequantize() const;
};

TernaryTensor quantize(const Tensor& w, Operator op);
Tensor dequantize(const TernaryTensor& t);

struct ExpansionStack {
  Shape shape;
  Operator op = Operator::naive;
  std::vector<TernaryMatrix<float>> terms;

  int order() const noexcept { return static_cast<int>(terms.size()); }
  Tensor dequantize() const;
};

ExpansionStack expand(const Tensor& w, Operator op, int order);

/// Per-channel activation range |beta_c| + n |gamma_c| from batchnorm parameters.
template <typename Derived>
Vector<typename Derived::Scalar> act_range_from_bn(const Eigen::MatrixBase<Derived>& gamma,
                                                   const Eigen::MatrixBase<Derived>& beta,
                                                   typename Derived::Scalar multiplier = 3) {
  if (!(multiplier > 0)) throw std::invalid_argument("range multiplier must be positive");
  return beta.cwiseAbs() + multiplier * gamma.cwiseAbs();
}

/// b-bit activation codes with one step per channel (axis 1; axis 0 is the batch).
struct QuantizedTensorB {
  Shape shape;
  int bits = 8;
  BasicTensor<std::int32_t> codes;
  Vector<float> scale;

  Tensor dequantize() const;
};

/// Integer code interval of signed b-bit quantization: [-2^(b-1), 2^(b-1) - 1].
inline std::pair<std::int32_t, std::int32_t> code_interval(int bits) {
  const auto half = static_cast<std::int32_t>(1) << (bits - 1);
  return {-half, half - 1};
}

/// Quantizes activations onto the symmetric range [-range_c, range_c]. For b = 2 the
/// operator's step rescaling applies and codes are ternary; for b > 2 the step is the
/// signed b-bit scale max(|min| / 2^(b-1), |max| / (2^(b-1) - 1)) of that range and `op`
/// is ignored. `range` has one entry per channel or a single shared entry.
QuantizedTensorB quantize_activations(const Tensor& x, int bits, std::span<const float> range, Operator op);

/// In-place dequantize(quantize_activations(x)).
void fake_quantize_activations(Tensor& x, int bits, std::span<const float> range, Operator op);

}  // namespace ternia
