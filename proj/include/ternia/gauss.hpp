#pragma once

// Expected quadratic error of a symmetric three-level quantizer under a standard
// normal prior truncated to (-lambda, lambda):
//
//   Q(w) = +q  if w >= a,   0 if |w| < a,   -q otherwise.
//
// Everything is in units of the prior's standard deviation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>

namespace ternia::gauss {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Threshold 5/(7 sqrt 2) that the mass-equalizing operator is built on.
inline constexpr double kClosedFormThreshold = 5.0 / (7.0 * std::numbers::sqrt2);
/// pdf value that makes the critical-point polynomial system consistent at kClosedFormThreshold.
inline constexpr double kClosedFormPhi = 2.0 * std::numbers::sqrt2 / 7.0;

struct PdfCdf {
  double pdf;
  double cdf;
};

PdfCdf normal_pdf_cdf(double x);
double normal_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - cdf(x) without cancellation.
double normal_sf(double x);
/// P(lo < w < hi) for a standard normal, accurate in both tails.
double interval_mass(double lo, double hi);

/// Variance of N(0,1) truncated to [-a, a]; 0 at a = 0, 1 as a -> inf.
double trunc_var_central(double a);
/// Variance of N(0,1) truncated to [a, lambda]. Throws std::domain_error when the
/// interval carries less than 1e-14 mass.
double trunc_var_tail(double a, double lambda);
/// Reconstruction level minimizing the tail error: the mean of N(0,1) on [a, lambda].
double optimal_level(double a, double lambda);

struct QuantizerParams {
  double a = 0.0;
  double q = 1.0;
  double lambda = 3.0;

  void validate() const;
};

/// E[(Q(w) - w)^2] by adaptive Gauss-Kronrod quadrature of the three region integrals.
double expected_error(const QuantizerParams& p);

/// Vc(a) + 2 Vt(a, lambda): the variance decomposition of the expected error with the
/// region masses left out. Reported next to expected_error; the two are not equal.
double variance_decomposition_error(double a, double lambda);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Sampled E[(Q(w) - w)^2]. Samples are drawn in fixed-size chunks, each with its own
/// seeded stream, so the estimate does not depend on the thread count.
MonteCarloEstimate monte_carlo_error(const QuantizerParams& p, std::size_t samples, std::uint64_t seed);

struct ThresholdMinimum {
  double a = 0.0;
  double q = 0.0;
  double error = 0.0;
};

struct ArgminOptions {
  double grid_step = 1e-2;
  double tolerance = 1e-9;
};

/// Minimizes expected_error over the threshold with q tied to optimal_level(a, lambda):
/// coarse grid scan followed by golden-section refinement around the best grid cell.
ThresholdMinimum argmin_threshold(double lambda, const ArgminOptions& options = {});

/// 2a^2 + 1 - 5 a phi - 3 phi^2, with phi the true pdf at a or supplied freely.
double polynomial_residual(double a);
double polynomial_residual(double a, double phi);
/// Larger root in a of the polynomial for a given phi: (sqrt(49 phi^2 - 8) + 5 phi) / 4.
double polynomial_root_a(double phi);
/// Positive root in phi for a given a: (sqrt(12 + 49 a^2) - 5 a) / 6.
double polynomial_root_phi(double a);

struct MassPerBin {
  double negative = 0.0;
  double zero = 0.0;
  double positive = 0.0;
};

/// Probability of each code under N(0,1) truncated to (-lambda, lambda) (lambda may be inf).
MassPerBin mass_per_bin(double a, double lambda);

struct TheoryReport {
  double lambda = 3.0;

  double a_star_numeric = 0.0;
  double q_star_numeric = 0.0;
  double error_at_a_star = 0.0;

  double closed_form_a = kClosedFormThreshold;
  double q_at_closed_form_a = 0.0;
  double error_at_closed_form_a = 0.0;
  double closed_form_gap = 0.0;

  double tquant_threshold = 0.0;
  double error_at_tquant = 0.0;
  double naive_threshold = 0.0;
  double error_at_naive = 0.0;
  double mquant_step_threshold = 0.0;
  double error_at_mquant_step = 0.0;

  double decomposition_error = 0.0;
  double decomposition_error_at_a_star = 0.0;

  MonteCarloEstimate mc_at_a_star;

  double pdf_at_closed_form_a = 0.0;
  double cdf_at_closed_form_a = 0.0;
  double polynomial_residual = 0.0;
  double polynomial_system_residual = 0.0;
  MassPerBin mass_at_closed_form_a;
  MassPerBin mass_at_closed_form_a_untruncated;
};

TheoryReport theory_report(double lambda, std::size_t mc_samples, std::uint64_t seed);

/// Adaptive 15-point Gauss-Kronrod integral of f over [lo, hi] (infinite bounds allowed).
double integrate(const std::function<double(double)>& f, double lo, double hi, double* error_estimate = nullptr);

}  // namespace ternia::gauss
