#include "ternia/dataset.hpp"

#include <numbers>

namespace ternia {

Dataset gaussian_mixture(Index n, Index dim, int classes, double separation, std::uint64_t seed) {
  if (n <= 0 || dim <= 0 || classes < 2) throw std::invalid_argument("gaussian_mixture: bad sizes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  RowMatrixXd centers(classes, dim);
  for (int c = 0; c < classes; ++c) {
    for (Index j = 0; j < dim; ++j) centers(c, j) = normal(rng);
    centers.row(c) *= separation / centers.row(c).norm();
  }

  Dataset d{Tensor(Shape{n, dim}), std::vector<int>(static_cast<std::size_t>(n))};
  auto m = d.features.matrix();
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    d.labels[static_cast<std::size_t>(i)] = c;
    for (Index j = 0; j < dim; ++j) m(i, j) = static_cast<float>(centers(c, j) + normal(rng));
  }
  return d;
}

Dataset two_spirals(Index n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d{Tensor(Shape{n, 2}), std::vector<int>(static_cast<std::size_t>(n))};
  auto m = d.features.matrix();
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double t = std::sqrt(unit(rng)) * 3.0 * std::numbers::pi;
    const double sign = c == 0 ? 1.0 : -1.0;
    m(i, 0) = static_cast<float>(sign * t * std::cos(t) / 3.0 + jitter(rng));
    m(i, 1) = static_cast<float>(sign * t * std::sin(t) / 3.0 + jitter(rng));
    d.labels[static_cast<std::size_t>(i)] = c;
  }
  return d;
}

Dataset linear_separable(Index n, std::span<const double> w, double margin, std::uint64_t seed) {
  const auto dim = static_cast<Index>(w.size());
  const Eigen::Map<const Vector<double>> normal_vec(w.data(), dim);
  const double norm = normal_vec.norm();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  Dataset d{Tensor(Shape{n, dim}), std::vector<int>(static_cast<std::size_t>(n))};
  auto m = d.features.matrix();
  Vector<double> x(dim);
  for (Index i = 0; i < n;) {
    for (Index j = 0; j < dim; ++j) x[j] = box(rng);
    const double side = normal_vec.dot(x) / norm;
    if (std::abs(side) < margin) continue;
    m.row(i) = x.cast<float>().transpose();
    d.labels[static_cast<std::size_t>(i)] = side > 0 ? 1 : 0;
    ++i;
  }
  return d;
}

}  // namespace ternia
