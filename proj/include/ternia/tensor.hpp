#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ternia {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array. The leading axis is the "row" axis:
/// matrix() views the tensor as [shape[0], product(shape[1:])].
template <typename Scalar>
class BasicTensor {
 public:
  using value_type = Scalar;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(checked_size(shape_), Scalar{0}) {}

  BasicTensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != static_cast<Index>(data_.size())) {
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
    }
  }

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m.template cast<Scalar>();
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index size() const noexcept { return static_cast<Index>(data_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  bool empty() const noexcept { return data_.empty(); }

  Index rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  Index cols() const noexcept { return rows() == 0 ? 0 : size() / rows(); }

  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  Eigen::Map<Vector<Scalar>> flat() { return {data_.data(), size()}; }
  Eigen::Map<const Vector<Scalar>> flat() const { return {data_.data(), size()}; }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  const std::vector<Scalar>& storage() const noexcept { return data_; }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  BasicTensor reshaped(Shape shape) const& {
    BasicTensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  BasicTensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }

  void reshape(Shape shape) {
    if (checked_size(shape) != size()) {
      throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<Scalar>) {
      return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
    } else {
      return true;
    }
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static Index checked_size(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_string(shape));
    }
    return shape_size(shape);
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;
using CodeTensor = BasicTensor<std::int8_t>;

/// Per-row (min, max) over the leading axis.
template <typename Scalar>
std::vector<std::pair<Scalar, Scalar>> row_minmax(const BasicTensor<Scalar>& w) {
  if (w.rank() < 2) throw std::invalid_argument("row_minmax needs rank >= 2, got " + shape_string(w.shape()));
  if (w.cols() == 0) throw std::invalid_argument("row_minmax on empty rows");
  const auto m = w.matrix();
  std::vector<std::pair<Scalar, Scalar>> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).minCoeff(), m.row(r).maxCoeff());
  return out;
}

/// Fraction of rows whose argmax equals the label; ties resolve to the lowest index.
double accuracy(const Tensor& logits, std::span<const int> labels);

/// Index of the first maximal entry per row.
std::vector<int> argmax_rows(const Tensor& logits);

// Raw little-endian blobs.
std::vector<float> read_f32_blob(const std::filesystem::path& path);
std::vector<std::int8_t> read_i8_blob(const std::filesystem::path& path);
std::string encode_f32_blob(std::span<const float> values);
std::string encode_i8_blob(std::span<const std::int8_t> values);
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ternia
