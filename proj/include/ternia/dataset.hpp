#pragma once

#include "ternia/tensor.hpp"

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ternia {

/// Features [n, ...] with one class index per sample.
struct Dataset {
  Tensor features;
  std::vector<int> labels;

  Index size() const noexcept { return static_cast<Index>(labels.size()); }
  int num_classes() const;
  void validate(int classes = 0) const;

  Dataset subset(std::span<const Index> rows) const;
  Dataset head(Index n) const;
  /// Features reshaped to [n, sample_shape...].
  Dataset with_sample_shape(const Shape& sample_shape) const;
};

/// CSV: feature columns then an integer label, one sample per line. A leading
/// non-numeric header line is skipped.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& origin = "<csv>");
std::string to_csv(const Dataset& data);

// Built-in synthetic problems.
Dataset gaussian_mixture(Index n, Index dim, int classes, double separation, std::uint64_t seed);
Dataset two_spirals(Index n, double noise, std::uint64_t seed);
/// Two classes split by a hyperplane through the origin with normal `w`, no points inside `margin`.
Dataset linear_separable(Index n, std::span<const double> w, double margin, std::uint64_t seed);

}  // namespace ternia
