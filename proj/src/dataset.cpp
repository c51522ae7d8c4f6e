#include "ternia/dataset.hpp"

#include <charconv>
#include <sstream>

namespace ternia {

namespace {

bool parse_float(std::string_view s, float& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int Dataset::num_classes() const {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  return k;
}

void Dataset::validate(int classes) const {
  if (features.rank() < 2 || features.dim(0) != size()) {
    throw std::invalid_argument("dataset has " + std::to_string(labels.size()) + " labels for features " +
                                shape_string(features.shape()));
  }
  for (int l : labels) {
    if (l < 0 || (classes > 0 && l >= classes)) {
      throw std::invalid_argument("label " + std::to_string(l) + " out of range");
    }
  }
  if (!features.all_finite()) throw std::invalid_argument("dataset contains non-finite features");
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Shape shape = features.shape();
  shape[0] = static_cast<Index>(rows.size());
  Dataset out{Tensor(shape), {}};
  out.labels.reserve(rows.size());
  const auto src = features.matrix();
  auto dst = out.features.matrix();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dst.row(static_cast<Index>(i)) = src.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Dataset Dataset::head(Index n) const {
  std::vector<Index> rows(static_cast<std::size_t>(std::min(n, size())));
  std::iota(rows.begin(), rows.end(), Index{0});
  return subset(rows);
}

Dataset Dataset::with_sample_shape(const Shape& sample_shape) const {
  Shape shape{size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return {features.reshaped(shape), labels};
}

Dataset parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::vector<float> values;
  std::vector<int> labels;
  Index dim = -1;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    float probe = 0.0f;
    if (lineno == 1 && !parse_float(fields.front(), probe)) continue;  // header
    if (fields.size() < 2) throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": need features and a label");
    const auto d = static_cast<Index>(fields.size() - 1);
    if (dim >= 0 && d != dim) throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": ragged row");
    dim = d;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      float v = 0.0f;
      if (!parse_float(fields[i], v)) throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad number");
      values.push_back(v);
    }
    float label = 0.0f;
    if (!parse_float(fields.back(), label) || label != std::floor(label) || label < 0) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad label");
    }
    labels.push_back(static_cast<int>(label));
  }
  if (labels.empty()) throw std::runtime_error(origin + ": no samples");
  Dataset d{Tensor(Shape{static_cast<Index>(labels.size()), dim}, std::move(values)), std::move(labels)};
  d.validate();
  return d;
}

Dataset load_csv(const std::filesystem::path& path) { return parse_csv(read_file_bytes(path), path.string()); }

std::string to_csv(const Dataset& data) {
  std::string out;
  const Index dim = data.features.cols();
  for (Index j = 0; j < dim; ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  const auto m = data.features.matrix();
  char buf[64];
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < dim; ++j) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, m(i, j));
      out.append(buf, end);
      out += ',';
    }
    out += std::to_string(data.labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

}  // namespace ternia
