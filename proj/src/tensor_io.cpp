#include "ternia/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ternia {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const auto m = logits.matrix();
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw std::invalid_argument("accuracy expects [n,K] logits, got " + shape_string(logits.shape()));
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(logits.rows()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<float> read_f32_blob(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() % 4 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
    out[i] = std::bit_cast<float>(raw);
  }
  return out;
}

std::vector<std::int8_t> read_i8_blob(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  std::vector<std::int8_t> out(bytes.size());
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string encode_f32_blob(std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto raw = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
    std::memcpy(bytes.data() + 4 * i, &raw, 4);
  }
  return bytes;
}

std::string encode_i8_blob(std::span<const std::int8_t> values) {
  return std::string(reinterpret_cast<const char*>(values.data()), values.size());
}

}  // namespace ternia
