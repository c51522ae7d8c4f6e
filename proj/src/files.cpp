#include "ternia/files.hpp"

#include "ternia/tensor.hpp"

#include <system_error>
#include <vector>

namespace ternia {

void StagedFiles::add(const std::filesystem::path& path, std::string bytes) { files_[path] = std::move(bytes); }

void StagedFiles::merge(StagedFiles other) {
  for (auto& [path, bytes] : other.files_) files_[path] = std::move(bytes);
}

void StagedFiles::commit() const {
  std::vector<std::filesystem::path> written;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
  };
  try {
    for (const auto& [path, bytes] : files_) {
      auto tmp = path;
      tmp += ".partial";
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      written.push_back(tmp);
      write_file_bytes(tmp, bytes);
    }
    for (const auto& [path, bytes] : files_) {
      auto tmp = path;
      tmp += ".partial";
      std::filesystem::rename(tmp, path);
    }
  } catch (...) {
    cleanup();
    throw;
  }
}

}  // namespace ternia
