#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace ternia {

/// Output files accumulated in memory and written together. commit() writes
/// every file under a temporary name first, so a failure leaves no partial
/// outputs behind.
class StagedFiles {
 public:
  void add(const std::filesystem::path& path, std::string bytes);
  void merge(StagedFiles other);
  const std::map<std::filesystem::path, std::string>& files() const noexcept { return files_; }
  void commit() const;

 private:
  std::map<std::filesystem::path, std::string> files_;
};

}  // namespace ternia
