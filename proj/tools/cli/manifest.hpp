#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sasv::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written as manifest.txt next to a command's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, int argc, char** argv);

  void config(const std::string& key, const std::string& value);
  void input(const std::string& role, const std::filesystem::path& path);
  void output(const std::filesystem::path& path);
  void seed(std::uint64_t value);

  /// Writes `<dir>/manifest.txt`, replacing any earlier manifest.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  std::string command_line_;
  std::vector<std::pair<std::string, std::string>> config_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
  std::string seed_;
  std::chrono::system_clock::time_point started_;
};

}  // namespace sasv::cli
