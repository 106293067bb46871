#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace bwcli {

std::string sha256_file(const std::filesystem::path& path);

/// Run record written next to every command's outputs.
class Manifest {
 public:
  explicit Manifest(std::string command);

  nlohmann::json& config() { return config_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
  void add_input(const std::filesystem::path& p);
  void add_output(const std::filesystem::path& p);
  void note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }
  const std::vector<std::filesystem::path>& outputs() const { return outputs_; }

  /// Hashes every output and writes the manifest JSON.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json notes_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace bwcli
