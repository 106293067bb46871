#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "bwflow/bwflow.h"

namespace bwcli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

Manifest::Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

void Manifest::add_input(const std::filesystem::path& p) { inputs_.push_back(p); }

void Manifest::add_output(const std::filesystem::path& p) { outputs_.push_back(p); }

void Manifest::write(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["command"] = command_;
  j["config"] = config_;
  j["seed"] = has_seed_ ? nlohmann::json(seed_) : nlohmann::json(nullptr);
  j["versions"] = {{"bwflow", bwf_version()}, {"format", "BWF1"}, {"compiler", __VERSION__}};
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : inputs_) in[p.string()] = sha256_file(p);
  j["input_hashes"] = in;
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : outputs_) out[p.string()] = sha256_file(p);
  j["output_hashes"] = out;
  if (!notes_.empty()) j["notes"] = notes_;
  j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace bwcli
