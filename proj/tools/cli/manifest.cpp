#include "cli/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <ctime>
#include <fstream>
#include <memory>

#include "sasv/error.hpp"

namespace sasv::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest initialisation failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

namespace {

std::string utc(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest::RunManifest(std::string command, int argc, char** argv)
    : command_(std::move(command)), started_(std::chrono::system_clock::now()) {
  for (int i = 0; i < argc; ++i) {
    if (i) command_line_ += ' ';
    command_line_ += argv[i];
  }
}

void RunManifest::config(const std::string& key, const std::string& value) {
  config_.emplace_back(key, value);
}

void RunManifest::input(const std::string& role, const std::filesystem::path& path) {
  inputs_.emplace_back(role, path.string() + " sha256=" + sha256_file(path));
}

void RunManifest::output(const std::filesystem::path& path) {
  outputs_.push_back(path.filename().string());
}

void RunManifest::seed(std::uint64_t value) { seed_ = std::to_string(value); }

void RunManifest::write(const std::filesystem::path& dir) const {
  const auto path = dir / "manifest.txt";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "tool=sasv\n"
      << "version=" << SASV_VERSION << '\n'
      << "command=" << command_ << '\n'
      << "command_line=" << command_line_ << '\n'
      << "seed=" << (seed_.empty() ? "none" : seed_) << '\n';
  for (const auto& [k, v] : config_) out << "config." << k << '=' << v << '\n';
  for (const auto& [k, v] : inputs_) out << "input." << k << '=' << v << '\n';
  for (const auto& o : outputs_) out << "output=" << o << '\n';
  out << "started_utc=" << utc(started_) << '\n'
      << "finished_utc=" << utc(std::chrono::system_clock::now()) << '\n';
  if (!out) throw InputError("write failed for '" + path.string() + "'");
}

}  // namespace sasv::cli
