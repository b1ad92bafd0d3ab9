#include "workdir.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "s2r/error.hpp"

namespace s2r::cli {

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    s += digits[data[i] >> 4];
    s += digits[data[i] & 0xf];
  }
  return s;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr))
    throw Error("SHA-256 computation failed");
  return hex(md.data(), len);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

Workdir::Workdir(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "ckpt");
  fs::create_directories(root_ / "logs");
}

void Workdir::require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw PreconditionError("missing " + path.string() + "; run `s2r " + producer + "` first");
}

void Workdir::record(const std::string& stage, const std::string& config_hash,
                     const std::map<std::string, fs::path>& inputs,
                     const std::map<std::string, fs::path>& outputs) const {
  nlohmann::json doc = nlohmann::json::object();
  if (fs::exists(manifest())) {
    std::ifstream in(manifest());
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      doc = nlohmann::json::object();  // rebuilt from scratch
    }
  }
  nlohmann::json entry;
  entry["config_hash"] = config_hash;
  auto hashes = [](const std::map<std::string, fs::path>& files) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, path] : files) j[name] = {{"path", path.filename().string()}, {"sha256", sha256_file(path)}};
    return j;
  };
  entry["inputs"] = hashes(inputs);
  entry["outputs"] = hashes(outputs);
  doc["format"] = "s2r-manifest";
  doc["version"] = 1;
  doc["stages"][stage] = entry;
  std::ofstream out(manifest(), std::ios::trunc);
  out << doc.dump(2) << "\n";
}

}  // namespace s2r::cli
