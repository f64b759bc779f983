#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "dami/error.hpp"

namespace dami::cli {

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string() + " for hashing");
  const auto size = std::filesystem::file_size(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1) throw Error("SHA-1 unavailable");
  const std::string header = "blob " + std::to_string(size) + '\0';
  EVP_DigestUpdate(ctx.get(), header.data(), header.size());
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config"] = m.config;
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& p : m.inputs) inputs.push_back({{"path", p.string()}, {"git_sha1", git_blob_sha1(p)}});
  j["inputs"] = std::move(inputs);
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& p : m.outputs) outputs.push_back(p.filename().string());
  j["outputs"] = std::move(outputs);
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dami::cli
