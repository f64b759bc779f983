#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace dami::cli {

/// SHA-1 of "blob <size>\0<bytes>", as `git hash-object` prints it.
std::string git_blob_sha1(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace dami::cli
