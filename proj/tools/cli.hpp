#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dami::cli {

/// Runs one command. `args` excludes the program name. Returns 0 on success,
/// 1 on a validation or runtime failure, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Relative output paths land under $DAMI_OUTPUT_DIR when it is set.
std::filesystem::path output_path(const std::filesystem::path& path);

}  // namespace dami::cli
