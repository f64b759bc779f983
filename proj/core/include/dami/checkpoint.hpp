#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dami/corpus.hpp"
#include "dami/featurize.hpp"
#include "dami/model.hpp"

namespace dami {

/// Everything needed to featurize new dialogues and run the model.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocabulary;
  std::vector<std::string> pos_tagset;
  FrequencyTable frequencies;
};

/// Binary layout: 8-byte magic "DAMICKP1", little-endian u64 header size, a
/// JSON header (config, vocabulary, tagset, frequency counts, tensor index
/// with name, shape and byte offset), then the row-major float32 payload.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws on a bad magic, a truncated payload, or any tensor whose name or
/// shape disagrees with the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter through float32, matching what a save/load cycle
/// yields.
ModelParams round_to_float32(const ModelParams& params);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace dami
