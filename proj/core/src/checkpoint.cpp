#include "dami/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "dami/error.hpp"
#include "json.hpp"

namespace dami {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'M', 'I', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["word_dim"] = c.word_dim;
  j["pos_tags"] = c.pos_tags;
  j["hidden"] = c.hidden;
  j["attention"] = c.attention;
  j["max_dialogue_length"] = c.max_dialogue_length;
  j["dropout"] = c.dropout;
  j["use_emotion"] = c.use_emotion;
  j["use_matching"] = c.use_matching;
  j["encoder_mode"] = std::string(to_string(c.encoder_mode));
  return j;
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<int>();
    c.word_dim = j.at("word_dim").get<int>();
    c.pos_tags = j.at("pos_tags").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.attention = j.at("attention").get<int>();
    c.max_dialogue_length = j.at("max_dialogue_length").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.use_emotion = j.at("use_emotion").get<bool>();
    c.use_matching = j.at("use_matching").get<bool>();
    c.encoder_mode = parse_encoder_mode(j.at("encoder_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid model config JSON: ") + e.what());
  }
}

ModelParams round_to_float32(const ModelParams& params) {
  ModelParams out = params;
  out.visit([](std::string_view, Eigen::Index rows, Eigen::Index cols, double* data) {
    for (Eigen::Index i = 0; i < rows * cols; ++i) data[i] = static_cast<double>(static_cast<float>(data[i]));
  });
  return out;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "dami-checkpoint";
  header["version"] = 1;
  header["config"] = config_json(ck.config);
  header["vocabulary"] = ck.vocabulary.tokens();
  header["pos_tagset"] = ck.pos_tagset;
  header["frequencies"] = ck.frequencies.counts();

  std::vector<float> payload;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  ck.params.visit([&](std::string_view name, Eigen::Index rows, Eigen::Index cols, const double* data) {
    nlohmann::ordered_json t;
    t["name"] = std::string(name);
    t["shape"] = {rows, cols};
    t["dtype"] = "float32";
    t["offset"] = payload.size() * sizeof(float);
    index.push_back(std::move(t));
    // Eigen storage is column-major; the file is row-major.
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) payload.push_back(static_cast<float>(data[c * rows + r]));
    }
  });
  header["tensors"] = std::move(index);
  header["payload_bytes"] = payload.size() * sizeof(float);

  const std::string text = header.dump();
  const std::uint64_t size = text.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw Error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string where = "checkpoint " + path.string() + ": ";
  char magic[8];
  std::uint64_t size = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(where + "bad magic");
  if (!in.read(reinterpret_cast<char*>(&size), sizeof size) || size > (1ULL << 34)) throw Error(where + "bad header size");
  std::string text(size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(size))) throw Error(where + "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "header is not valid JSON (" + e.what() + ")");
  }

  Checkpoint ck;
  try {
    ck.config = config_from(header.at("config"));
    ck.vocabulary = Vocabulary([&] {
      auto toks = header.at("vocabulary").get<std::vector<std::string>>();
      if (toks.size() < 2) throw Error("vocabulary lacks reserved ids");
      return std::vector<std::string>(toks.begin() + 2, toks.end());
    }());
    ck.pos_tagset = header.at("pos_tagset").get<std::vector<std::string>>();
    ck.frequencies = FrequencyTable(header.at("frequencies").get<std::vector<long long>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "incomplete header (" + e.what() + ")");
  } catch (const Error& e) {
    throw Error(where + e.what());
  }
  if (ck.vocabulary.size() != ck.config.vocab_size) {
    throw Error(where + "vocabulary of " + std::to_string(ck.vocabulary.size()) + " tokens disagrees with vocab_size " +
                std::to_string(ck.config.vocab_size));
  }
  if (static_cast<int>(ck.pos_tagset.size()) != ck.config.pos_tags) throw Error(where + "tagset size disagrees with pos_tags");

  std::map<std::string, nlohmann::json> entries;
  for (const auto& t : header.at("tensors")) entries[t.at("name").get<std::string>()] = t;
  const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
  std::vector<float> payload(payload_bytes / sizeof(float));
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes))) {
    throw Error(where + "truncated payload");
  }

  ck.params = ModelParams::zeros(ck.config);
  std::size_t seen = 0;
  ck.params.visit([&](std::string_view name, Eigen::Index rows, Eigen::Index cols, double* data) {
    auto it = entries.find(std::string(name));
    if (it == entries.end()) throw Error(where + "missing tensor " + std::string(name));
    const auto shape = it->second.at("shape").get<std::vector<long long>>();
    if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
      throw Error(where + "tensor " + std::string(name) + " has shape " + it->second.at("shape").dump() +
                  ", config implies [" + std::to_string(rows) + "," + std::to_string(cols) + "]");
    }
    const auto offset = it->second.at("offset").get<std::uint64_t>() / sizeof(float);
    if (offset + static_cast<std::uint64_t>(rows * cols) > payload.size()) throw Error(where + "tensor " + std::string(name) + " overruns payload");
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) data[c * rows + r] = payload[offset + static_cast<std::size_t>(r * cols + c)];
    }
    ++seen;
  });
  if (seen != entries.size()) throw Error(where + "archive holds tensors the config does not define");
  if (!ck.params.all_finite()) throw Error(where + "non-finite parameter values");
  return ck;
}

}  // namespace dami
