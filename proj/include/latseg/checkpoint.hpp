#pragma once

// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "LATSEGCK"
//   u32       format version
//   u64       manifest length in bytes
//   bytes     manifest, UTF-8 JSON
//   f64[]     parameter payloads, concatenated in manifest "arrays" order
// The file ends exactly after the last payload.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/json_io.hpp"
#include "latseg/latent_ode.hpp"

namespace latseg {

inline constexpr std::array<char, 8> checkpoint_magic = {'L', 'A', 'T', 'S', 'E', 'G', 'C', 'K'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  LatentOdeModel model;
  Json lineage = Json::object();  // seeds and provenance of the run
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <class T>
T get_le(const std::string& in, std::size_t& pos, const std::string& what) {
  if (in.size() - pos < sizeof(T)) throw MalformedFile("checkpoint truncated while reading " + what);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  pos += sizeof(T);
  return std::bit_cast<T>(bytes);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  LatentOdeModel model = ck.model;
  Json arrays = Json::array();
  for (const NamedTensor& p : model.named_parameters()) arrays.push_back({{"name", p.name}, {"shape", p.tensor->shape()}});
  const Json manifest = {{"format", "latseg-checkpoint"},
                         {"format_version", checkpoint_version},
                         {"model", to_json(model.config)},
                         {"obs_variance", model.config.obs_variance},
                         {"lineage", ck.lineage},
                         {"arrays", arrays}};
  const std::string text = manifest.dump();
  std::string out(checkpoint_magic.begin(), checkpoint_magic.end());
  detail::put_le<std::uint32_t>(out, checkpoint_version);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const NamedTensor& p : model.named_parameters())
    for (double v : p.tensor->storage()) detail::put_le<double>(out, v);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < checkpoint_magic.size() || !std::equal(checkpoint_magic.begin(), checkpoint_magic.end(), bytes.begin())) {
    throw MalformedFile("not a checkpoint file (bad magic)");
  }
  std::size_t pos = checkpoint_magic.size();
  const auto version = detail::get_le<std::uint32_t>(bytes, pos, "version");
  if (version != checkpoint_version) {
    throw MalformedFile("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                        std::to_string(checkpoint_version) + ")");
  }
  const auto len = detail::get_le<std::uint64_t>(bytes, pos, "manifest length");
  if (bytes.size() - pos < len) throw MalformedFile("checkpoint truncated inside manifest");
  Json manifest;
  try {
    manifest = Json::parse(bytes.substr(pos, len));
  } catch (const Json::exception& e) {
    throw MalformedFile(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  pos += len;

  Checkpoint ck;
  try {
    ck.model = LatentOdeModel::create(model_config_from_json(manifest.at("model")), 0);
    ck.lineage = manifest.value("lineage", Json::object());
  } catch (const InvalidArgument& e) {
    throw MalformedFile(std::string("checkpoint manifest: ") + e.what());
  } catch (const Json::exception& e) {
    throw MalformedFile(std::string("checkpoint manifest: ") + e.what());
  }
  std::vector<NamedTensor> params = ck.model.named_parameters();
  try {
    const Json& arrays = manifest.at("arrays");
    if (!arrays.is_array() || arrays.size() != params.size()) {
      throw MalformedFile("checkpoint array table does not match model");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string name = arrays[i].at("name").get<std::string>();
      const auto shape = arrays[i].at("shape").get<std::vector<std::size_t>>();
      if (name != params[i].name || shape != params[i].tensor->shape()) {
        throw MalformedFile("checkpoint array '" + name + "' does not match expected '" + params[i].name + "'");
      }
      for (double& v : params[i].tensor->storage()) v = detail::get_le<double>(bytes, pos, "array " + name);
    }
  } catch (const Json::exception& e) {
    throw MalformedFile(std::string("checkpoint array table: ") + e.what());
  }
  if (pos != bytes.size()) throw MalformedFile("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void save_checkpoint(const LatentOdeModel& model, const std::filesystem::path& path) {
  save_checkpoint(Checkpoint{model, Json::object()}, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

/// Loads and checks the architecture against `expected`.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const ModelConfig& got = ck.model.config;
  auto mismatch = [&](const char* what, auto a, auto b) {
    throw InvalidArgument("checkpoint " + std::string(what) + " " + std::to_string(a) + " does not match required " +
                          std::to_string(b));
  };
  if (got.data_dim != expected.data_dim) mismatch("data_dim", got.data_dim, expected.data_dim);
  if (got.latent_dim != expected.latent_dim) mismatch("latent_dim", got.latent_dim, expected.latent_dim);
  if (got.hidden_dim != expected.hidden_dim) mismatch("hidden_dim", got.hidden_dim, expected.hidden_dim);
  if (got.obs_variance != expected.obs_variance) mismatch("obs_variance", got.obs_variance, expected.obs_variance);
  return ck;
}

}  // namespace latseg
