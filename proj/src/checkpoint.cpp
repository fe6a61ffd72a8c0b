#include "title_forge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "title_forge/error.hpp"

namespace title_forge {
namespace {

constexpr std::string_view kMagic = "title_forge_checkpoint 1";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

std::string serialize_values(const Transformer& model, nlohmann::ordered_json& tensors) {
  std::string data;
  for (const auto& p : model.parameters()) {
    nlohmann::ordered_json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor.shape();
    entry["offset"] = data.size();
    entry["bytes"] = p.tensor.numel() * 4;
    tensors.push_back(entry);
    for (float v : p.tensor.data()) {
      std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v));
      char buf[4];
      std::memcpy(buf, &bits, 4);
      data.append(buf, 4);
    }
  }
  return data;
}

std::uint32_t crc_of(const std::string& data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

struct RawCheckpoint {
  nlohmann::json manifest;
  std::string data;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  auto fail = [&](const std::string& why) { return Error(Errc::BadCheckpoint, path.string() + ": " + why); };
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw fail("not a checkpoint file");
  if (!std::getline(in, line)) throw fail("missing manifest length");
  std::size_t manifest_len = 0;
  try {
    manifest_len = std::stoull(line);
  } catch (const std::exception&) {
    throw fail("bad manifest length");
  }
  std::string manifest_text(manifest_len, '\0');
  if (!in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len))) throw fail("truncated manifest");
  RawCheckpoint raw;
  try {
    raw.manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("unreadable manifest: ") + e.what());
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  raw.data = rest.str();
  return raw;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Transformer& model) {
  const auto& c = model.config();
  nlohmann::ordered_json manifest;
  manifest["config"] = {{"d_model", c.d_model},
                        {"n_heads", c.n_heads},
                        {"n_layers", c.n_layers},
                        {"d_ff", c.d_ff},
                        {"vocab_size", c.vocab_size},
                        {"max_encoder_len", c.max_encoder_len},
                        {"max_decoder_len", c.max_decoder_len},
                        {"dropout", c.dropout}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::string data = serialize_values(model, tensors);
  manifest["tensors"] = std::move(tensors);
  manifest["dtype"] = "float32-le";
  manifest["data_bytes"] = data.size();
  manifest["crc32"] = crc_of(data);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write checkpoint " + path.string());
  out << kMagic << '\n' << text.size() << '\n' << text;
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

Transformer load_checkpoint(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  auto fail = [&](const std::string& why) { return Error(Errc::BadCheckpoint, path.string() + ": " + why); };
  ModelConfig config;
  try {
    const auto& c = raw.manifest.at("config");
    config.d_model = c.at("d_model").get<std::size_t>();
    config.n_heads = c.at("n_heads").get<std::size_t>();
    config.n_layers = c.at("n_layers").get<std::size_t>();
    config.d_ff = c.at("d_ff").get<std::size_t>();
    config.vocab_size = c.at("vocab_size").get<std::size_t>();
    config.max_encoder_len = c.at("max_encoder_len").get<std::size_t>();
    config.max_decoder_len = c.at("max_decoder_len").get<std::size_t>();
    config.dropout = c.at("dropout").get<double>();
    if (raw.manifest.at("data_bytes").get<std::size_t>() != raw.data.size()) throw fail("data length mismatch");
    if (raw.manifest.at("crc32").get<std::uint32_t>() != crc_of(raw.data)) throw fail("checksum mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("incomplete manifest: ") + e.what());
  }

  Transformer model(config, 0);
  auto params = model.parameters();
  const auto& tensors = raw.manifest.at("tensors");
  if (tensors.size() != params.size()) throw fail("tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw fail("tensor " + std::to_string(i) + " does not match the architecture");
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto bytes = entry.at("bytes").get<std::size_t>();
    auto values = params[i].tensor.data();
    if (bytes != values.size() * 4 || offset + bytes > raw.data.size()) throw fail("bad extent for " + params[i].name);
    for (std::size_t j = 0; j < values.size(); ++j) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, raw.data.data() + offset + j * 4, 4);
      values[j] = std::bit_cast<float>(to_little_endian(bits));
    }
  }
  return model;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", crc_of(raw.data));
  return path.stem().string() + "-" + hex;
}

}  // namespace title_forge
