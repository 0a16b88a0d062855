#include "coboom/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

#include "coboom/error.hpp"

namespace coboom {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'B', 'O', 'O', 'M', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_checkpoint(const ModelState& state, const RunConfig& config) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = to_json(config);
  manifest["config"].erase("paths");
  nlohmann::json index = nlohmann::json::object();
  std::string blob;
  for (const auto& p : state.named_parameters()) {
    if (index.contains(p.name)) throw ContractError("duplicate parameter name " + p.name);
    index[p.name] = {{"shape", p.tensor.shape()}, {"offset", blob.size()}, {"dtype", "f64le"}};
    for (double v : p.tensor.values()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  }
  manifest["parameters"] = std::move(index);
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  put_u64(out, blob.size());
  out += blob;
  put_u32(out, crc32_of(blob));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  auto need = [&](std::size_t pos, std::size_t n, const char* what) {
    if (bytes.size() < pos || bytes.size() - pos < n) {
      throw FormatError(source + ": truncated checkpoint (" + what + ")");
    }
  };
  need(0, sizeof kMagic + 8, "header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(source + ": not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const std::uint64_t manifest_len = get_le(bytes, pos, 8);
  pos += 8;
  need(pos, manifest_len, "manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(pos, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": manifest: " + e.what());
  }
  pos += manifest_len;
  need(pos, 8, "blob length");
  const std::uint64_t blob_len = get_le(bytes, pos, 8);
  pos += 8;
  need(pos, blob_len, "blob");
  const std::string_view blob(bytes.data() + pos, blob_len);
  pos += blob_len;
  need(pos, 4, "crc");
  const auto stored_crc = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
  if (pos + 4 != bytes.size()) throw FormatError(source + ": trailing bytes after CRC");

  if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer()) {
    throw FormatError(source + ": manifest lacks format_version");
  }
  const int version = manifest["format_version"].get<int>();
  if (version != kCheckpointVersion) {
    throw VersionError(source + ": unsupported format_version " + std::to_string(version));
  }
  if (crc32_of(blob) != stored_crc) throw ChecksumError(source + ": CRC mismatch, blob is corrupt");

  Checkpoint ck;
  if (!manifest.contains("config")) throw FormatError(source + ": manifest lacks config");
  ck.config = config_from_json(manifest["config"]);
  ck.state = init_model(ck.config.model, 0);
  if (!manifest.contains("parameters") || !manifest["parameters"].is_object()) {
    throw FormatError(source + ": manifest lacks parameters");
  }
  const auto& index = manifest["parameters"];
  auto params = ck.state.named_parameters();
  if (index.size() != params.size()) {
    for (const auto& [name, _] : index.items()) {
      const bool known = std::any_of(params.begin(), params.end(),
                                     [&](const NamedTensor& p) { return p.name == name; });
      if (!known) throw FormatError(source + ": unexpected parameter '" + name + "'");
    }
  }
  std::map<std::uint64_t, std::uint64_t> spans;  // offset -> end
  for (auto& p : params) {
    if (!index.contains(p.name)) throw FormatError(source + ": missing parameter '" + p.name + "'");
    const auto& entry = index[p.name];
    try {
      if (entry.at("dtype").get<std::string>() != "f64le") {
        throw FormatError(source + ": parameter '" + p.name + "' has unsupported dtype");
      }
      const auto shape = entry.at("shape").get<Shape>();
      if (shape != p.tensor.shape()) {
        throw FormatError(source + ": parameter '" + p.name + "' has shape " + shape_str(shape) +
                          ", configuration implies " + shape_str(p.tensor.shape()));
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::uint64_t len = p.tensor.numel() * 8;
      if (offset > blob.size() || blob.size() - offset < len) {
        throw FormatError(source + ": parameter '" + p.name + "' lies outside the blob");
      }
      auto next = spans.lower_bound(offset);
      if ((next != spans.end() && next->first < offset + len) ||
          (next != spans.begin() && std::prev(next)->second > offset)) {
        throw FormatError(source + ": parameter '" + p.name + "' overlaps another");
      }
      spans[offset] = offset + len;
      auto values = p.tensor.mutable_values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::bit_cast<double>(get_le(blob, offset + 8 * i, 8));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": parameter '" + p.name + "': " + e.what());
    }
  }
  return ck;
}

void save_checkpoint(const ModelState& state, const RunConfig& config, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(state, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

}  // namespace coboom
