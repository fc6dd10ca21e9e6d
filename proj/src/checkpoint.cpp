#include "momentnav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "momentnav/errors.hpp"

namespace momentnav {

namespace {

constexpr int kCheckpointFormat = 1;

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

void append_le(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le(const std::string& blob, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_text_file(path)));
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Param* const> params,
                     const json& meta) {
  std::string blob;
  json entries = json::array();
  for (const Param* p : params) {
    entries.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", blob.size()}});
    for (const double v : p->value.data()) append_le(blob, v);
  }
  write_text_file(blob_path(path), blob);
  json manifest = {{"format_version", kCheckpointFormat},
                   {"dtype", "float64-le"},
                   {"blob", blob_path(path).filename().string()},
                   {"blob_bytes", blob.size()},
                   {"blob_hash", hex64(fnv1a64(blob))},
                   {"params", entries},
                   {"meta", meta}};
  write_json_file(path, manifest);
}

json read_checkpoint_meta(const std::filesystem::path& path) {
  const json manifest = read_json_file(path);
  return manifest.value("meta", json::object());
}

json load_checkpoint(const std::filesystem::path& path, std::span<Param* const> params) {
  const json manifest = read_json_file(path);
  if (manifest.value("format_version", 0) != kCheckpointFormat) {
    throw ValidationError(path.string() + ": unsupported checkpoint format");
  }
  const std::string blob = read_text_file(blob_path(path));
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
    throw ValidationError(path.string() + ": blob size does not match manifest");
  }

  std::map<std::string, json> by_name;
  for (const json& entry : manifest.at("params")) by_name[entry.at("name")] = entry;

  for (Param* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ValidationError("checkpoint missing parameter " + p->name);
    const auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) throw ValidationError("shape mismatch for parameter " + p->name);
    const auto offset = it->second.at("offset").get<std::size_t>();
    if (offset + 8 * p->value.size() > blob.size()) {
      throw ValidationError("blob too short for parameter " + p->name);
    }
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_le(blob, offset + 8 * i);
    p->zero_grad();
  }
  return manifest.value("meta", json::object());
}

}  // namespace momentnav
