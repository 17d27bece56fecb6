#include "fedit/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <sodium.h>

#include <bit>
#include <cstring>
#include <limits>

namespace fedit {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "FTP1";

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::CheckpointFormat, what); }

}  // namespace

std::string encode_ftp1(const ParameterSet& params, const CheckpointMeta& meta) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}});
    offset += t.data.size() * sizeof(float);
  }
  json m = json::object();
  if (meta.round) m["round"] = *meta.round;
  if (meta.seed) m["seed"] = *meta.seed;
  const std::string header = json{{"tensors", std::move(tensors)}, {"meta", std::move(m)}}.dump();

  std::string out;
  out.reserve(kMagic.size() + 4 + header.size() + offset);
  out += kMagic;
  put_u32_le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& [_, t] : params) {
    for (float v : t.data) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode_ftp1(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) bad("missing FTP1 magic");
  const std::uint32_t header_len = get_u32_le(bytes.data() + kMagic.size());
  const std::size_t payload_start = kMagic.size() + 4 + static_cast<std::size_t>(header_len);
  if (payload_start > bytes.size()) bad("header length exceeds file size");
  const std::string_view payload = bytes.substr(payload_start);

  json header;
  try {
    header = json::parse(bytes.substr(kMagic.size() + 4, header_len));
  } catch (const json::exception& e) {
    bad(std::string("header is not JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array()) {
      bad("header lacks a tensors array");
    }
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header["tensors"]) {
      const auto name = entry.at("name").get<std::string>();
      if (entry.at("dtype").get<std::string>() != "f32") bad(name + ": unsupported dtype");
      Tensor t;
      t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset != expected_offset) bad(name + ": tensors are not contiguous in insertion order");
      const std::uint64_t count = t.element_count();
      if (offset + count * sizeof(float) > payload.size()) bad(name + ": payload truncated");
      t.data.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        t.data[i] = std::bit_cast<float>(get_u32_le(payload.data() + offset + i * sizeof(float)));
      }
      expected_offset = offset + count * sizeof(float);
      ckpt.params.insert(name, std::move(t));
    }
    if (expected_offset != payload.size()) bad("trailing bytes after payload");
    if (auto it = header.find("meta"); it != header.end() && !it->is_null()) {
      if (it->contains("round")) ckpt.meta.round = it->at("round").get<std::int64_t>();
      if (it->contains("seed")) ckpt.meta.seed = it->at("seed").get<std::uint64_t>();
    }
  } catch (const json::exception& e) {
    bad(std::string("bad header field: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CheckpointFormat) throw;
    bad(e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta) {
  write_file(path, encode_ftp1(params, meta));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_ftp1(read_file(path)); }

// ---------------------------------------------------------------------------

std::string base64_encode(std::string_view bytes) {
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                        &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    bad("invalid base64");
  }
  out.resize(len);
  return out;
}

}  // namespace fedit
