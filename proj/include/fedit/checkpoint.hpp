#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "fedit/core.hpp"

namespace fedit {

struct CheckpointMeta {
  std::optional<std::int64_t> round;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  ParameterSet params;
  CheckpointMeta meta;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// FTP1 layout:
//   "FTP1" | u32 LE header length L | L bytes of JSON header | f32 LE payload
// The header is
//   {"tensors": [{"name", "shape", "dtype": "f32", "offset"}...],
//    "meta": {"round"?, "seed"?}}
// with offsets in payload bytes and tensors in insertion order.

std::string encode_ftp1(const ParameterSet& params, const CheckpointMeta& meta = {});
/// Throws CheckpointFormat on any structural problem.
Checkpoint decode_ftp1(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
/// Throws CheckpointFormat on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace fedit
