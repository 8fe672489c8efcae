#pragma once

#include <filesystem>

#include "json.hpp"

#include "flowstyle/numerics/param_store.hpp"

namespace flowstyle {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  nlohmann::json meta = nlohmann::json::object();
};

/// File layout: one line of compact JSON
///   {"version":1,"entries":[{"name","shape","dtype":"f64","byte_offset"}],"meta":{...}}
/// terminated by '\n', followed by the raw little-endian IEEE-754 blocks.
/// byte_offset is relative to the first byte after the newline.
std::string encode_checkpoint(const ParamStore& params, const nlohmann::json& meta = {});
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flowstyle
