#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace flowstyle {

/// Writes `bytes` to `path` via a sibling .tmp file and a rename, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void append_le_f64(std::string& out, double v);
void append_le_f32(std::string& out, float v);
double read_le_f64(const char* p);
float read_le_f32(const char* p);

}  // namespace flowstyle
