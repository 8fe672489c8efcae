#include "flowstyle/numerics/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename U>
void append_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U read_le(const char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return bits;
}

}  // namespace

void append_le_f64(std::string& out, double v) { append_le(out, std::bit_cast<std::uint64_t>(v)); }
void append_le_f32(std::string& out, float v) { append_le(out, std::bit_cast<std::uint32_t>(v)); }
double read_le_f64(const char* p) { return std::bit_cast<double>(read_le<std::uint64_t>(p)); }
float read_le_f32(const char* p) { return std::bit_cast<float>(read_le<std::uint32_t>(p)); }

}  // namespace flowstyle
