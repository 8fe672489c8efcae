#include "flowstyle/numerics/checkpoint.hpp"

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/io.hpp"

namespace flowstyle {

using nlohmann::json;

std::string encode_checkpoint(const ParamStore& params, const json& meta) {
  json index;
  index["version"] = kCheckpointVersion;
  index["entries"] = json::array();
  std::string blob;
  for (const auto& [name, t] : params) {
    index["entries"].push_back(
        {{"name", name}, {"shape", t.shape()}, {"dtype", "f64"}, {"byte_offset", blob.size()}});
    for (double v : t.data()) append_le_f64(blob, v);
  }
  index["meta"] = meta.is_null() ? json::object() : meta;
  std::string out = index.dump();
  out.push_back('\n');
  out += blob;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error("checkpoint: missing index line");
  json index;
  try {
    index = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: malformed index: ") + e.what());
  }
  if (!index.contains("version") || index["version"] != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " +
                (index.contains("version") ? index["version"].dump() : std::string("<none>")));
  }
  const std::string_view blob = bytes.substr(nl + 1);
  Checkpoint ck;
  for (const auto& e : index.at("entries")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (e.at("dtype") != "f64") throw Error("checkpoint: unsupported dtype for " + name);
    const auto offset = e.at("byte_offset").get<std::size_t>();
    const std::size_t n = shape_product(shape);
    if (offset + 8 * n > blob.size()) throw Error("checkpoint: truncated block for " + name);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_le_f64(blob.data() + offset + 8 * i);
    ck.params.add(name, Tensor(shape, std::move(data)));
  }
  if (index.contains("meta")) ck.meta = index["meta"];
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const json& meta) {
  write_file_atomic(path, encode_checkpoint(params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace flowstyle
