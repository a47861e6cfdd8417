#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctn/errors.hpp"
#include "ctn/model.hpp"

namespace ctn {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written in host order");

std::string serialize_checkpoint(const ModelParams& params, const nlohmann::json& extra) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : params.tensors) {
    index.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
    offset += t.data.size() * sizeof(double);
  }
  nlohmann::json header{{"format_version", 1}, {"config", to_json(params.config)}, {"tensors", index}};
  if (!extra.is_null()) header["extra"] = extra;
  std::string out = header.dump();
  out.push_back('\n');
  std::size_t pos = out.size();
  out.resize(pos + offset);
  for (const auto& t : params.tensors) {
    std::memcpy(out.data() + pos, t.data.data(), t.data.size() * sizeof(double));
    pos += t.data.size() * sizeof(double);
  }
  return out;
}

ModelParams parse_checkpoint(const std::string& bytes, nlohmann::json* extra) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(Errc::CheckpointFormat, "missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CheckpointFormat, std::string("header: ") + e.what());
  }
  if (header.value("format_version", 0) != 1) throw Error(Errc::CheckpointFormat, "unsupported format_version");
  ModelParams p;
  try {
    p.config = model_config_from_json(header.at("config"));
    if (extra) *extra = header.contains("extra") ? header["extra"] : nlohmann::json();
    const std::size_t payload = nl + 1;
    for (const auto& e : header.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.rows = e.at("shape").at(0).get<int>();
      t.cols = e.at("shape").at(1).get<int>();
      const std::size_t off = e.at("offset").get<std::size_t>();
      const std::size_t count = static_cast<std::size_t>(t.rows) * t.cols;
      if (payload + off + count * sizeof(double) > bytes.size())
        throw Error(Errc::CheckpointFormat, "tensor " + t.name + " runs past the end of the payload");
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + payload + off, count * sizeof(double));
      p.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CheckpointFormat, std::string("header: ") + e.what());
  }
  return p;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::Io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(Errc::Io, "cannot rename " + tmp + " to " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const ModelParams& params, const nlohmann::json& extra) {
  write_file_atomic(path, serialize_checkpoint(params, extra));
}

ModelParams load_checkpoint(const std::string& path, nlohmann::json* extra) {
  return parse_checkpoint(read_file(path), extra);
}

}  // namespace ctn
