#include <cmath>
#include <fstream>
#include <sstream>
#include <algorithm>

#include "ctn/errors.hpp"
#include "ctn/imaging.hpp"

namespace ctn {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

ImageGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  if (header_token(in) != "P5") throw Error(Errc::Io, path + " is not a binary PGM (P5)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(header_token(in));
    height = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw Error(Errc::Io, "malformed PGM header in " + path);
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw Error(Errc::Io, "unsupported PGM geometry in " + path);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error(Errc::Io, "truncated PGM payload in " + path);
  ImageGrid img = ImageGrid::filled(height, width, 0.0);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const unsigned v = bytes == 2 ? (raw[2 * i] << 8u) | raw[2 * i + 1] : raw[i];
    img.values[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

void write_pgm(const std::string& path, const ImageGrid& img, int maxval) {
  if (maxval <= 0 || maxval > 65535) throw Error(Errc::InvalidArgument, "PGM maxval out of range");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  const bool wide = maxval > 255;
  std::vector<unsigned char> raw;
  raw.reserve(img.values.size() * (wide ? 2 : 1));
  for (double v : img.values) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (wide) raw.push_back(static_cast<unsigned char>(q >> 8u));
    raw.push_back(static_cast<unsigned char>(q & 0xFFu));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path);
}

}  // namespace ctn
