#include "mtln/image_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mtln/error.hpp"

namespace mtln {

namespace {

void write_p5(const std::filesystem::path& path, int height, int width, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

struct RawPgm {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> bytes;
};

RawPgm read_p5(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (header_token(in) != "P5") throw FormatError("'" + path.string() + "' is not a binary PGM (P5)");
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(header_token(in));
    h = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw FormatError("'" + path.string() + "': malformed PGM header");
  }
  if (w <= 0 || h <= 0) throw FormatError("'" + path.string() + "': non-positive PGM dimensions");
  if (maxval != 255) throw FormatError("'" + path.string() + "': only 8-bit PGM (maxval 255) is supported");
  RawPgm raw{h, w, std::vector<unsigned char>(static_cast<std::size_t>(w) * h)};
  in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(raw.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.bytes.size())) {
    throw FormatError("'" + path.string() + "': truncated PGM payload");
  }
  return raw;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::vector<unsigned char> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  write_p5(path, image.height, image.width, bytes);
}

void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<unsigned char> bytes(mask.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.pixels[i] ? 255 : 0;
  write_p5(path, mask.height, mask.width, bytes);
}

Image read_pgm(const std::filesystem::path& path) {
  const RawPgm raw = read_p5(path);
  Image img(raw.height, raw.width, 0.0f);
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) img.pixels[i] = static_cast<float>(raw.bytes[i]) / 255.0f;
  return img;
}

BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  const RawPgm raw = read_p5(path);
  BinaryMask mask(raw.height, raw.width, 0);
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) mask.pixels[i] = raw.bytes[i] ? 1 : 0;
  return mask;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize_bilinear: non-positive target size");
  if (image.height == height && image.width == width) return image;
  Image out(height, width, 0.0f);
  const double sy = height > 1 ? static_cast<double>(image.height - 1) / (height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(image.width - 1) / (width - 1) : 0.0;
  for (int r = 0; r < height; ++r) {
    const double y = r * sy;
    const int y0 = std::min(static_cast<int>(y), image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = c * sx;
      const int x0 = std::min(static_cast<int>(x), image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - x0;
      const double top = image(y0, x0) * (1.0 - fx) + image(y0, x1) * fx;
      const double bottom = image(y1, x0) * (1.0 - fx) + image(y1, x1) * fx;
      out(r, c) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
    }
  }
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

}  // namespace mtln
