#include "paramshift/png.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <zlib.h>

#include "paramshift/checkpoint.hpp"
#include "paramshift/error.hpp"

namespace paramshift {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(const std::string& b, std::size_t at) {
  if (at + 4 > b.size()) throw FormatError("truncated png");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}

void chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

std::size_t image_extent(const Tensor<float>& image, std::size_t& h, std::size_t& w) {
  const auto& s = image.shape();
  if (s.size() < 2) throw ShapeError("image needs at least two axes, got " + shape_str(s));
  for (std::size_t i = 0; i + 2 < s.size(); ++i)
    if (s[i] != 1) throw ShapeError("expected a single image, got " + shape_str(s));
  h = s[s.size() - 2];
  w = s[s.size() - 1];
  return h * w;
}

}  // namespace

GrayImage to_gray(const Tensor<float>& image) {
  GrayImage g;
  const std::size_t n = image_extent(image, g.height, g.width);
  g.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return g;
}

GrayImage to_gray_normalized(const Tensor<float>& image) {
  GrayImage g;
  const std::size_t n = image_extent(image, g.height, g.width);
  g.pixels.assign(n, 0);
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  const double span = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (span <= 0) return g;
  for (std::size_t i = 0; i < n; ++i) {
    g.pixels[i] = static_cast<std::uint8_t>(std::lround((image[i] - *lo) / span * 255.0));
  }
  return g;
}

GrayImage tile(const std::vector<GrayImage>& tiles, std::size_t cols, std::size_t pad, std::uint8_t background) {
  if (tiles.empty() || cols == 0) throw ValueError("tile needs at least one image and one column");
  const std::size_t th = tiles[0].height, tw = tiles[0].width;
  for (const auto& t : tiles)
    if (t.height != th || t.width != tw) throw ShapeError("tiles differ in size");
  const std::size_t rows = (tiles.size() + cols - 1) / cols;
  const std::size_t ncols = std::min(cols, tiles.size());
  GrayImage out;
  out.width = ncols * tw + (ncols - 1) * pad;
  out.height = rows * th + (rows - 1) * pad;
  out.pixels.assign(out.width * out.height, background);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t r = i / cols, c = i % cols;
    for (std::size_t y = 0; y < th; ++y) {
      std::memcpy(&out.pixels[(r * (th + pad) + y) * out.width + c * (tw + pad)], &tiles[i].pixels[y * tw], tw);
    }
  }
  return out;
}

std::string encode_png(const GrayImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
    throw ShapeError("png: pixel count does not match dimensions");
  }
  std::string raw;
  raw.reserve((img.width + 1) * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.append(reinterpret_cast<const char*>(&img.pixels[y * img.width]), img.width);
  }
  uLongf cap = compressBound(static_cast<uLong>(raw.size()));
  std::string z(cap, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &cap, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error("png: zlib compression failed");
  }
  z.resize(cap);

  std::string out(reinterpret_cast<const char*>(kSignature), 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", "");
  return out;
}

GrayImage decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) throw FormatError("not a png");
  GrayImage img;
  std::string z;
  std::size_t at = 8;
  bool ended = false;
  while (!ended) {
    const std::uint32_t len = get_u32(bytes, at);
    if (at + 12 + len > bytes.size()) throw FormatError("truncated png chunk");
    const std::string type = bytes.substr(at + 4, 4);
    const std::string data = bytes.substr(at + 8, len);
    if (type == "IHDR") {
      img.width = get_u32(data, 0);
      img.height = get_u32(data, 4);
      if (data.size() != 13 || data[8] != 8 || data[9] != 0 || data[12] != 0) {
        throw FormatError("only 8-bit grayscale non-interlaced png is supported");
      }
    } else if (type == "IDAT") {
      z += data;
    } else if (type == "IEND") {
      ended = true;
    }
    at += 12 + len;
  }
  std::string raw((img.width + 1) * img.height, '\0');
  uLongf size = static_cast<uLongf>(raw.size());
  if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &size, reinterpret_cast<const Bytef*>(z.data()),
                 static_cast<uLong>(z.size())) != Z_OK ||
      size != raw.size()) {
    throw FormatError("png: corrupt image data");
  }
  img.pixels.resize(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    if (raw[y * (img.width + 1)] != 0) throw FormatError("png: unsupported filter");
    std::memcpy(&img.pixels[y * img.width], &raw[y * (img.width + 1) + 1], img.width);
  }
  return img;
}

void write_png(const std::string& path, const GrayImage& img) { write_file_atomic(path, encode_png(img)); }

}  // namespace paramshift
