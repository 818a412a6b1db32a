#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paramshift/tensor.hpp"

namespace paramshift {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Values in [0, 1] (clamped) of an (H, W) tensor, or any tensor whose
/// trailing two axes are (H, W) with all leading extents equal to 1.
GrayImage to_gray(const Tensor<float>& image);
/// Min-max normalized to [0, 255]; a constant image maps to 0.
GrayImage to_gray_normalized(const Tensor<float>& image);

/// Grid of equally sized tiles, row-major, with `pad` background pixels
/// between tiles.
GrayImage tile(const std::vector<GrayImage>& tiles, std::size_t cols, std::size_t pad = 1, std::uint8_t background = 0);

/// 8-bit grayscale PNG, no interlacing, filter 0, fixed zlib level.
std::string encode_png(const GrayImage& img);
/// Decodes PNGs written by encode_png (8-bit grayscale only).
GrayImage decode_png(const std::string& bytes);

void write_png(const std::string& path, const GrayImage& img);

}  // namespace paramshift
