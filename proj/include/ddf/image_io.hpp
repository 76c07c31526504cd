#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ddf/tensor.hpp"

namespace ddf {

/// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// Minimal non-interlaced 8-bit PNG support (gray and RGB), zlib-backed.
void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

/// {C,H,W} tensor in [0,1] -> quantized image (C must be 1 or 3).
Image8 tensor_to_image(const Tensor& t);
/// inverse of tensor_to_image up to quantization
Tensor image_to_tensor(const Image8& img);

/// Per-channel mean of a {B,C,H,W} map (sample 0), min-max normalized to a
/// grayscale heat map.
Image8 heatmap_from_map(const Tensor& map);

}  // namespace ddf
