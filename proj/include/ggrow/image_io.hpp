// SPDX-License-Identifier: Apache-2.0
//
// PNG encode/decode (8-bit RGB, 16-bit gray) over libpng, plus base64.

#pragma once

#include "ggrow/common.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ggrow {

using Rgb8 = std::array<std::uint8_t, 3>;
using Image8 = Raster<Rgb8>;
using Gray16 = Raster<std::uint16_t>;

/// round(clamp(c, 0, 1) * 255) per channel.
Image8 to_rgb8(const Image& img);
Image from_rgb8(const Image8& img);

std::vector<std::uint8_t> encode_png(const Image8& img);
std::vector<std::uint8_t> encode_png(const Gray16& img);

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;   ///< 1 (gray) or 3 (rgb); alpha is stripped
  int bit_depth = 8;  ///< 8 or 16
  std::vector<std::uint16_t> samples;
};

DecodedPng decode_png(const std::vector<std::uint8_t>& bytes);
Image8 decode_png_rgb8(const std::vector<std::uint8_t>& bytes);
Gray16 decode_png_gray16(const std::vector<std::uint8_t>& bytes);

void write_png(const std::string& path, const Image8& img);
void write_png(const std::string& path, const Gray16& img);
void write_png(const std::string& path, const Image& img);
Image8 read_png_rgb8(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const void* data, std::size_t size);

std::string base64_encode(const void* data, std::size_t size);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Peak signal-to-noise ratio over all channels of all pixels, peak 1.0.
/// Identical images report the cap.
double psnr(const Image& a, const Image& b, double cap_db = 99.0);

}  // namespace ggrow
