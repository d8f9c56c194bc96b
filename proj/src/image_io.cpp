// SPDX-License-Identifier: Apache-2.0

#include "ggrow/image_io.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ggrow {

Image8 to_rgb8(const Image& img) {
  Image8 out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(img.data[i][c], 0.0f, 1.0f);
      out.data[i][c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return out;
}

Image from_rgb8(const Image8& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) out.data[i][c] = img.data[i][c] / 255.0f;
  }
  return out;
}

namespace {

struct PngWriteState {
  std::vector<std::uint8_t>* out;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->out->insert(st->out->end(), data, data + len);
}

void png_flush_cb(png_structp) {}

[[noreturn]] void png_error_cb(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::Io, std::string("png: ") + msg);
}

void png_warn_cb(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode_rows(int w, int h, int color_type, int depth,
                                      const std::vector<std::uint8_t>& rows,
                                      std::size_t stride) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_cb, png_warn_cb);
  if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  PngWriteState st{&out};
  try {
    png_set_write_fn(png, &st, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
                 depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y) {
      png_write_row(png, const_cast<png_bytep>(rows.data() + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

struct PngReadState {
  const std::vector<std::uint8_t>* in;
  std::size_t pos;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->in->size()) png_error(png, "truncated PNG");
  std::memcpy(data, st->in->data() + st->pos, len);
  st->pos += len;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
  std::vector<std::uint8_t> rows(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    std::memcpy(&rows[i * 3], img.data[i].data(), 3);
  }
  return encode_rows(img.width, img.height, PNG_COLOR_TYPE_RGB, 8, rows,
                     static_cast<std::size_t>(img.width) * 3);
}

std::vector<std::uint8_t> encode_png(const Gray16& img) {
  // PNG stores 16-bit samples big-endian.
  std::vector<std::uint8_t> rows(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    rows[2 * i] = static_cast<std::uint8_t>(img.data[i] >> 8);
    rows[2 * i + 1] = static_cast<std::uint8_t>(img.data[i] & 0xff);
  }
  return encode_rows(img.width, img.height, PNG_COLOR_TYPE_GRAY, 16, rows,
                     static_cast<std::size_t>(img.width) * 2);
}

DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::Io, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_cb, png_warn_cb);
  if (!png) throw Error(ErrorCode::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngReadState st{&bytes, 0};
  DecodedPng out;
  try {
    png_set_read_fn(png, &st, png_read_cb);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> row(stride);
    out.samples.reserve(static_cast<std::size_t>(out.width) * out.height * out.channels);
    for (int y = 0; y < out.height; ++y) {
      png_read_row(png, row.data(), nullptr);
      const std::size_t n = static_cast<std::size_t>(out.width) * out.channels;
      for (std::size_t i = 0; i < n; ++i) {
        out.samples.push_back(out.bit_depth == 16
                                  ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                                  : row[i]);
      }
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Image8 decode_png_rgb8(const std::vector<std::uint8_t>& bytes) {
  const DecodedPng d = decode_png(bytes);
  if (d.bit_depth != 8 || (d.channels != 3 && d.channels != 1)) {
    throw Error(ErrorCode::Protocol, "expected an 8-bit RGB or gray PNG");
  }
  Image8 img(d.width, d.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      img.data[i][c] = static_cast<std::uint8_t>(
          d.samples[i * d.channels + (d.channels == 3 ? c : 0)]);
    }
  }
  return img;
}

Gray16 decode_png_gray16(const std::vector<std::uint8_t>& bytes) {
  const DecodedPng d = decode_png(bytes);
  if (d.bit_depth != 16 || d.channels != 1) {
    throw Error(ErrorCode::Protocol, "expected a 16-bit gray PNG");
  }
  Gray16 img(d.width, d.height);
  std::copy(d.samples.begin(), d.samples.end(), img.data.begin());
  return img;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

void write_png(const std::string& path, const Image8& img) {
  const auto bytes = encode_png(img);
  write_file(path, bytes.data(), bytes.size());
}

void write_png(const std::string& path, const Gray16& img) {
  const auto bytes = encode_png(img);
  write_file(path, bytes.data(), bytes.size());
}

void write_png(const std::string& path, const Image& img) { write_png(path, to_rgb8(img)); }

Image8 read_png_rgb8(const std::string& path) { return decode_png_rgb8(read_file(path)); }

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(const void* data, std::size_t size) {
  std::string out(b64::encoded_size(size), '\0');
  out.resize(b64::encode(out.data(), data, size));
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  // The decoder stops at padding; everything before it must be consumed.
  std::size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  if (text.size() % 4 != 0 || body % 4 == 1) throw Error(ErrorCode::Protocol, "invalid base64");
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), body);
  if (read != body) throw Error(ErrorCode::Protocol, "invalid base64");
  out.resize(written);
  return out;
}

double psnr(const Image& a, const Image& b, double cap_db) {
  if (!a.same_shape(b)) throw Error(ErrorCode::InvalidArgument, "psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    se += (a.data[i].cast<double>() - b.data[i].cast<double>()).squaredNorm();
  }
  const double mse = se / (3.0 * static_cast<double>(a.size()));
  if (mse <= 0.0) return cap_db;
  return std::min(cap_db, -10.0 * std::log10(mse));
}

}  // namespace ggrow
