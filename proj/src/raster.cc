/* Copyright 2026 The evchain Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "evchain/raster.h"

#include <png.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "evchain/error.h"
#include "evchain/jsonl.h"

namespace evchain {
namespace {

// 3x5 glyphs, one row per entry, bit 2 is the leftmost column.
struct Glyph {
  char c;
  std::uint8_t rows[5];
};

constexpr Glyph kFont[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}},
    {'3', {7, 1, 7, 1, 7}}, {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}},
    {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}}, {'8', {7, 5, 7, 5, 7}},
    {'9', {7, 5, 7, 1, 7}}, {'H', {5, 5, 7, 5, 5}}, {'P', {7, 5, 7, 4, 4}},
    {'G', {7, 4, 5, 5, 7}}, {'#', {5, 7, 5, 7, 5}}, {'-', {0, 0, 7, 0, 0}},
};

const Glyph* FindGlyph(char c) {
  for (const Glyph& g : kFont) {
    if (g.c == c) return &g;
  }
  return nullptr;
}

}  // namespace

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::kInvalidArgument, "negative raster size");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    std::memcpy(&pixels_[i], fill.data(), 3);
  }
}

Rgb Raster::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Raster::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  std::memcpy(&pixels_[i], c.data(), 3);
}

void Raster::FillBox(const BoundingBox& box, Rgb c) {
  // Pixel centers x+0.5 in [x1, x2)  <=>  x in [ceil(x1-0.5), ceil(x2-0.5)).
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x1 - 0.5)));
  const int x1 = std::min(width_, static_cast<int>(std::ceil(box.x2 - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y1 - 0.5)));
  const int y1 = std::min(height_, static_cast<int>(std::ceil(box.y2 - 0.5)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

void Raster::StrokeBox(const BoundingBox& box, Rgb c, int stroke, int dash) {
  const int left = static_cast<int>(std::lround(box.x1));
  const int top = static_cast<int>(std::lround(box.y1));
  const int right = static_cast<int>(std::lround(box.x2)) - 1;
  const int bottom = static_cast<int>(std::lround(box.y2)) - 1;
  auto on = [&](int i) { return dash <= 0 || (i / dash) % 2 == 0; };
  for (int s = 0; s < stroke; ++s) {
    for (int x = left; x <= right; ++x) {
      if (!on(x - left)) continue;
      set(x, top + s, c);
      set(x, bottom - s, c);
    }
    for (int y = top; y <= bottom; ++y) {
      if (!on(y - top)) continue;
      set(left + s, y, c);
      set(right - s, y, c);
    }
  }
}

void Raster::DrawText(int x, int y, std::string_view text, Rgb c, int scale) {
  for (char ch : text) {
    if (const Glyph* g = FindGlyph(ch)) {
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (!(g->rows[row] & (4 >> col))) continue;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) {
              set(x + col * scale + dx, y + row * scale + dy, c);
            }
          }
        }
      }
    }
    x += 4 * scale;
  }
}

std::string EncodePng(const Raster& image) {
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot encode an empty raster");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png sizing failed: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

Raster DecodePng(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kInvalidArgument, std::string("not a PNG: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Raster out(static_cast<int>(img.width), static_cast<int>(img.height));
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::kInvalidArgument, std::string("png decode failed: ") + img.message);
  }
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * out.width() + x) * 3;
      out.set(x, y, {buf[i], buf[i + 1], buf[i + 2]});
    }
  }
  return out;
}

std::array<int, 2> PngDimensions(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kInvalidArgument, std::string("not a PNG: ") + img.message);
  }
  std::array<int, 2> dims{static_cast<int>(img.width), static_cast<int>(img.height)};
  png_image_free(&img);
  return dims;
}

Raster ReadPng(const std::filesystem::path& path) {
  try {
    return DecodePng(ReadFile(path));
  } catch (const Error& e) {
    throw Error(e.code(), e.message() + " (" + path.string() + ")");
  }
}

void WritePng(const std::filesystem::path& path, const Raster& image) {
  WriteFile(path, EncodePng(image));
}

std::string Base64Encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string Base64Decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "bad base64 length");
  std::string out(3 * (clean.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "bad base64 data");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

Raster Resize(const Raster& src, int width, int height) {
  if (width <= 0 || height <= 0 || src.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "resize needs positive sizes");
  }
  if (width == src.width() && height == src.height()) return src;
  Raster out(width, height);
  const double fx = double(src.width()) / width;
  const double fy = double(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, double(src.height() - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, double(src.width() - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = sx - x0;
      const Rgb a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
      Rgb px;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = a[ch] * (1 - wx) + b[ch] * wx;
        const double bot = c[ch] * (1 - wx) + d[ch] * wx;
        px[ch] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
      out.set(x, y, px);
    }
  }
  return out;
}

}  // namespace evchain
