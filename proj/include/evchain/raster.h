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

#ifndef EVCHAIN_RASTER_H_
#define EVCHAIN_RASTER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evchain/geometry.h"

namespace evchain {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB image, row-major. Pixel (x, y) covers [x, x+1) x [y, y+1) in
// continuous pixel coordinates.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  FrameSize frame() const { return {double(width_), double(height_)}; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  // Fills the pixels whose centers lie in `box`.
  void FillBox(const BoundingBox& box, Rgb c);

  // Draws the outline of `box` with the given stroke width; dashed strokes
  // alternate `dash` pixels on and off.
  void StrokeBox(const BoundingBox& box, Rgb c, int stroke = 2, int dash = 0);

  // Renders a short digit/letter string with a 3x5 bitmap font scaled by
  // `scale`, top-left at (x, y). Unknown glyphs are skipped.
  void DrawText(int x, int y, std::string_view text, Rgb c, int scale = 3);

  std::span<const std::uint8_t> data() const { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// PNG codec. Decoding accepts any PNG libpng understands and converts to RGB.
std::string EncodePng(const Raster& image);
Raster DecodePng(std::string_view bytes);
Raster ReadPng(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const Raster& image);

// Reads only the PNG header; returns {width, height}.
std::array<int, 2> PngDimensions(std::string_view bytes);

std::string Base64Encode(std::string_view bytes);
std::string Base64Decode(std::string_view text);  // throws kInvalidArgument

// Bilinear resampling to the given size.
Raster Resize(const Raster& src, int width, int height);

}  // namespace evchain

#endif  // EVCHAIN_RASTER_H_
