// Copyright 2026 The SGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "sgt/core.hpp"
#include "sgt/saliency.hpp"

namespace sgt {

/// Image with values in [0, 1], stored as `channels` stacked row-major
/// planes: plane c occupies rows [c*height, (c+1)*height).
struct Image {
  int channels = 1;
  int height = 0;
  int width = 0;
  Matrix planes;

  static Image gray(Matrix plane);
  auto plane(int c) const { return planes.middleRows(static_cast<Eigen::Index>(c) * height, height); }
  auto plane(int c) { return planes.middleRows(static_cast<Eigen::Index>(c) * height, height); }
};

/// u8 <-> float mapping: byte = round(clamp(v, 0, 1) * 255), v = byte / 255.
std::uint8_t quantize(double v);
inline double dequantize(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

// Binary Netpbm, maxval 255 only. P5 for one channel, P6 for three.
// '#' comments are accepted anywhere in the header.
Image read_pnm(std::istream& in);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(std::ostream& out, const Image& image);
void write_pnm(const std::filesystem::path& path, const Image& image);

/// Heatmap for viewing: scaled so its maximum maps to 255 (all-zero maps
/// write as black).
void write_heatmap_pgm(const std::filesystem::path& path, const Matrix& map);
/// Mask at grid resolution: kept cells 255, dropped 0.
void write_mask_pgm(const std::filesystem::path& path, const SaliencyMask& mask, int grid_rows, int grid_cols);

// Lossless sidecar: u32 height, u32 width, then height*width f64, all
// little-endian, row-major.
Matrix read_f64(std::istream& in);
Matrix read_f64(const std::filesystem::path& path);
void write_f64(std::ostream& out, const Matrix& values);
void write_f64(const std::filesystem::path& path, const Matrix& values);

}  // namespace sgt
