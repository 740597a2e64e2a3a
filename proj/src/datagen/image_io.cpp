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

#include "sgt/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "sgt/binary_io.hpp"

namespace sgt {
namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n' && ch != '\r') {
      }
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  if (token.empty()) throw FormatError("pnm: truncated header");
  return token;
}

int header_int(std::istream& in, const char* what) {
  const std::string t = header_token(in);
  int v = 0;
  for (char c : t) {
    if (!std::isdigit(static_cast<unsigned char>(c))) throw FormatError(std::string("pnm: malformed ") + what + " '" + t + "'");
    v = v * 10 + (c - '0');
    if (v > (1 << 24)) throw FormatError(std::string("pnm: implausible ") + what);
  }
  return v;
}

}  // namespace

Image Image::gray(Matrix plane) {
  Image img;
  img.channels = 1;
  img.height = static_cast<int>(plane.rows());
  img.width = static_cast<int>(plane.cols());
  img.planes = std::move(plane);
  return img;
}

std::uint8_t quantize(double v) {
  const double c = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Image read_pnm(std::istream& in) {
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw FormatError("pnm: expected binary P5 or P6 magic");
  }
  Image img;
  img.channels = magic[1] == '5' ? 1 : 3;
  // The token reader consumes exactly one whitespace byte after maxval.
  img.width = header_int(in, "width");
  img.height = header_int(in, "height");
  const int maxval = header_int(in, "maxval");
  if (maxval != 255) throw FormatError("pnm: maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (img.width <= 0 || img.height <= 0) throw FormatError("pnm: empty image");

  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  std::vector<unsigned char> bytes(count);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
    throw FormatError("pnm: truncated payload");
  }
  img.planes.resize(static_cast<Eigen::Index>(img.channels) * img.height, img.width);
  std::size_t k = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) img.planes(ch * img.height + r, c) = dequantize(bytes[k++]);
  return img;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  try {
    return read_pnm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("pnm: only 1 or 3 channels, got " + std::to_string(image.channels));
  }
  if (image.planes.rows() != static_cast<Eigen::Index>(image.channels) * image.height ||
      image.planes.cols() != image.width) {
    throw DimensionError("write_pnm: plane stack does not match header dimensions");
  }
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(image.planes.size()));
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < image.channels; ++ch) bytes.push_back(quantize(image.planes(ch * image.height + r, c)));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pnm(out, image);
}

void write_heatmap_pgm(const std::filesystem::path& path, const Matrix& map) {
  const double peak = map.size() ? map.maxCoeff() : 0.0;
  write_pnm(path, Image::gray(peak > 0 ? Matrix(map / peak) : Matrix(Matrix::Zero(map.rows(), map.cols()))));
}

void write_mask_pgm(const std::filesystem::path& path, const SaliencyMask& mask, int grid_rows, int grid_cols) {
  if (grid_rows * grid_cols != mask.size()) throw DimensionError("write_mask_pgm: grid does not match mask length");
  Matrix plane(grid_rows, grid_cols);
  for (int i = 0; i < mask.size(); ++i) plane.data()[i] = mask.keep[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  write_pnm(path, Image::gray(std::move(plane)));
}

Matrix read_f64(std::istream& in) {
  const auto rows = detail::read_le<std::uint32_t>(in, "f64 height");
  const auto cols = detail::read_le<std::uint32_t>(in, "f64 width");
  if (std::uint64_t{rows} * cols > (std::uint64_t{1} << 32)) throw FormatError("f64: implausible dimensions");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::read_le<double>(in, "f64 payload");
  return m;
}

Matrix read_f64(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_f64(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_f64(std::ostream& out, const Matrix& values) {
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.rows()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.cols()));
  for (Eigen::Index i = 0; i < values.size(); ++i) detail::write_le<double>(out, values.data()[i]);
}

void write_f64(const std::filesystem::path& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_f64(out, values);
}

}  // namespace sgt
