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

#include "sgt/saliency.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sgt/text_io.hpp"

namespace sgt {

SaliencyMask SaliencyMask::all(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return from_indices(n, std::move(idx));
}

SaliencyMask SaliencyMask::from_indices(int n, std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  SaliencyMask mask;
  mask.keep.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int k = indices[i];
    if (k < 0 || k >= n || (i > 0 && indices[i - 1] == k)) {
      throw ConfigError("mask index " + std::to_string(k) + " invalid for grid of " + std::to_string(n));
    }
    mask.keep[static_cast<std::size_t>(k)] = 1;
  }
  if (indices.empty()) throw ConfigError("mask must keep at least one patch");
  mask.kept_indices = std::move(indices);
  return mask;
}

void validate_fixations(std::span<const FixationRecord> fixes, int height, int width) {
  for (const auto& f : fixes) {
    if (!(f.x >= 0 && f.x < width && f.y >= 0 && f.y < height)) {
      throw ConfigError("fixation (" + std::to_string(f.x) + ", " + std::to_string(f.y) + ") of '" + f.image_id +
                        "' outside " + std::to_string(width) + "x" + std::to_string(height) + " image");
    }
    if (!(f.duration_ms >= 0)) throw ConfigError("fixation of '" + f.image_id + "' has negative duration");
  }
}

SaliencyMap fixations_to_heatmap(std::span<const FixationRecord> fixes, int height, int width, double sigma,
                                 bool duration_weighted) {
  if (!(sigma > 0)) throw ConfigError("fixations_to_heatmap: sigma must be positive");
  if (height <= 0 || width <= 0) throw ConfigError("fixations_to_heatmap: empty image");
  if (fixes.empty()) throw EmptyMapError("fixations_to_heatmap: no fixations");
  validate_fixations(fixes, height, width);

  const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  SaliencyMap map = SaliencyMap::Zero(height, width);
  for (const auto& f : fixes) {
    const double weight = duration_weighted ? f.duration_ms : 1.0;
    if (weight == 0.0) continue;
    for (int r = 0; r < height; ++r) {
      const double dy = r + 0.5 - f.y;
      for (int c = 0; c < width; ++c) {
        const double dx = c + 0.5 - f.x;
        map(r, c) += weight * norm * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  const double peak = map.maxCoeff();
  if (!(peak > 0)) throw EmptyMapError("fixations_to_heatmap: all fixation weights are zero");
  return map / peak;
}

std::vector<FixationRecord> read_fixations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != "image_id,x,y,duration_ms") {
    throw FormatError("fixation log: expected header 'image_id,x,y,duration_ms'");
  }
  std::vector<FixationRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 4) {
      throw FormatError("fixation log line " + std::to_string(line_no) + ": expected 4 fields");
    }
    FixationRecord f;
    f.image_id = fields[0];
    f.x = detail::parse_double(fields[1], "x");
    f.y = detail::parse_double(fields[2], "y");
    f.duration_ms = detail::parse_double(fields[3], "duration_ms");
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<FixationRecord> read_fixations_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open fixation log " + path.string());
  return read_fixations_csv(in);
}

void write_fixations_csv(std::ostream& out, std::span<const FixationRecord> fixes) {
  out << "image_id,x,y,duration_ms\n";
  for (const auto& f : fixes) {
    if (f.image_id.find_first_of(",\n\r") != std::string::npos) {
      throw ConfigError("fixation log: image_id may not contain ',' or line breaks");
    }
    out << f.image_id << ',' << detail::format_double(f.x) << ',' << detail::format_double(f.y) << ','
        << detail::format_double(f.duration_ms) << '\n';
  }
}

}  // namespace sgt
