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
#include <string>
#include <vector>

#include "sgt/saliency.hpp"

namespace sgt {

// SpurShapes: the foreground shape decides the label; the background
// texture matches the label with a per-split probability rho.

enum class Split { train, iid_test, ood_test };
std::string to_string(Split split);
Split split_from_string(const std::string& s);

/// Shapes and textures known to the renderer.
const std::vector<std::string>& available_shapes();
const std::vector<std::string>& available_textures();

struct SpurSpec {
  int image_size = 64;
  int patch_size = 8;
  int num_classes = 4;
  std::vector<std::string> shapes{"disc", "square", "cross", "triangle"};
  std::vector<std::string> textures{"hstripes", "vstripes", "checker", "dots"};
  double rho_train = 1.0;
  double rho_iid = 1.0;
  double rho_ood = 0.25;
  int train_samples = 2000;
  int iid_samples = 500;
  int ood_samples = 500;
  double noise_std = 0.05;
  // Shape bounding-box side, as a fraction of image_size.
  double shape_min_frac = 0.5;
  double shape_max_frac = 0.65;
  double foreground_level = 0.9;
  double coverage_threshold = 0.1;
  std::uint64_t seed = 0;

  double saliency_sigma() const { return patch_size / 2.0; }
  int grid_side() const { return image_size / patch_size; }
  int samples(Split split) const;
  double rho(Split split) const;

  /// Throws ConfigError for the first violated constraint.
  void validate() const;
  bool operator==(const SpurSpec&) const = default;
};

struct Sample {
  int sample_id = 0;
  int label = 0;
  int background_id = 0;
  Matrix image;        // H x W, values in [0,1]
  Matrix foreground;   // H x W, 1 on the shape
  std::vector<int> relevant_patches;
  SaliencyMap oracle_saliency;
  // Placement, kept for oracles.
  double center_x = 0.0;
  double center_y = 0.0;
  double extent = 0.0;
};

/// Renders the binary mask of one shape (index into available_shapes()).
Matrix render_shape(const std::string& shape, int image_size, double center_x, double center_y, double extent);
/// Background pattern before noise, values in [0,1].
Matrix render_texture(const std::string& texture, int image_size);
/// Foreground blurred with a truncated Gaussian (radius 3 sigma), max 1.
SaliencyMap blur_foreground(const Matrix& foreground, double sigma);
/// Patches whose foreground coverage reaches `threshold`.
std::vector<int> relevant_patches(const Matrix& foreground, int patch_size, double threshold);

/// One sample, seeded from (spec.seed, split, sample_id).
Sample generate_sample(const SpurSpec& spec, Split split, int sample_id);
std::vector<Sample> generate(const SpurSpec& spec, Split split);

// Manifest: '#' metadata lines, then the CSV header
// `sample_id,label,background_id,image_path,saliency_path,relevant_patches`.
struct ManifestRow {
  std::string sample_id;
  int label = 0;
  int background_id = 0;
  std::string image_path;     // relative to the manifest's directory
  std::string saliency_path;  // relative to the manifest's directory
  std::vector<int> relevant_patches;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  int image_size = 0;
  int patch_size = 0;
  double coverage_threshold = 0.0;
  double saliency_sigma = 0.0;
  std::vector<ManifestRow> rows;

  int num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  bool operator==(const Manifest&) const = default;
};

std::vector<int> parse_index_list(const std::string& s);
std::string format_index_list(const std::vector<int>& indices);

void write_manifest(std::ostream& out, const Manifest& manifest);
/// Parses without touching the filesystem.
Manifest read_manifest(std::istream& in);
/// Parses and checks that every referenced file exists relative to the
/// manifest and every patch index lies inside the grid.
Manifest load_manifest(const std::filesystem::path& path);

/// Writes `<root>/<split>/{images,saliency,manifest.csv}`.
Manifest write_split(const std::filesystem::path& root, const SpurSpec& spec, Split split,
                     const std::vector<Sample>& samples);

}  // namespace sgt
