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

#include "sgt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "sgt/image_io.hpp"
#include "sgt/text_io.hpp"

namespace sgt {

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::iid_test:
      return "iid_test";
    case Split::ood_test:
      return "ood_test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "iid_test") return Split::iid_test;
  if (s == "ood_test") return Split::ood_test;
  throw ConfigError("unknown split '" + s + "' (expected train, iid_test or ood_test)");
}

const std::vector<std::string>& available_shapes() {
  static const std::vector<std::string> shapes{"disc", "square", "cross", "triangle", "diamond", "ring"};
  return shapes;
}

const std::vector<std::string>& available_textures() {
  static const std::vector<std::string> textures{"hstripes", "vstripes", "checker", "dots", "diagonal", "flat"};
  return textures;
}

int SpurSpec::samples(Split split) const {
  switch (split) {
    case Split::train:
      return train_samples;
    case Split::iid_test:
      return iid_samples;
    case Split::ood_test:
      return ood_samples;
  }
  return 0;
}

double SpurSpec::rho(Split split) const {
  switch (split) {
    case Split::train:
      return rho_train;
    case Split::iid_test:
      return rho_iid;
    case Split::ood_test:
      return rho_ood;
  }
  return 0.0;
}

void SpurSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("SpurSpec: " + msg); };
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    fail("image_size must be a positive multiple of patch_size");
  }
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (static_cast<int>(shapes.size()) < num_classes) {
    fail(std::to_string(num_classes) + " classes need as many shapes, got " + std::to_string(shapes.size()));
  }
  if (static_cast<int>(textures.size()) < num_classes) {
    fail(std::to_string(num_classes) + " classes need as many textures, got " + std::to_string(textures.size()));
  }
  auto known = [](const std::vector<std::string>& pool, const std::string& s) {
    return std::find(pool.begin(), pool.end(), s) != pool.end();
  };
  for (const auto& s : shapes)
    if (!known(available_shapes(), s)) fail("unknown shape '" + s + "'");
  for (const auto& t : textures)
    if (!known(available_textures(), t)) fail("unknown texture '" + t + "'");
  for (double r : {rho_train, rho_iid, rho_ood})
    if (!(r >= 0.0 && r <= 1.0)) fail("rho values must lie in [0,1]");
  if (train_samples < 0 || iid_samples < 0 || ood_samples < 0) fail("sample counts must be >= 0");
  if (!(noise_std >= 0)) fail("noise_std must be >= 0");
  if (!(shape_min_frac > 0 && shape_min_frac <= shape_max_frac)) fail("need 0 < shape_min_frac <= shape_max_frac");
  if (shape_max_frac > 1.0) fail("shape cannot fit in frame: shape_max_frac > 1");
  if (!(coverage_threshold > 0 && coverage_threshold <= 1)) fail("coverage_threshold must lie in (0,1]");
  if (!(foreground_level >= 0 && foreground_level <= 1)) fail("foreground_level must lie in [0,1]");
}

Matrix render_shape(const std::string& shape, int image_size, double cx, double cy, double extent) {
  const double h = extent / 2.0;
  auto inside = [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    if (shape == "disc") return dx * dx + dy * dy <= h * h;
    if (shape == "square") return std::abs(dx) <= 0.8 * h && std::abs(dy) <= 0.8 * h;
    if (shape == "cross") {
      const double arm = extent / 6.0;
      return (std::abs(dx) <= h && std::abs(dy) <= arm) || (std::abs(dy) <= h && std::abs(dx) <= arm);
    }
    if (shape == "triangle") {
      if (dy < -h || dy > h) return false;
      return std::abs(dx) <= (dy + h) / 2.0;
    }
    if (shape == "diamond") return std::abs(dx) + std::abs(dy) <= h;
    if (shape == "ring") {
      const double r2 = dx * dx + dy * dy;
      return r2 <= h * h && r2 >= 0.36 * h * h;
    }
    throw ConfigError("unknown shape '" + shape + "'");
  };
  Matrix mask(image_size, image_size);
  for (int r = 0; r < image_size; ++r)
    for (int c = 0; c < image_size; ++c) mask(r, c) = inside(c + 0.5, r + 0.5) ? 1.0 : 0.0;
  return mask;
}

Matrix render_texture(const std::string& texture, int image_size) {
  // Every pattern averages 0.3 so brightness alone carries no signal.
  constexpr double lo = 0.15, hi = 0.45;
  Matrix t(image_size, image_size);
  for (int r = 0; r < image_size; ++r) {
    for (int c = 0; c < image_size; ++c) {
      double v;
      if (texture == "hstripes") {
        v = (r / 2) % 2 ? hi : lo;
      } else if (texture == "vstripes") {
        v = (c / 2) % 2 ? hi : lo;
      } else if (texture == "checker") {
        v = ((r / 2) + (c / 2)) % 2 ? hi : lo;
      } else if (texture == "diagonal") {
        v = ((r + c) / 2) % 2 ? hi : lo;
      } else if (texture == "dots") {
        v = (r % 4 < 2 && c % 4 < 2) ? 0.6 : 0.2;
      } else if (texture == "flat") {
        v = 0.3;
      } else {
        throw ConfigError("unknown texture '" + texture + "'");
      }
      t(r, c) = v;
    }
  }
  return t;
}

SaliencyMap blur_foreground(const Matrix& foreground, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const Eigen::Index h = foreground.rows(), w = foreground.cols();
  Matrix tmp = Matrix::Zero(h, w), out = Matrix::Zero(h, w);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      for (int k = -radius; k <= radius; ++k) {
        const Eigen::Index cc = c + k;
        if (cc >= 0 && cc < w) tmp(r, c) += kernel[static_cast<std::size_t>(k + radius)] * foreground(r, cc);
      }
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      for (int k = -radius; k <= radius; ++k) {
        const Eigen::Index rr = r + k;
        if (rr >= 0 && rr < h) out(r, c) += kernel[static_cast<std::size_t>(k + radius)] * tmp(rr, c);
      }
  const double peak = out.maxCoeff();
  if (!(peak > 0)) throw EmptyMapError("blur_foreground: empty foreground");
  return out / peak;
}

std::vector<int> relevant_patches(const Matrix& foreground, int patch_size, double threshold) {
  const int gr = static_cast<int>(foreground.rows()) / patch_size, gc = static_cast<int>(foreground.cols()) / patch_size;
  const double need = threshold * patch_size * patch_size;
  std::vector<int> out;
  for (int pr = 0; pr < gr; ++pr)
    for (int pc = 0; pc < gc; ++pc)
      if (foreground.block(pr * patch_size, pc * patch_size, patch_size, patch_size).sum() >= need - 1e-9) {
        out.push_back(pr * gc + pc);
      }
  return out;
}

Sample generate_sample(const SpurSpec& spec, Split split, int sample_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(sample_id)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int k = spec.num_classes;

  Sample s;
  s.sample_id = sample_id;
  s.label = std::uniform_int_distribution<int>(0, k - 1)(rng);
  if (unit(rng) < spec.rho(split)) {
    s.background_id = s.label;
  } else {
    const int other = std::uniform_int_distribution<int>(0, k - 2)(rng);
    s.background_id = other >= s.label ? other + 1 : other;
  }
  const double size = spec.image_size;
  s.extent = size * std::uniform_real_distribution<double>(spec.shape_min_frac, spec.shape_max_frac)(rng);
  const double half = s.extent / 2.0;
  s.center_x = std::uniform_real_distribution<double>(half, size - half)(rng);
  s.center_y = std::uniform_real_distribution<double>(half, size - half)(rng);

  s.foreground = render_shape(spec.shapes[static_cast<std::size_t>(s.label)], spec.image_size, s.center_x, s.center_y,
                              s.extent);
  if (s.foreground.sum() == 0) throw ConfigError("SpurSpec: shape too small to cover any pixel");
  const Matrix texture = render_texture(spec.textures[static_cast<std::size_t>(s.background_id)], spec.image_size);
  s.image = texture.cwiseProduct((1.0 - s.foreground.array()).matrix()) + spec.foreground_level * s.foreground;
  if (spec.noise_std > 0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (Eigen::Index i = 0; i < s.image.size(); ++i) s.image.data()[i] += noise(rng);
  }
  s.image = s.image.cwiseMax(0.0).cwiseMin(1.0);
  s.relevant_patches = relevant_patches(s.foreground, spec.patch_size, spec.coverage_threshold);
  s.oracle_saliency = blur_foreground(s.foreground, spec.saliency_sigma());
  return s;
}

std::vector<Sample> generate(const SpurSpec& spec, Split split) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.samples(split)));
  for (int i = 0; i < spec.samples(split); ++i) out.push_back(generate_sample(spec, split, i));
  return out;
}

std::vector<int> parse_index_list(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& field : detail::split(s, ';')) out.push_back(static_cast<int>(detail::parse_int(field, "patch index")));
  return out;
}

std::string format_index_list(const std::vector<int>& indices) {
  std::string out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(indices[i]);
  }
  return out;
}

namespace {
constexpr const char* kManifestHeader = "sample_id,label,background_id,image_path,saliency_path,relevant_patches";
}

void write_manifest(std::ostream& out, const Manifest& m) {
  out << "# image_size=" << m.image_size << '\n'
      << "# patch_size=" << m.patch_size << '\n'
      << "# coverage_threshold=" << detail::format_double(m.coverage_threshold) << '\n'
      << "# saliency_sigma=" << detail::format_double(m.saliency_sigma) << '\n'
      << kManifestHeader << '\n';
  for (const auto& r : m.rows) {
    for (const std::string* field : {&r.sample_id, &r.image_path, &r.saliency_path}) {
      if (field->find_first_of(",\n\r") != std::string::npos) throw ConfigError("manifest: field contains ',' or newline");
    }
    out << r.sample_id << ',' << r.label << ',' << r.background_id << ',' << r.image_path << ',' << r.saliency_path
        << ',' << format_index_list(r.relevant_patches) << '\n';
  }
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  bool header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (!header && line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = line.substr(eq + 1);
      if (key == "image_size") m.image_size = static_cast<int>(detail::parse_int(value, "image_size"));
      else if (key == "patch_size") m.patch_size = static_cast<int>(detail::parse_int(value, "patch_size"));
      else if (key == "coverage_threshold") m.coverage_threshold = detail::parse_double(value, "coverage_threshold");
      else if (key == "saliency_sigma") m.saliency_sigma = detail::parse_double(value, "saliency_sigma");
      continue;
    }
    if (!header) {
      if (line != kManifestHeader) throw FormatError("manifest: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = detail::split(line, ',');
    if (f.size() != 6) throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 fields");
    ManifestRow r;
    r.sample_id = f[0];
    r.label = static_cast<int>(detail::parse_int(f[1], "label"));
    r.background_id = static_cast<int>(detail::parse_int(f[2], "background_id"));
    r.image_path = f[3];
    r.saliency_path = f[4];
    r.relevant_patches = parse_index_list(f[5]);
    m.rows.push_back(std::move(r));
  }
  if (!header) throw FormatError("manifest: missing header line");
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m = read_manifest(in);
  const auto dir = path.parent_path();
  const int n = m.image_size > 0 && m.patch_size > 0 ? m.num_patches() : -1;
  for (const auto& r : m.rows) {
    for (const auto& rel : {r.image_path, r.saliency_path}) {
      if (!std::filesystem::exists(dir / rel)) {
        throw std::runtime_error("manifest " + path.string() + ": missing file " + (dir / rel).string());
      }
    }
    for (int i : r.relevant_patches) {
      if (i < 0 || (n > 0 && i >= n)) {
        throw std::out_of_range("manifest " + path.string() + ": sample " + r.sample_id + " patch index " +
                                std::to_string(i) + " out of range");
      }
    }
  }
  return m;
}

Manifest write_split(const std::filesystem::path& root, const SpurSpec& spec, Split split,
                     const std::vector<Sample>& samples) {
  const auto dir = root / to_string(split);
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "saliency");
  Manifest m;
  m.image_size = spec.image_size;
  m.patch_size = spec.patch_size;
  m.coverage_threshold = spec.coverage_threshold;
  m.saliency_sigma = spec.saliency_sigma();
  for (const auto& s : samples) {
    std::ostringstream id;
    id << std::setw(6) << std::setfill('0') << s.sample_id;
    ManifestRow r{id.str(), s.label, s.background_id, "images/" + id.str() + ".pgm", "saliency/" + id.str() + ".f64",
                  s.relevant_patches};
    write_pnm(dir / r.image_path, Image::gray(s.image));
    write_f64(dir / r.saliency_path, s.oracle_saliency);
    m.rows.push_back(std::move(r));
  }
  std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  write_manifest(out, m);
  return m;
}

}  // namespace sgt
