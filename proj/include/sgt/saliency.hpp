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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sgt/core.hpp"

namespace sgt {

/// Pixel-resolution heatmap (height x width), nonnegative.
using SaliencyMap = Matrix;
/// Patch-resolution heatmap (grid_rows x grid_cols).
using SaliencyGrid = Matrix;

/// One eye-tracker fixation, pixel coordinates with origin at the top-left
/// corner; pixel (r, c) covers [c, c+1) x [r, r+1).
struct FixationRecord {
  std::string image_id;
  double x = 0.0;
  double y = 0.0;
  double duration_ms = 0.0;

  bool operator==(const FixationRecord&) const = default;
};

/// Binary keep/drop vector over the patch grid (flat raster index).
struct SaliencyMask {
  std::vector<std::uint8_t> keep;
  std::vector<int> kept_indices;  // strictly increasing

  int size() const { return static_cast<int>(keep.size()); }
  int keep_count() const { return static_cast<int>(kept_indices.size()); }

  static SaliencyMask all(int n);
  static SaliencyMask from_indices(int n, std::vector<int> indices);
};

/// Raised when there is nothing to render or normalize.
class EmptyMapError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws ConfigError for a fixation outside [0,width) x [0,height) or with
/// a negative duration.
void validate_fixations(std::span<const FixationRecord> fixes, int height, int width);

/// Renders an isotropic Gaussian per fixation (unit mass, or duration_ms mass
/// when `duration_weighted`), evaluated at pixel centers, then scales the
/// result so its maximum is 1.
SaliencyMap fixations_to_heatmap(std::span<const FixationRecord> fixes, int height, int width,
                                 double sigma, bool duration_weighted = false);

// Fixation logs: CSV with header `image_id,x,y,duration_ms`.
std::vector<FixationRecord> read_fixations_csv(std::istream& in);
std::vector<FixationRecord> read_fixations_csv(const std::filesystem::path& path);
void write_fixations_csv(std::ostream& out, std::span<const FixationRecord> fixes);

/// Sum-to-one copy of a nonnegative map.
template <typename Derived>
MatrixX<typename Derived::Scalar> distribution(const Eigen::MatrixBase<Derived>& map) {
  const auto total = map.sum();
  if (!(total > 0)) throw EmptyMapError("distribution: map has no mass");
  return map / total;
}

/// Block-mean pooling to a coarser grid. Both dimensions must divide evenly.
template <typename Derived>
MatrixX<typename Derived::Scalar> pool_to_grid(const Eigen::MatrixBase<Derived>& map, int grid_rows,
                                               int grid_cols) {
  if (grid_rows <= 0 || grid_cols <= 0 || map.rows() % grid_rows != 0 || map.cols() % grid_cols != 0) {
    throw DimensionError("pool_to_grid: " + std::to_string(map.rows()) + "x" + std::to_string(map.cols()) +
                         " map does not tile into " + std::to_string(grid_rows) + "x" +
                         std::to_string(grid_cols));
  }
  const Eigen::Index bh = map.rows() / grid_rows, bw = map.cols() / grid_cols;
  MatrixX<typename Derived::Scalar> grid(grid_rows, grid_cols);
  for (Eigen::Index r = 0; r < grid_rows; ++r)
    for (Eigen::Index c = 0; c < grid_cols; ++c) grid(r, c) = map.block(r * bh, c * bw, bh, bw).mean();
  return grid;
}

/// Keeps the `m` largest cells; ties resolve to the smaller flat index.
template <typename Derived>
SaliencyMask top_m_mask(const Eigen::DenseBase<Derived>& grid, int m) {
  const int n = static_cast<int>(grid.size());
  if (m < 1 || m > n) {
    throw ConfigError("top_m_mask: keep count " + std::to_string(m) + " outside [1," + std::to_string(n) + "]");
  }
  const MatrixX<typename Derived::Scalar> flat = grid;  // row-major flattening
  const auto* v = flat.data();
  for (int i = 0; i < n; ++i) {
    if (std::isnan(static_cast<double>(v[i]))) throw ConfigError("top_m_mask: NaN in saliency grid");
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + m, order.end(),
                    [v](int a, int b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  order.resize(static_cast<std::size_t>(m));
  return SaliencyMask::from_indices(n, std::move(order));
}

/// Kullback-Leibler divergence of the reference from the prediction, both
/// sum-normalized: sum_i Q_i * log(eps + Q_i / (P_i + eps)).
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kld(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedQ>& ref,
                              typename DerivedP::Scalar eps = 1e-7) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
    throw DimensionError("kld", {static_cast<std::size_t>(pred.rows()), static_cast<std::size_t>(pred.cols())},
                         {static_cast<std::size_t>(ref.rows()), static_cast<std::size_t>(ref.cols())});
  }
  const auto p = distribution(pred);
  const auto q = distribution(ref);
  return (q.array() * (eps + q.array() / (p.array() + eps)).log()).sum();
}

/// Pearson correlation of the flattened maps.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar cc(const Eigen::MatrixBase<DerivedP>& pred, const Eigen::MatrixBase<DerivedQ>& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
    throw DimensionError("cc", {static_cast<std::size_t>(pred.rows()), static_cast<std::size_t>(pred.cols())},
                         {static_cast<std::size_t>(ref.rows()), static_cast<std::size_t>(ref.cols())});
  }
  const auto a = (pred.array() - pred.mean()).eval();
  const auto b = (ref.array() - ref.mean()).eval();
  const auto saa = a.square().sum();
  const auto sbb = b.square().sum();
  if (!(saa > 0) || !(sbb > 0)) throw std::domain_error("cc: correlation undefined for a constant map");
  return (a * b).sum() / std::sqrt(saa * sbb);
}

/// Mean z-score (population std over all pixels) of the prediction at the
/// fixated pixels. Fixations outside the map are skipped.
template <typename Derived>
typename Derived::Scalar nss(const Eigen::MatrixBase<Derived>& pred, std::span<const FixationRecord> fixes) {
  using Scalar = typename Derived::Scalar;
  const Scalar mu = pred.mean();
  const Scalar sd = std::sqrt((pred.array() - mu).square().mean());
  if (!(sd > 0)) throw std::domain_error("nss: undefined for a constant map");
  Scalar total = 0;
  int count = 0;
  for (const auto& f : fixes) {
    if (!(f.x >= 0 && f.y >= 0 && f.x < static_cast<double>(pred.cols()) && f.y < static_cast<double>(pred.rows()))) {
      continue;
    }
    total += (pred(static_cast<Eigen::Index>(f.y), static_cast<Eigen::Index>(f.x)) - mu) / sd;
    ++count;
  }
  if (count == 0) throw EmptyMapError("nss: no fixation inside the map");
  return total / static_cast<Scalar>(count);
}

}  // namespace sgt
