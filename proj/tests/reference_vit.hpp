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

#include <cmath>

#include "sgt/model.hpp"

// Straight-line vanilla ViT forward on plain Eigen matrices, one image at a
// time, sharing only the parameter values with the library model.
namespace sgt::testing {

inline Matrix ref_layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps = 1e-6) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    double var = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = (x(r, c) - mean) / std::sqrt(var + eps) * gamma(0, c) + beta(0, c);
    }
  }
  return y;
}

inline Matrix ref_linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y(x.rows(), w.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      double s = b(0, c);
      for (Eigen::Index k = 0; k < x.cols(); ++k) s += x(r, k) * w(k, c);
      y(r, c) = s;
    }
  return y;
}

inline Matrix ref_block(const Matrix& t, const EncoderBlockParams& p, int heads) {
  const Eigen::Index n = t.rows(), d = t.cols(), hd = d / heads;
  const Matrix h = ref_layer_norm(t, p.norm1_weight.value(), p.norm1_bias.value());
  const Matrix qkv = ref_linear(h, p.qkv_weight.value(), p.qkv_bias.value());
  Matrix attn(n, d);
  for (int head = 0; head < heads; ++head) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (Eigen::Index j = 0; j < n; ++j) {
        double dot = 0;
        for (Eigen::Index k = 0; k < hd; ++k) dot += qkv(i, head * hd + k) * qkv(j, d + head * hd + k);
        s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (auto& v : s) z += (v = std::exp(v - mx));
      for (Eigen::Index k = 0; k < hd; ++k) {
        double acc = 0;
        for (Eigen::Index j = 0; j < n; ++j) acc += s[static_cast<std::size_t>(j)] / z * qkv(j, 2 * d + head * hd + k);
        attn(i, head * hd + k) = acc;
      }
    }
  }
  const Matrix x = t + ref_linear(attn, p.proj_weight.value(), p.proj_bias.value());
  Matrix m = ref_linear(ref_layer_norm(x, p.norm2_weight.value(), p.norm2_bias.value()), p.fc1_weight.value(),
                        p.fc1_bias.value());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    m.data()[i] = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  return x + ref_linear(m, p.fc2_weight.value(), p.fc2_bias.value());
}

/// Logits (1 x K) of one image given as C*H x W planes.
inline Matrix ref_vit_logits(const SgtParams& p, const SgtConfig& cfg, const Matrix& image) {
  const int ps = cfg.patch_size, g = cfg.grid_side(), n = cfg.num_patches(), h = cfg.image_size;
  Matrix patches(n, cfg.patch_dim());
  for (int pr = 0; pr < g; ++pr)
    for (int pc = 0; pc < g; ++pc) {
      int col = 0;
      for (int c = 0; c < cfg.channels; ++c)
        for (int dy = 0; dy < ps; ++dy)
          for (int dx = 0; dx < ps; ++dx) patches(pr * g + pc, col++) = image(c * h + pr * ps + dy, pc * ps + dx);
    }
  Matrix tokens(n + 1, cfg.embed_dim);
  tokens.row(0) = p.cls_token.value();
  tokens.bottomRows(n) = ref_linear(patches, p.patch_weight.value(), p.patch_bias.value());
  tokens += p.pos_embed.value();
  for (const auto& block : p.blocks) tokens = ref_block(tokens, block, cfg.heads);
  const Matrix cls = ref_layer_norm(tokens.topRows(1), p.norm_weight.value(), p.norm_bias.value());
  return ref_linear(cls, p.head_weight.value(), p.head_bias.value());
}

}  // namespace sgt::testing
