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

#include "sgt/model.hpp"

#include <numeric>

namespace sgt {

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::distill:
      return "distill";
    case MaskMode::zero:
      return "zero";
    case MaskMode::off:
      return "off";
  }
  return "?";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "distill") return MaskMode::distill;
  if (s == "zero") return MaskMode::zero;
  if (s == "off") return MaskMode::off;
  throw ConfigError("unknown mask_mode '" + s + "' (expected distill, zero or off)");
}

void SgtConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("SgtConfig: " + msg); };
  if (image_size <= 0 || patch_size <= 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) fail("image_size must be a multiple of patch_size");
  if (channels <= 0) fail("channels must be positive");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) fail("embed_dim must be a positive multiple of heads");
  if (depth < 1) fail("depth must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (keep_count < 1 || keep_count > num_patches()) {
    fail("keep_count " + std::to_string(keep_count) + " outside [1," + std::to_string(num_patches()) + "]");
  }
  if (mask_layer < 1 || mask_layer > depth) {
    fail("mask_layer " + std::to_string(mask_layer) + " outside [1," + std::to_string(depth) + "]");
  }
  if (!(guidance_threshold >= 0.0 && guidance_threshold <= 1.0)) fail("guidance_threshold must lie in [0,1]");
}

namespace {

Matrix trunc_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double std = 0.02) {
  std::normal_distribution<double> normal(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0 * std);
    m.data()[i] = v;
  }
  return m;
}

Tensor param(Matrix v) { return Tensor::parameter(std::move(v)); }
Tensor vec_param(Matrix v) {
  const auto n = static_cast<std::size_t>(v.cols());
  return Tensor::parameter(std::move(v), Shape{n});
}

template <typename Fill>
SgtParams build(const SgtConfig& config, Fill&& fill) {
  config.validate();
  const Eigen::Index d = config.embed_dim, hidden = static_cast<Eigen::Index>(config.embed_dim) * config.mlp_ratio;
  SgtParams p;
  p.patch_weight = param(fill(config.patch_dim(), d, true));
  p.patch_bias = vec_param(Matrix::Zero(1, d));
  p.cls_token = vec_param(Matrix::Zero(1, d));
  p.pos_embed = param(fill(config.num_patches() + 1, d, true));
  for (int l = 0; l < config.depth; ++l) {
    EncoderBlockParams b;
    b.norm1_weight = vec_param(Matrix::Ones(1, d));
    b.norm1_bias = vec_param(Matrix::Zero(1, d));
    b.qkv_weight = param(fill(d, 3 * d, true));
    b.qkv_bias = vec_param(Matrix::Zero(1, 3 * d));
    b.proj_weight = param(fill(d, d, true));
    b.proj_bias = vec_param(Matrix::Zero(1, d));
    b.norm2_weight = vec_param(Matrix::Ones(1, d));
    b.norm2_bias = vec_param(Matrix::Zero(1, d));
    b.fc1_weight = param(fill(d, hidden, true));
    b.fc1_bias = vec_param(Matrix::Zero(1, hidden));
    b.fc2_weight = param(fill(hidden, d, true));
    b.fc2_bias = vec_param(Matrix::Zero(1, d));
    p.blocks.push_back(std::move(b));
  }
  p.norm_weight = vec_param(Matrix::Ones(1, d));
  p.norm_bias = vec_param(Matrix::Zero(1, d));
  p.head_weight = param(fill(d, config.num_classes, true));
  p.head_bias = vec_param(Matrix::Zero(1, config.num_classes));
  return p;
}

}  // namespace

SgtParams SgtParams::init(const SgtConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return build(config, [&](Eigen::Index r, Eigen::Index c, bool) { return trunc_normal(r, c, rng); });
}

SgtParams SgtParams::zeros(const SgtConfig& config) {
  return build(config, [](Eigen::Index r, Eigen::Index c, bool) { return Matrix(Matrix::Zero(r, c)); });
}

std::vector<NamedParam> SgtParams::named() const {
  std::vector<NamedParam> out{
      {"patch_embed.weight", patch_weight, true},
      {"patch_embed.bias", patch_bias, false},
      {"cls_token", cls_token, true},
      {"pos_embed", pos_embed, true},
  };
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    out.push_back({pre + "norm1.weight", b.norm1_weight, false});
    out.push_back({pre + "norm1.bias", b.norm1_bias, false});
    out.push_back({pre + "attn.qkv.weight", b.qkv_weight, true});
    out.push_back({pre + "attn.qkv.bias", b.qkv_bias, false});
    out.push_back({pre + "attn.proj.weight", b.proj_weight, true});
    out.push_back({pre + "attn.proj.bias", b.proj_bias, false});
    out.push_back({pre + "norm2.weight", b.norm2_weight, false});
    out.push_back({pre + "norm2.bias", b.norm2_bias, false});
    out.push_back({pre + "mlp.fc1.weight", b.fc1_weight, true});
    out.push_back({pre + "mlp.fc1.bias", b.fc1_bias, false});
    out.push_back({pre + "mlp.fc2.weight", b.fc2_weight, true});
    out.push_back({pre + "mlp.fc2.bias", b.fc2_bias, false});
  }
  out.push_back({"norm.weight", norm_weight, false});
  out.push_back({"norm.bias", norm_bias, false});
  out.push_back({"head.weight", head_weight, true});
  out.push_back({"head.bias", head_bias, false});
  return out;
}

SgtParams SgtParams::clone() const {
  SgtParams c = *this;
  auto fresh = [](Tensor& t) { t = t.clone(); };
  fresh(c.patch_weight);
  fresh(c.patch_bias);
  fresh(c.cls_token);
  fresh(c.pos_embed);
  for (auto& b : c.blocks) {
    for (Tensor* t : {&b.norm1_weight, &b.norm1_bias, &b.qkv_weight, &b.qkv_bias, &b.proj_weight, &b.proj_bias,
                      &b.norm2_weight, &b.norm2_bias, &b.fc1_weight, &b.fc1_bias, &b.fc2_weight, &b.fc2_bias}) {
      fresh(*t);
    }
  }
  fresh(c.norm_weight);
  fresh(c.norm_bias);
  fresh(c.head_weight);
  fresh(c.head_bias);
  return c;
}

void SgtParams::zero_grad() const {
  for (auto& p : named()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

Tensor stack_images(std::span<const Matrix> images, bool requires_grad) {
  if (images.empty()) throw DimensionError("stack_images: empty batch");
  Matrix out(images.front().rows() * static_cast<Eigen::Index>(images.size()), images.front().cols());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() != images.front().rows() || images[i].cols() != images.front().cols()) {
      throw DimensionError("stack_images: images differ in size");
    }
    out.middleRows(static_cast<Eigen::Index>(i) * images.front().rows(), images.front().rows()) = images[i];
  }
  return requires_grad ? Tensor::parameter(std::move(out)) : Tensor::constant(std::move(out));
}

Tensor embed(Tape& tape, const SgtParams& params, const SgtConfig& config, const Tensor& images, int batch) {
  const int n = config.num_patches();
  const int side = config.image_size;
  if (images.rows() != static_cast<Eigen::Index>(batch) * config.channels * side || images.cols() != side) {
    throw DimensionError("embed: images " + shape_to_string(images.shape()) + " do not match batch " +
                         std::to_string(batch) + " of " + std::to_string(config.channels) + "x" +
                         std::to_string(side) + "x" + std::to_string(side));
  }
  Tensor patches = tape.patchify(images, batch, config.channels, config.patch_size);
  Tensor tokens = tape.add_broadcast_rows(tape.matmul(patches, params.patch_weight), params.patch_bias);
  const Tensor parts[] = {params.cls_token, tokens};
  Tensor pool = tape.concat_rows(parts);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(batch) * (n + 1));
  for (int b = 0; b < batch; ++b) {
    order.push_back(0);
    for (int i = 0; i < n; ++i) order.push_back(1 + b * n + i);
  }
  return tape.add_broadcast_rows(tape.gather_rows(pool, order), params.pos_embed);
}

std::pair<Tensor, std::vector<std::vector<int>>> distill(Tape& tape, const Tensor& z0_full,
                                                         std::span<const SaliencyMask> masks, MaskMode mode,
                                                         int num_patches) {
  const int seq = num_patches + 1;
  if (z0_full.rows() % seq != 0) {
    throw DimensionError("distill: " + std::to_string(z0_full.rows()) + " token rows for sequences of " +
                         std::to_string(seq));
  }
  const int batch = static_cast<int>(z0_full.rows() / seq);
  std::vector<std::vector<int>> kept(static_cast<std::size_t>(batch));
  if (mode == MaskMode::off) {
    std::vector<int> all(static_cast<std::size_t>(num_patches));
    std::iota(all.begin(), all.end(), 0);
    for (auto& k : kept) k = all;
    return {z0_full, kept};
  }
  if (static_cast<int>(masks.size()) != batch) {
    throw ConfigError("distill: " + std::to_string(masks.size()) + " masks for a batch of " + std::to_string(batch));
  }
  for (int b = 0; b < batch; ++b) {
    const auto& m = masks[static_cast<std::size_t>(b)];
    if (m.size() != num_patches) {
      throw ConfigError("distill: mask of length " + std::to_string(m.size()) + " for " + std::to_string(num_patches) +
                        " patch tokens");
    }
    if (m.keep_count() != masks.front().keep_count()) {
      throw ConfigError("distill: masks in one batch must keep the same number of patches");
    }
    kept[static_cast<std::size_t>(b)] = m.kept_indices;
  }

  if (mode == MaskMode::distill) {
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(batch) * (masks.front().keep_count() + 1));
    for (int b = 0; b < batch; ++b) {
      rows.push_back(b * seq);
      for (int k : kept[static_cast<std::size_t>(b)]) rows.push_back(b * seq + 1 + k);
    }
    return {tape.gather_rows(z0_full, rows), kept};
  }

  Matrix weights = Matrix::Zero(z0_full.rows(), z0_full.cols());
  for (int b = 0; b < batch; ++b) {
    weights.row(b * seq).setOnes();
    for (int k : kept[static_cast<std::size_t>(b)]) weights.row(b * seq + 1 + k).setOnes();
  }
  return {tape.mul(z0_full, Tensor::constant(std::move(weights))), kept};
}

Tensor encoder_layer(Tape& tape, const EncoderBlockParams& block, const Tensor& tokens, int seq_len, int heads,
                     std::vector<AttentionRecord>* attention) {
  Tensor h = tape.layer_norm(tokens, block.norm1_weight, block.norm1_bias);
  Tensor qkv = tape.add_broadcast_rows(tape.matmul(h, block.qkv_weight), block.qkv_bias);
  std::vector<Matrix> probs;
  Tensor attn = tape.attention(qkv, seq_len, heads, attention ? &probs : nullptr);
  Tensor x = tape.add(tokens, tape.add_broadcast_rows(tape.matmul(attn, block.proj_weight), block.proj_bias));

  h = tape.layer_norm(x, block.norm2_weight, block.norm2_bias);
  h = tape.gelu(tape.add_broadcast_rows(tape.matmul(h, block.fc1_weight), block.fc1_bias));
  x = tape.add(x, tape.add_broadcast_rows(tape.matmul(h, block.fc2_weight), block.fc2_bias));

  if (attention != nullptr) {
    const std::size_t batch = probs.size() / static_cast<std::size_t>(heads);
    attention->assign(batch, {});
    for (std::size_t b = 0; b < batch; ++b) {
      Matrix mean = Matrix::Zero(seq_len, seq_len);
      for (int hd = 0; hd < heads; ++hd) mean += probs[b * static_cast<std::size_t>(heads) + hd];
      (*attention)[b].mean_probs = mean / heads;
    }
  }
  return x;
}

Tensor reinject(Tape& tape, const Tensor& z0_full, const Tensor& evolved, int seq_len,
                std::span<const std::vector<int>> evolved_positions, std::span<const std::vector<int>> kept,
                int num_patches) {
  const int full = num_patches + 1;
  const int batch = static_cast<int>(z0_full.rows() / full);
  if (z0_full.rows() != static_cast<Eigen::Index>(batch) * full ||
      evolved.rows() != static_cast<Eigen::Index>(batch) * seq_len ||
      static_cast<int>(evolved_positions.size()) != batch || static_cast<int>(kept.size()) != batch) {
    throw DimensionError("reinject", z0_full.shape(), evolved.shape());
  }
  std::vector<int> src, dst, patch_rows;
  for (int b = 0; b < batch; ++b) {
    const auto& pos = evolved_positions[static_cast<std::size_t>(b)];
    const auto& keep = kept[static_cast<std::size_t>(b)];
    if (static_cast<int>(pos.size()) != seq_len - 1) {
      throw DimensionError("reinject: sample " + std::to_string(b) + " lists " + std::to_string(pos.size()) +
                           " positions for " + std::to_string(seq_len - 1) + " evolved patch tokens");
    }
    std::vector<std::uint8_t> is_kept(static_cast<std::size_t>(num_patches), 0);
    for (int k : keep) {
      if (k < 0 || k >= num_patches) throw DimensionError("reinject: kept index out of range");
      is_kept[static_cast<std::size_t>(k)] = 1;
    }
    src.push_back(b * seq_len);
    dst.push_back(b * full);
    for (int j = 0; j < seq_len - 1; ++j) {
      const int p = pos[static_cast<std::size_t>(j)];
      if (p < 0 || p >= num_patches) throw DimensionError("reinject: evolved position out of range");
      if (!is_kept[static_cast<std::size_t>(p)]) continue;
      src.push_back(b * seq_len + 1 + j);
      dst.push_back(b * full + 1 + p);
    }
    for (int i = 0; i < num_patches; ++i) patch_rows.push_back(b * full + 1 + i);
  }
  const Eigen::Index rows = z0_full.rows();
  Tensor base = tape.scatter_rows(tape.gather_rows(z0_full, patch_rows), patch_rows, rows);
  Tensor moved = tape.scatter_rows(tape.gather_rows(evolved, src), dst, rows);
  return tape.add(base, moved);
}

Tensor classify(Tape& tape, const SgtParams& params, const Tensor& tokens, int seq_len) {
  const int batch = static_cast<int>(tokens.rows() / seq_len);
  std::vector<int> cls_rows(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) cls_rows[static_cast<std::size_t>(b)] = b * seq_len;
  Tensor cls = tape.layer_norm(tape.gather_rows(tokens, cls_rows), params.norm_weight, params.norm_bias);
  return tape.add_broadcast_rows(tape.matmul(cls, params.head_weight), params.head_bias);
}

ForwardTrace forward(Tape& tape, const SgtParams& params, const SgtConfig& config, const ForwardInput& input) {
  const int n = config.num_patches();
  const int batch = input.batch;
  const bool masking = config.mask_mode != MaskMode::off && input.masks != nullptr;
  if (masking) {
    for (const auto& m : *input.masks) {
      if (config.mask_mode == MaskMode::distill && m.keep_count() != config.keep_count) {
        throw ConfigError("forward: mask keeps " + std::to_string(m.keep_count()) + " patches, config expects " +
                          std::to_string(config.keep_count));
      }
    }
  }

  ForwardTrace trace;
  trace.batch = batch;
  trace.num_patches = n;
  trace.masked = masking;
  trace.z0_full = embed(tape, params, config, input.images, batch);

  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::vector<int>> positions(static_cast<std::size_t>(batch), all);
  trace.kept_indices = positions;

  Tensor x = trace.z0_full;
  int seq = n + 1;
  for (int l = 1; l <= config.depth; ++l) {
    if (masking && l == config.mask_layer) {
      auto [masked, kept] = distill(tape, x, *input.masks, config.mask_mode, n);
      x = masked;
      trace.kept_indices = std::move(kept);
      if (config.mask_mode == MaskMode::distill) {
        positions = trace.kept_indices;
        seq = config.keep_count + 1;
      }
    }
    if (l == config.depth) {
      if (config.reinjection) {
        x = reinject(tape, trace.z0_full, x, seq, positions, trace.kept_indices, n);
        seq = n + 1;
        positions.assign(static_cast<std::size_t>(batch), all);
      }
      trace.last_input = x;
    }
    std::vector<AttentionRecord> records;
    x = encoder_layer(tape, params.blocks[static_cast<std::size_t>(l - 1)], x, seq, config.heads,
                      input.record_attention ? &records : nullptr);
    if (input.record_attention) {
      for (int b = 0; b < batch; ++b) {
        auto& r = records[static_cast<std::size_t>(b)];
        r.positions.reserve(static_cast<std::size_t>(seq));
        r.positions.push_back(0);
        for (int p : positions[static_cast<std::size_t>(b)]) r.positions.push_back(p + 1);
      }
      trace.attention.push_back(std::move(records));
    }
    trace.layer_seq_lens.push_back(seq);
    trace.layer_outputs.push_back(x);
  }
  trace.logits = classify(tape, params, x, seq);
  return trace;
}

GuidancePolicy::GuidancePolicy(double threshold, std::uint64_t seed) : threshold_(threshold), rng_(seed) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("guidance threshold must lie in [0,1]");
}

bool GuidancePolicy::decide() {
  // 53 random mantissa bits: p is exactly representable and strictly below 1.
  const double p = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return p >= threshold_;
}

}  // namespace sgt
