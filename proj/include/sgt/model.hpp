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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgt/optim.hpp"
#include "sgt/saliency.hpp"
#include "sgt/tape.hpp"

namespace sgt {

/// How the saliency mask acts on the embedded patch tokens.
///  - distill: keep only the class token and the M selected patch tokens.
///  - zero:    keep all N+1 positions, zero the rows of dropped patches.
///  - off:     never mask (vanilla ViT when reinjection is also off).
enum class MaskMode { distill, zero, off };

std::string to_string(MaskMode mode);
MaskMode mask_mode_from_string(const std::string& s);

struct SgtConfig {
  int image_size = 64;
  int patch_size = 8;
  int channels = 1;
  int embed_dim = 64;
  int depth = 6;
  int heads = 4;
  int mlp_ratio = 4;
  int num_classes = 4;
  int keep_count = 16;
  MaskMode mask_mode = MaskMode::distill;
  bool reinjection = true;
  int mask_layer = 1;  // 1-based: the mask is applied to the input of this layer
  double guidance_threshold = 0.5;
  std::uint64_t seed = 0;

  int grid_side() const { return image_size / patch_size; }
  int num_patches() const { return grid_side() * grid_side(); }
  int patch_dim() const { return channels * patch_size * patch_size; }
  int head_dim() const { return embed_dim / heads; }

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  bool operator==(const SgtConfig&) const = default;
};

struct EncoderBlockParams {
  Tensor norm1_weight, norm1_bias;
  Tensor qkv_weight, qkv_bias;
  Tensor proj_weight, proj_bias;
  Tensor norm2_weight, norm2_bias;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
};

/// All learnable state. Copies share storage; use clone() for a snapshot.
struct SgtParams {
  Tensor patch_weight;  // (C*P*P) x D
  Tensor patch_bias;    // D
  Tensor cls_token;     // D
  Tensor pos_embed;     // (N+1) x D
  std::vector<EncoderBlockParams> blocks;
  Tensor norm_weight, norm_bias;
  Tensor head_weight;  // D x K
  Tensor head_bias;    // K

  /// Truncated-normal(0, 0.02) weights and positional table, zero biases and
  /// class token, unit norm scales.
  static SgtParams init(const SgtConfig& config, std::uint64_t seed);
  /// Zero-valued parameters with the shapes `config` implies.
  static SgtParams zeros(const SgtConfig& config);

  /// Stable checkpoint names, in a fixed order.
  std::vector<NamedParam> named() const;
  SgtParams clone() const;
  void zero_grad() const;
};

/// Head-averaged attention of one layer for one sample, plus the
/// 0-based positions in the full (N+1)-token sequence its rows refer to.
struct AttentionRecord {
  std::vector<int> positions;
  Matrix mean_probs;
};

/// Everything the forward pass exposes for inspection. Token tensors stack
/// the batch along rows: sample b occupies rows [b*T, (b+1)*T).
struct ForwardTrace {
  int batch = 0;
  int num_patches = 0;
  bool masked = false;
  Tensor z0_full;                                // B(N+1) x D, after positional add
  std::vector<std::vector<int>> kept_indices;    // per sample, patch indices in 0..N-1
  std::vector<Tensor> layer_outputs;             // output of each encoder layer
  std::vector<int> layer_seq_lens;               // token count entering each layer
  Tensor last_input;                             // reinjected state entering layer L
  std::vector<std::vector<AttentionRecord>> attention;  // [layer][sample]
  Tensor logits;                                 // B x K

  int last_seq_len() const { return layer_seq_lens.back(); }
};

/// Optional per-sample masks for one forward call. Masks are honoured only
/// when the config's mask_mode is not `off`.
struct ForwardInput {
  Tensor images;  // (B*C*H) x W
  int batch = 1;
  const std::vector<SaliencyMask>* masks = nullptr;
  bool record_attention = true;
};

// Stages of the forward pass, exposed for testing. Token tensors are batched
// as described on ForwardTrace.

/// Patch projection, class token prepend and positional add: B(N+1) x D.
Tensor embed(Tape& tape, const SgtParams& params, const SgtConfig& config, const Tensor& images, int batch);

/// Applies per-sample masks. Returns the masked token stack and, per
/// sample, the patch indices whose tokens stay live.
std::pair<Tensor, std::vector<std::vector<int>>> distill(Tape& tape, const Tensor& z0_full,
                                                         std::span<const SaliencyMask> masks, MaskMode mode,
                                                         int num_patches);

/// Pre-norm transformer block.
Tensor encoder_layer(Tape& tape, const EncoderBlockParams& block, const Tensor& tokens, int seq_len, int heads,
                     std::vector<AttentionRecord>* attention = nullptr);

/// Rebuilds the full sequence before the last layer: class row = evolved
/// class token, patch row i = z0[i+1] + evolved token of i when i was kept.
/// `evolved_positions` lists, per sample, the original patch index of each
/// evolved patch row (row j+1 of the sample's block).
Tensor reinject(Tape& tape, const Tensor& z0_full, const Tensor& evolved, int seq_len,
                std::span<const std::vector<int>> evolved_positions, std::span<const std::vector<int>> kept,
                int num_patches);

/// Class-token readout: final layer norm and linear head, B x K.
Tensor classify(Tape& tape, const SgtParams& params, const Tensor& tokens, int seq_len);

/// Full pipeline: embed, layers before mask_layer on full tokens, mask,
/// remaining layers up to L-1, reinjection (when enabled), layer L, head.
/// Throws ConfigError when a distill/zero config is given masks of the wrong
/// length or count.
ForwardTrace forward(Tape& tape, const SgtParams& params, const SgtConfig& config, const ForwardInput& input);

/// Stacks images (each C*H x W) into one tensor for ForwardInput.
Tensor stack_images(std::span<const Matrix> images, bool requires_grad = false);

/// Per-batch random guidance: apply the mask iff p >= threshold, p ~ U[0,1).
class GuidancePolicy {
 public:
  GuidancePolicy(double threshold, std::uint64_t seed);
  bool decide();
  double threshold() const { return threshold_; }

 private:
  double threshold_;
  std::mt19937_64 rng_;
};

}  // namespace sgt
