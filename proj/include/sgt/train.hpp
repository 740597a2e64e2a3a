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

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sgt/model.hpp"

namespace sgt {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double base_lr = 1e-4;
  int warmup_epochs = 5;
  AdamOptions adam;
  std::uint64_t seed = 0;  // shuffling and guidance draws

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// One training image: C*H x W planes, its label and, when a saliency prior
/// exists, the precomputed top-M mask.
struct TrainExample {
  Matrix image;
  int label = 0;
  std::optional<SaliencyMask> mask;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;  // rate used by the epoch's last step
  double train_loss = 0.0;
  double train_acc = 0.0;
  double masked_batch_fraction = 0.0;
  int batches = 0;
  int masked_batches = 0;
};

/// Raised when the loss or a gradient goes non-finite. Carries the
/// parameters as they were at the start of the failing epoch.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, SgtParams last_good, int epoch)
      : std::runtime_error(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const SgtParams& last_good() const { return last_good_; }
  int epoch() const { return epoch_; }

 private:
  SgtParams last_good_;
  int epoch_;
};

/// Mini-batch training with per-batch random guidance, cross-entropy loss,
/// Adam and warmup+cosine learning rate. Deterministic for fixed inputs.
std::vector<EpochRecord> train(const SgtParams& params, const SgtConfig& config, const TrainConfig& train_config,
                               std::span<const TrainExample> data,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace sgt
