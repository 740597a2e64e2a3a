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

#include "sgt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgt {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(base_lr >= 0)) throw ConfigError("TrainConfig: base_lr must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("TrainConfig: warmup_epochs must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("TrainConfig: Adam betas must lie in [0,1)");
  }
  if (!(adam.eps > 0) || !(adam.weight_decay >= 0)) throw ConfigError("TrainConfig: invalid eps or weight_decay");
}

std::vector<EpochRecord> train(const SgtParams& params, const SgtConfig& config, const TrainConfig& tc,
                               std::span<const TrainExample> data,
                               const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  tc.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");

  const auto named = params.named();
  AdamState adam(named, tc.adam);
  const int steps_per_epoch = static_cast<int>((data.size() + tc.batch_size - 1) / tc.batch_size);
  const LrSchedule schedule{tc.base_lr, tc.warmup_epochs, tc.epochs, steps_per_epoch};

  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(tc.seed), static_cast<std::uint32_t>(tc.seed >> 32), 1u};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::seed_seq guide_seed{static_cast<std::uint32_t>(tc.seed), static_cast<std::uint32_t>(tc.seed >> 32), 2u};
  std::mt19937_64 guide_engine(guide_seed);
  GuidancePolicy guidance(config.guidance_threshold, guide_engine());
  const bool uses_mask = config.mask_mode != MaskMode::off;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> log;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const SgtParams last_good = params.clone();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      const int batch = static_cast<int>(stop - start);
      std::vector<Matrix> images;
      std::vector<int> labels;
      images.reserve(static_cast<std::size_t>(batch));
      for (std::size_t i = start; i < stop; ++i) {
        images.push_back(data[order[i]].image);
        labels.push_back(data[order[i]].label);
      }

      const bool apply = uses_mask && guidance.decide();
      std::vector<SaliencyMask> masks;
      if (apply) {
        for (std::size_t i = start; i < stop; ++i) {
          const auto& m = data[order[i]].mask;
          if (!m) throw ConfigError("train: guidance requested a mask but a training example has no saliency");
          masks.push_back(*m);
        }
      }

      Tape tape;
      ForwardInput input{stack_images(images), batch, apply ? &masks : nullptr, false};
      ForwardTrace trace = forward(tape, params, config, input);
      Tensor loss = tape.cross_entropy(trace.logits, labels);
      const double lr = lr_at(schedule, step);
      if (!std::isfinite(loss.item())) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch), last_good, epoch);
      }
      params.zero_grad();
      tape.backward(loss);
      try {
        adam.step(named, lr);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(e.what(), last_good, epoch);
      }

      loss_sum += loss.item() * batch;
      for (int b = 0; b < batch; ++b) {
        Eigen::Index pred;
        trace.logits.value().row(b).maxCoeff(&pred);
        correct += pred == labels[static_cast<std::size_t>(b)];
      }
      rec.lr = lr;
      ++rec.batches;
      rec.masked_batches += apply;
      ++step;
    }
    rec.train_loss = loss_sum / static_cast<double>(data.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    rec.masked_batch_fraction = static_cast<double>(rec.masked_batches) / rec.batches;
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  params.zero_grad();
  return log;
}

}  // namespace sgt
