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
#include <span>
#include <string>
#include <vector>

#include "sgt/tensor.hpp"

namespace sgt {

/// A trainable tensor with its checkpoint name. Norm scales and biases set
/// `decay = false`.
struct NamedParam {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  /// false: decoupled decay p -= lr*wd*p. true: wd*p is folded into the gradient.
  bool coupled_wd = false;

  bool operator==(const AdamOptions&) const = default;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AdamState {
 public:
  AdamState(std::span<const NamedParam> params, AdamOptions options = {});

  /// One bias-corrected Adam update using the gradients held by each
  /// parameter. Throws NonFiniteGradient (naming the parameter) before
  /// touching anything if a gradient is NaN/Inf. Parameters without a
  /// gradient are treated as g = 0.
  void step(std::span<const NamedParam> params, double lr);

  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

/// Linear warmup followed by cosine decay to zero.
///
/// For warmup steps W and total steps S:
///   lr(s) = base * s / W                                     for s < W
///   lr(s) = base * 0.5 * (1 + cos(pi * (s - W) / (S - 1 - W)))  otherwise
struct LrSchedule {
  double base_lr = 1e-4;
  int warmup_epochs = 5;
  int total_epochs = 60;
  int steps_per_epoch = 1;

  std::int64_t total_steps() const { return std::int64_t{total_epochs} * steps_per_epoch; }
  std::int64_t warmup_steps() const { return std::int64_t{warmup_epochs} * steps_per_epoch; }
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

}  // namespace sgt
