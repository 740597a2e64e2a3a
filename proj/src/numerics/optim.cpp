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

#include "sgt/optim.hpp"

#include <cmath>
#include <numbers>

namespace sgt {

AdamState::AdamState(std::span<const NamedParam> params, AdamOptions options) : options_(options) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void AdamState::step(std::span<const NamedParam> params, double lr) {
  if (params.size() != m_.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters for " +
                         std::to_string(m_.size()) + " moment buffers");
  }
  if (!(lr >= 0.0)) throw ConfigError("adam_step: learning rate must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i].tensor;
    if (t.rows() != m_[i].rows() || t.cols() != m_[i].cols()) {
      throw DimensionError("adam_step", t.shape(),
                           {static_cast<std::size_t>(m_[i].rows()), static_cast<std::size_t>(m_[i].cols())});
    }
    if (t.has_grad() && !t.grad().allFinite()) {
      throw NonFiniteGradient("adam_step: non-finite gradient in '" + params[i].name + "' at step " +
                              std::to_string(t_ + 1));
    }
  }

  ++t_;
  const auto& o = options_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    Matrix& p = param.mutable_value();
    const double wd = params[i].decay ? o.weight_decay : 0.0;
    Matrix g = param.has_grad() ? param.grad() : Matrix::Zero(p.rows(), p.cols());
    if (o.coupled_wd && wd != 0.0) g += wd * p;
    m_[i] = o.beta1 * m_[i] + (1.0 - o.beta1) * g;
    v_[i] = o.beta2 * v_[i] + (1.0 - o.beta2) * g.cwiseAbs2();
    if (!o.coupled_wd && wd != 0.0) p -= (lr * wd) * p;
    p.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + o.eps);
  }
}

double lr_at(const LrSchedule& schedule, std::int64_t step) {
  const std::int64_t total = schedule.total_steps();
  if (step < 0 || step >= total) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0," + std::to_string(total) + ")");
  }
  const std::int64_t warmup = schedule.warmup_steps();
  if (step < warmup) {
    return schedule.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const std::int64_t span = total - 1 - warmup;
  if (span <= 0) return schedule.base_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace sgt
