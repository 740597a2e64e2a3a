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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgt/model.hpp"

namespace sgt {

enum class AttributionMethod { gradcam, rollout };
std::string to_string(AttributionMethod method);

/// Relevance over the patch grid (grid_side x grid_side), nonnegative.
struct AttributionMap {
  AttributionMethod method = AttributionMethod::gradcam;
  Matrix values;
};

/// Grad-CAM on token features: w_c is the mean gradient of channel c over
/// the patch rows, and patch i scores max(0, sum_c w_c * f_ic). Both inputs
/// are N x D (class token already removed).
template <typename DerivedF, typename DerivedG>
RowVectorX<typename DerivedF::Scalar> gradcam_scores(const Eigen::MatrixBase<DerivedF>& features,
                                                     const Eigen::MatrixBase<DerivedG>& grads) {
  if (features.rows() != grads.rows() || features.cols() != grads.cols()) {
    throw DimensionError("gradcam_scores: feature and gradient shapes differ");
  }
  const RowVectorX<typename DerivedF::Scalar> weights = grads.colwise().mean();
  return (features * weights.transpose()).transpose().cwiseMax(typename DerivedF::Scalar(0));
}

/// Backpropagates sum_b logits[b, targets[b]] through the trace's tape so
/// that the last layer's input holds d(target logit)/d(features) per sample.
/// Parameter gradients are left populated; callers zero them.
void backprop_targets(Tape& tape, const ForwardTrace& trace, std::span<const int> targets);

/// Grad-CAM for one sample of a trace that went through backprop_targets().
/// Requires the full (N+1)-token sequence at the last layer.
AttributionMap gradcam_vit(const ForwardTrace& trace, int sample);

/// Full-sequence rollout matrix of one sample:
/// R = prod_l rownorm(0.5 * A_l + 0.5 * I), earliest layer rightmost. Layers
/// that ran on a distilled sequence are expanded with identity rows for
/// dropped positions.
Matrix rollout_matrix(const ForwardTrace& trace, int sample);
/// Class-token row of the rollout matrix over the patch columns.
AttributionMap attention_rollout(const ForwardTrace& trace, int sample);

struct PslSample {
  double relevant_mass = 0.0;     // r
  double uniform_baseline = 0.0;  // u = |relevant| / N
  bool flagged = false;           // r <= kappa * u
};

struct PslReport {
  double kappa = 1.0;
  double psl = 0.0;
  std::vector<PslSample> samples;
};

/// Single-sample PSL terms. `map` is sum-normalized internally; throws
/// EmptyMapError for a zero-mass map.
PslSample psl_sample(const Matrix& map, std::span<const int> relevant, double kappa);
PslReport psl(std::span<const AttributionMap> maps, std::span<const std::vector<int>> relevant, double kappa = 1.0);

struct ClsMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc;  // macro one-vs-rest; empty when undefined
  std::string auc_error;
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted
};

/// Rank AUC (Mann-Whitney U / (n_pos * n_neg)) with ties counted as 1/2.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Accuracy, macro-F1 over classes seen in labels or predictions, and
/// macro one-vs-rest AUC over softmax scores.
ClsMetrics cls_metrics(const Matrix& logits, std::span<const int> labels);

}  // namespace sgt
