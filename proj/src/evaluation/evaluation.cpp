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

#include "sgt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace sgt {
namespace {

int grid_side_of(int num_patches) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_patches))));
  if (side * side != num_patches) throw DimensionError("attribution: patch count is not a square grid");
  return side;
}

Matrix to_grid(const RowVector& scores) {
  const int side = grid_side_of(static_cast<int>(scores.size()));
  Matrix grid(side, side);
  std::copy(scores.data(), scores.data() + scores.size(), grid.data());
  return grid;
}

}  // namespace

std::string to_string(AttributionMethod method) {
  return method == AttributionMethod::gradcam ? "gradcam" : "rollout";
}

void backprop_targets(Tape& tape, const ForwardTrace& trace, std::span<const int> targets) {
  const Matrix& logits = trace.logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw DimensionError("backprop_targets: one target per sample required");
  }
  Matrix pick = Matrix::Zero(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b] < 0 || targets[b] >= logits.cols()) throw DimensionError("backprop_targets: target out of range");
    pick(static_cast<Eigen::Index>(b), targets[b]) = 1.0;
  }
  tape.backward(tape.sum(tape.mul(trace.logits, Tensor::constant(std::move(pick)))));
}

AttributionMap gradcam_vit(const ForwardTrace& trace, int sample) {
  const int n = trace.num_patches;
  const int seq = trace.last_seq_len();
  if (seq != n + 1) {
    throw std::logic_error("gradcam_vit: last layer ran on " + std::to_string(seq) + " tokens, need " +
                           std::to_string(n + 1));
  }
  if (!trace.last_input.defined() || !trace.last_input.has_grad()) {
    throw std::logic_error("gradcam_vit: trace carries no gradient; run backprop_targets first");
  }
  if (sample < 0 || sample >= trace.batch) throw DimensionError("gradcam_vit: sample index out of range");
  const Eigen::Index r0 = static_cast<Eigen::Index>(sample) * seq + 1;
  const auto f = trace.last_input.value().middleRows(r0, n);
  const auto g = trace.last_input.grad().middleRows(r0, n);
  return {AttributionMethod::gradcam, to_grid(gradcam_scores(f, g))};
}

Matrix rollout_matrix(const ForwardTrace& trace, int sample) {
  if (trace.attention.empty()) throw std::logic_error("attention_rollout: trace has no attention records");
  if (sample < 0 || sample >= trace.batch) throw DimensionError("attention_rollout: sample index out of range");
  const Eigen::Index full = trace.num_patches + 1;
  Matrix rollout = Matrix::Identity(full, full);
  for (const auto& layer : trace.attention) {
    if (static_cast<int>(layer.size()) <= sample) throw std::logic_error("attention_rollout: missing attention record");
    const AttentionRecord& rec = layer[static_cast<std::size_t>(sample)];
    Matrix a = Matrix::Identity(full, full);
    const auto& pos = rec.positions;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      a.row(pos[i]).setZero();
      for (std::size_t j = 0; j < pos.size(); ++j) {
        a(pos[i], pos[j]) = rec.mean_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
    a = 0.5 * a + 0.5 * Matrix::Identity(full, full);
    const Vector sums = a.rowwise().sum();
    for (Eigen::Index r = 0; r < full; ++r) a.row(r) /= sums(r);
    rollout = a * rollout;
  }
  return rollout;
}

AttributionMap attention_rollout(const ForwardTrace& trace, int sample) {
  const Matrix r = rollout_matrix(trace, sample);
  return {AttributionMethod::rollout, to_grid(r.row(0).tail(trace.num_patches))};
}

PslSample psl_sample(const Matrix& map, std::span<const int> relevant, double kappa) {
  const auto n = static_cast<int>(map.size());
  if (relevant.empty()) throw ConfigError("psl: empty relevant set");
  if ((map.array() < 0).any()) throw ConfigError("psl: attribution map has negative entries");
  const double total = map.sum();
  if (!(total > 0)) throw EmptyMapError("psl: attribution map has zero mass");
  std::set<int> unique(relevant.begin(), relevant.end());
  double mass = 0.0;
  for (int i : unique) {
    if (i < 0 || i >= n) throw ConfigError("psl: relevant index " + std::to_string(i) + " outside the grid");
    mass += map.data()[i];
  }
  PslSample s;
  s.relevant_mass = mass / total;
  s.uniform_baseline = static_cast<double>(unique.size()) / n;
  s.flagged = s.relevant_mass <= kappa * s.uniform_baseline;
  return s;
}

PslReport psl(std::span<const AttributionMap> maps, std::span<const std::vector<int>> relevant, double kappa) {
  if (maps.size() != relevant.size()) throw DimensionError("psl: one relevant set per map required");
  if (maps.empty()) throw ConfigError("psl: no samples");
  PslReport report;
  report.kappa = kappa;
  int flagged = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    report.samples.push_back(psl_sample(maps[i].values, relevant[i], kappa));
    flagged += report.samples.back().flagged;
  }
  report.psl = static_cast<double>(flagged) / static_cast<double>(maps.size());
  return report;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::domain_error("roc_auc: need both positive and negative samples");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1) / 2.0) / (np * static_cast<double>(n_neg));
}

ClsMetrics cls_metrics(const Matrix& logits, std::span<const int> labels) {
  const Eigen::Index k = logits.cols();
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n == 0 || logits.rows() != n) throw DimensionError("cls_metrics: one logit row per label required");
  ClsMetrics m;
  m.confusion = Eigen::MatrixXi::Zero(k, k);
  Matrix probs(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DimensionError("cls_metrics: label out of range");
    Eigen::Index pred;
    logits.row(i).maxCoeff(&pred);
    ++m.confusion(y, pred);
    const double mx = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - mx).exp();
    probs.row(i) /= probs.row(i).sum();
  }
  m.accuracy = static_cast<double>(m.confusion.trace()) / static_cast<double>(n);

  double f1_sum = 0.0;
  int f1_classes = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const int tp = m.confusion(c, c);
    const int support = m.confusion.row(c).sum();
    const int predicted = m.confusion.col(c).sum();
    if (support == 0 && predicted == 0) continue;
    ++f1_classes;
    f1_sum += 2.0 * tp / static_cast<double>(support + predicted);
  }
  m.macro_f1 = f1_sum / f1_classes;

  std::vector<double> auc_values;
  for (Eigen::Index c = 0; c < k; ++c) {
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> pos(static_cast<std::size_t>(n));
    std::size_t n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      scores[static_cast<std::size_t>(i)] = probs(i, c);
      pos[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == c;
      n_pos += pos[static_cast<std::size_t>(i)];
    }
    if (n_pos == 0 || n_pos == static_cast<std::size_t>(n)) continue;
    auc_values.push_back(roc_auc(scores, pos));
  }
  if (auc_values.empty()) {
    m.auc_error = "AUC undefined: labels contain a single class";
  } else {
    m.auc = std::accumulate(auc_values.begin(), auc_values.end(), 0.0) / static_cast<double>(auc_values.size());
  }
  return m;
}

}  // namespace sgt
