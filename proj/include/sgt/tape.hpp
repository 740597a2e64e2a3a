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
#include <span>
#include <string_view>
#include <vector>

#include "sgt/tensor.hpp"

namespace sgt {

/// Dynamic reverse-mode tape.
///
/// Every primitive below computes its forward value immediately and, when any
/// operand requires a gradient, appends one record holding the operands and
/// a backward closure. Records are appended in execution order, so parents
/// always precede children and backward() simply walks the list in reverse.
///
/// A tape is single-threaded. Gradients of intermediate results are retained
/// after backward() so attribution code can read them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Linear algebra.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  /// Adds `y` to every block of y.rows() consecutive rows of `x`
  /// (bias add when y is a single row, positional table add otherwise).
  Tensor add_broadcast_rows(const Tensor& x, const Tensor& y);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);

  // Nonlinearities and normalization, all along the last axis.
  Tensor softmax(const Tensor& x);
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
  /// Exact (erf) GELU.
  Tensor gelu(const Tensor& x);

  // Reductions to a rank-0 tensor.
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);

  // Token bookkeeping.
  Tensor gather_rows(const Tensor& x, std::span<const int> rows);
  /// Output has `num_rows` rows; row rows[i] receives x.row(i). Repeated
  /// targets accumulate.
  Tensor scatter_rows(const Tensor& x, std::span<const int> rows, Eigen::Index num_rows);
  Tensor concat_rows(std::span<const Tensor> parts);

  /// Mean softmax cross-entropy over rows of `logits`.
  Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

  /// Batched multi-head scaled dot-product attention.
  ///
  /// `qkv` stacks sequences of `seq_len` rows; columns are [Q | K | V], each
  /// D wide and split into `heads` contiguous slices. Returns the
  /// concatenated per-head outputs (rows x D). When `probs` is non-null it
  /// receives one seq_len x seq_len probability matrix per (sequence, head),
  /// sequence-major.
  Tensor attention(const Tensor& qkv, Eigen::Index seq_len, int heads,
                   std::vector<Matrix>* probs = nullptr);

  /// Cuts images stacked as (batch*channels*height) x width into
  /// non-overlapping patch rows: output is (batch*N) x (channels*patch^2),
  /// patches in raster order, each flattened channel-major then row-major.
  Tensor patchify(const Tensor& images, int batch, int channels, int patch);

  /// Seeds d(loss)/d(loss) = 1 and runs every record in reverse.
  void backward(const Tensor& loss);
  /// Drops all records so the tape can be reused.
  void reset();

  std::size_t size() const { return records_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  using Node = Tensor::Node;
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  struct Record {
    std::string_view op;
    std::vector<std::shared_ptr<Node>> parents;
    std::shared_ptr<Node> output;
    BackwardFn backward;
  };

  // Wraps a forward result; records it when any parent requires grad.
  Tensor emit(std::string_view op, Matrix value, Shape shape,
              std::vector<std::shared_ptr<Node>> parents, BackwardFn backward);

  std::vector<Record> records_;
  bool backward_done_ = false;
};

}  // namespace sgt
