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

#include <memory>

#include "sgt/core.hpp"

namespace sgt {

class Tape;

/// Handle to a dense 64-bit array that may take part in a reverse-mode
/// computation graph.
///
/// Values are held as a row-major matrix view: the last extent is the column
/// count and all leading extents are folded into rows. A rank-0 tensor is a
/// 1x1 matrix, a rank-1 tensor is a single row.
///
/// Copies share storage (like a framework tensor handle); use clone() for an
/// independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  /// Constant: never receives a gradient.
  static Tensor constant(Matrix value, Shape shape = {});
  /// Leaf that accumulates gradients across backward passes.
  static Tensor parameter(Matrix value, Shape shape = {});
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t numel() const { return static_cast<std::size_t>(value().size()); }

  const Matrix& value() const;
  /// Mutable access for optimizers and finite-difference probes. Must not be
  /// used on a tensor whose tape still needs its saved value.
  Matrix& mutable_value();
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient buffer; throws if no gradient has been accumulated.
  const Matrix& grad() const;
  Matrix& mutable_grad();
  void zero_grad();

  /// Index of the producing operation on its tape, or -1 for leaves.
  int node_id() const;
  const Tape* tape() const;

  Tensor clone() const;
  /// Same value, cut from any graph.
  Tensor detach() const;

 private:
  friend class Tape;

  struct Node {
    Shape shape;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    const Tape* tape = nullptr;
    int id = -1;

    void accumulate(const Matrix& g);
  };

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  static Shape matrix_shape(const Matrix& value, Shape shape);

  std::shared_ptr<Node> node_;
};

}  // namespace sgt
