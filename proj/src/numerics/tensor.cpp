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

#include "sgt/tensor.hpp"

#include <numeric>
#include <sstream>

namespace sgt {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DimensionError::DimensionError(const std::string& op, const Shape& lhs, const Shape& rhs)
    : std::invalid_argument(op + ": incompatible shapes " + shape_to_string(lhs) + " and " +
                            shape_to_string(rhs)) {}

void Tensor::Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (!has_grad) {
    grad = g;
    has_grad = true;
  } else {
    grad += g;
  }
}

Shape Tensor::matrix_shape(const Matrix& value, Shape shape) {
  if (shape.empty()) {
    return {static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())};
  }
  if (shape_numel(shape) != static_cast<std::size_t>(value.size()) ||
      shape.back() != static_cast<std::size_t>(value.cols())) {
    throw DimensionError("tensor", shape,
                         {static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())});
  }
  return shape;
}

Tensor Tensor::constant(Matrix value, Shape shape) {
  auto node = std::make_shared<Node>();
  node->shape = matrix_shape(value, std::move(shape));
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value, Shape shape) {
  Tensor t = constant(std::move(value), std::move(shape));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value) {
  auto node = std::make_shared<Node>();
  node->value = Matrix::Constant(1, 1, value);
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
const Matrix& Tensor::value() const { return node_->value; }
Matrix& Tensor::mutable_value() { return node_->value; }

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw DimensionError("item", node_->shape, {});
  }
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_->has_grad; }

const Matrix& Tensor::grad() const {
  if (!node_->has_grad) throw std::logic_error("tensor has no gradient");
  return node_->grad;
}

Matrix& Tensor::mutable_grad() {
  if (!node_->has_grad) {
    node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
    node_->has_grad = true;
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.resize(0, 0);
  node_->has_grad = false;
}

int Tensor::node_id() const { return node_->id; }
const Tape* Tensor::tape() const { return node_->tape; }

Tensor Tensor::clone() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = node_->requires_grad && node_->id < 0;
  return Tensor(std::move(node));
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

}  // namespace sgt
