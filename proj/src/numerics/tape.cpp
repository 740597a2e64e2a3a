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

#include "sgt/tape.hpp"

#include <cmath>
#include <numbers>

namespace sgt {
namespace {

Shape dims(const Matrix& m) {
  return {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op), a.shape(), b.shape());
  }
}

void require_nonempty_axis(std::string_view op, const Tensor& x) {
  if (x.cols() == 0 || x.rows() == 0) {
    throw DimensionError(std::string(op) + ": empty axis in shape " + shape_to_string(x.shape()));
  }
}

void check_rows(std::string_view op, std::span<const int> rows, Eigen::Index limit) {
  for (int r : rows) {
    if (r < 0 || r >= limit) {
      throw DimensionError(std::string(op) + ": row index " + std::to_string(r) + " outside [0," +
                           std::to_string(limit) + ")");
    }
  }
}

}  // namespace

Tensor Tape::emit(std::string_view op, Matrix value, Shape shape,
                  std::vector<std::shared_ptr<Node>> parents, BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& p : parents) {
    if (p->tape != nullptr && p->tape != this) {
      throw std::logic_error(std::string(op) + ": operand recorded on a different tape");
    }
    needs_grad = needs_grad || p->requires_grad;
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->shape = std::move(shape);
  if (needs_grad) {
    if (backward_done_) {
      throw std::logic_error(std::string(op) + ": tape already consumed by backward(); reset() first");
    }
    node->requires_grad = true;
    node->tape = this;
    node->id = static_cast<int>(records_.size());
    records_.push_back(Record{op, std::move(parents), node, std::move(backward)});
  }
  return Tensor(std::move(node));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul", a.shape(), b.shape());
  Matrix out = a.value() * b.value();
  auto an = a.node_, bn = b.node_;
  Shape shape = dims(out);
  return emit("matmul", std::move(out), std::move(shape), {an, bn}, [an, bn](const Matrix& g) {
    if (an->requires_grad) an->accumulate(g * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  auto an = a.node_, bn = b.node_;
  return emit("add", a.value() + b.value(), a.shape(), {an, bn}, [an, bn](const Matrix& g) {
    an->accumulate(g);
    bn->accumulate(g);
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  auto an = a.node_, bn = b.node_;
  return emit("sub", a.value() - b.value(), a.shape(), {an, bn}, [an, bn](const Matrix& g) {
    an->accumulate(g);
    bn->accumulate(-g);
  });
}

Tensor Tape::add_broadcast_rows(const Tensor& x, const Tensor& y) {
  const Eigen::Index period = y.rows();
  if (period == 0 || x.cols() != y.cols() || x.rows() % period != 0) {
    throw DimensionError("add_broadcast_rows", x.shape(), y.shape());
  }
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); r += period) out.middleRows(r, period) += y.value();
  auto xn = x.node_, yn = y.node_;
  return emit("add_broadcast_rows", std::move(out), x.shape(), {xn, yn},
              [xn, yn, period](const Matrix& g) {
                xn->accumulate(g);
                if (yn->requires_grad) {
                  Matrix gy = Matrix::Zero(period, g.cols());
                  for (Eigen::Index r = 0; r < g.rows(); r += period) gy += g.middleRows(r, period);
                  yn->accumulate(gy);
                }
              });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  auto an = a.node_, bn = b.node_;
  return emit("mul", a.value().cwiseProduct(b.value()), a.shape(), {an, bn},
              [an, bn](const Matrix& g) {
                if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
                if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
              });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  auto an = a.node_;
  return emit("scale", a.value() * factor, a.shape(), {an},
              [an, factor](const Matrix& g) { an->accumulate(g * factor); });
}

Tensor Tape::softmax(const Tensor& x) {
  require_nonempty_axis("softmax", x);
  Matrix y = x.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  auto xn = x.node_;
  auto saved = std::make_shared<Matrix>(y);
  return emit("softmax", std::move(y), x.shape(), {xn}, [xn, saved](const Matrix& g) {
    const Matrix& s = *saved;
    Vector dots = g.cwiseProduct(s).rowwise().sum();
    Matrix gx = s.cwiseProduct(g - dots.replicate(1, g.cols()));
    xn->accumulate(gx);
  });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_nonempty_axis("layer_norm", x);
  if (gamma.numel() != static_cast<std::size_t>(x.cols()) || gamma.rows() != 1) {
    throw DimensionError("layer_norm", x.shape(), gamma.shape());
  }
  require_same("layer_norm", gamma, beta);
  const Eigen::Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  auto xn = x.node_, gn = gamma.node_, bn = beta.node_;
  auto saved_xhat = std::make_shared<Matrix>(std::move(xhat));
  auto saved_inv = std::make_shared<Vector>(std::move(inv_std));
  return emit("layer_norm", std::move(y), x.shape(), {xn, gn, bn},
              [xn, gn, bn, saved_xhat, saved_inv, n](const Matrix& g) {
                const Matrix& xh = *saved_xhat;
                if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xh).colwise().sum());
                if (bn->requires_grad) bn->accumulate(g.colwise().sum());
                if (!xn->requires_grad) return;
                Matrix dxhat = g;
                dxhat.array().rowwise() *= gn->value.row(0).array();
                Matrix gx(g.rows(), n);
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const double m1 = dxhat.row(r).mean();
                  const double m2 = dxhat.row(r).dot(xh.row(r)) / static_cast<double>(n);
                  gx.row(r) = (*saved_inv)(r) * (dxhat.row(r).array() - m1 - xh.row(r).array() * m2);
                }
                xn->accumulate(gx);
              });
}

Tensor Tape::gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Matrix y = x.value().unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
  auto xn = x.node_;
  return emit("gelu", std::move(y), x.shape(), {xn}, [xn, inv_sqrt_2pi](const Matrix& g) {
    Matrix d = xn->value.unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    xn->accumulate(g.cwiseProduct(d));
  });
}

Tensor Tape::sum(const Tensor& x) {
  auto xn = x.node_;
  return emit("sum", Matrix::Constant(1, 1, x.value().sum()), {}, {xn}, [xn](const Matrix& g) {
    xn->accumulate(Matrix::Constant(xn->value.rows(), xn->value.cols(), g(0, 0)));
  });
}

Tensor Tape::mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  auto xn = x.node_;
  const double n = static_cast<double>(x.numel());
  return emit("mean", Matrix::Constant(1, 1, x.value().sum() / n), {}, {xn},
              [xn, n](const Matrix& g) {
                xn->accumulate(Matrix::Constant(xn->value.rows(), xn->value.cols(), g(0, 0) / n));
              });
}

Tensor Tape::gather_rows(const Tensor& x, std::span<const int> rows) {
  check_rows("gather_rows", rows, x.rows());
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
  auto xn = x.node_;
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  Shape shape = dims(out);
  return emit("gather_rows", std::move(out), std::move(shape), {xn}, [xn, idx](const Matrix& g) {
    Matrix gx = Matrix::Zero(xn->value.rows(), xn->value.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) gx.row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    xn->accumulate(gx);
  });
}

Tensor Tape::scatter_rows(const Tensor& x, std::span<const int> rows, Eigen::Index num_rows) {
  if (static_cast<Eigen::Index>(rows.size()) != x.rows()) {
    throw DimensionError("scatter_rows: " + std::to_string(rows.size()) + " targets for " +
                         std::to_string(x.rows()) + " source rows");
  }
  check_rows("scatter_rows", rows, num_rows);
  Matrix out = Matrix::Zero(num_rows, x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) += x.value().row(static_cast<Eigen::Index>(i));
  auto xn = x.node_;
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  Shape shape = dims(out);
  return emit("scatter_rows", std::move(out), std::move(shape), {xn}, [xn, idx](const Matrix& g) {
    Matrix gx(static_cast<Eigen::Index>(idx->size()), g.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) gx.row(static_cast<Eigen::Index>(i)) = g.row((*idx)[i]);
    xn->accumulate(gx);
  });
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw DimensionError("concat_rows", parts.front().shape(), p.shape());
    total += p.rows();
  }
  Matrix out(total, parts.front().cols());
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offsets.push_back(offset);
    parents.push_back(p.node_);
    offset += p.rows();
  }
  Shape shape = dims(out);
  auto captured = parents;
  return emit("concat_rows", std::move(out), std::move(shape), std::move(parents),
              [captured, offsets](const Matrix& g) {
                for (std::size_t i = 0; i < captured.size(); ++i) {
                  if (captured[i]->requires_grad) {
                    captured[i]->accumulate(g.middleRows(offsets[i], captured[i]->value.rows()));
                  }
                }
              });
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_nonempty_axis("cross_entropy", logits);
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
  }
  const Eigen::Index rows = logits.rows();
  Matrix probs(rows, logits.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw DimensionError("cross_entropy: label out of range");
    const double m = logits.value().row(r).maxCoeff();
    auto e = (logits.value().row(r).array() - m).exp();
    const double z = e.sum();
    probs.row(r) = e / z;
    loss += m + std::log(z) - logits.value()(r, y);
  }
  loss /= static_cast<double>(rows);
  auto ln = logits.node_;
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto saved = std::make_shared<Matrix>(std::move(probs));
  return emit("cross_entropy", Matrix::Constant(1, 1, loss), {}, {ln},
              [ln, targets, saved](const Matrix& g) {
                Matrix gx = *saved;
                for (std::size_t r = 0; r < targets->size(); ++r) gx(static_cast<Eigen::Index>(r), (*targets)[r]) -= 1.0;
                gx *= g(0, 0) / static_cast<double>(targets->size());
                ln->accumulate(gx);
              });
}

Tensor Tape::attention(const Tensor& qkv, Eigen::Index seq_len, int heads, std::vector<Matrix>* probs) {
  if (seq_len <= 0 || heads <= 0 || qkv.cols() % (3 * heads) != 0 || qkv.rows() % seq_len != 0) {
    throw DimensionError("attention: qkv shape " + shape_to_string(qkv.shape()) + " with seq_len " +
                         std::to_string(seq_len) + " and " + std::to_string(heads) + " heads");
  }
  const Eigen::Index dim = qkv.cols() / 3;
  const Eigen::Index head_dim = dim / heads;
  const Eigen::Index batch = qkv.rows() / seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Matrix& x = qkv.value();

  auto saved = std::make_shared<std::vector<Matrix>>();
  saved->reserve(static_cast<std::size_t>(batch * heads));
  Matrix out(qkv.rows(), dim);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index r0 = b * seq_len;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c = h * head_dim;
      auto q = x.block(r0, c, seq_len, head_dim);
      auto k = x.block(r0, dim + c, seq_len, head_dim);
      auto v = x.block(r0, 2 * dim + c, seq_len, head_dim);
      Matrix s = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < seq_len; ++r) {
        auto row = s.row(r);
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
      }
      out.block(r0, c, seq_len, head_dim).noalias() = s * v;
      saved->push_back(std::move(s));
    }
  }
  if (probs != nullptr) *probs = *saved;

  auto xn = qkv.node_;
  Shape shape = dims(out);
  return emit("attention", std::move(out), std::move(shape), {xn},
              [xn, saved, seq_len, heads, dim, head_dim, batch, scale](const Matrix& g) {
                const Matrix& x = xn->value;
                Matrix gx = Matrix::Zero(x.rows(), x.cols());
                for (Eigen::Index b = 0; b < batch; ++b) {
                  const Eigen::Index r0 = b * seq_len;
                  for (int h = 0; h < heads; ++h) {
                    const Eigen::Index c = h * head_dim;
                    const Matrix& p = (*saved)[static_cast<std::size_t>(b * heads + h)];
                    auto q = x.block(r0, c, seq_len, head_dim);
                    auto k = x.block(r0, dim + c, seq_len, head_dim);
                    auto v = x.block(r0, 2 * dim + c, seq_len, head_dim);
                    auto go = g.block(r0, c, seq_len, head_dim);
                    gx.block(r0, 2 * dim + c, seq_len, head_dim).noalias() = p.transpose() * go;
                    Matrix dp = go * v.transpose();
                    Vector dots = dp.cwiseProduct(p).rowwise().sum();
                    Matrix ds = p.cwiseProduct(dp - dots.replicate(1, seq_len)) * scale;
                    gx.block(r0, c, seq_len, head_dim).noalias() = ds * k;
                    gx.block(r0, dim + c, seq_len, head_dim).noalias() = ds.transpose() * q;
                  }
                }
                xn->accumulate(gx);
              });
}

Tensor Tape::patchify(const Tensor& images, int batch, int channels, int patch) {
  const Eigen::Index width = images.cols();
  if (batch <= 0 || channels <= 0 || patch <= 0 || images.rows() % (batch * channels) != 0) {
    throw DimensionError("patchify: image stack " + shape_to_string(images.shape()) + " for batch " +
                         std::to_string(batch) + " x channels " + std::to_string(channels));
  }
  const Eigen::Index height = images.rows() / (batch * channels);
  if (height % patch != 0 || width % patch != 0) {
    throw DimensionError("patchify: image " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by patch " + std::to_string(patch));
  }
  const Eigen::Index gr = height / patch, gc = width / patch, n = gr * gc;
  const Eigen::Index pp = static_cast<Eigen::Index>(patch) * patch;

  // Forward and backward share one index walk.
  auto walk = [=](auto&& visit) {
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index pr = 0; pr < gr; ++pr)
        for (Eigen::Index pc = 0; pc < gc; ++pc)
          for (Eigen::Index c = 0; c < channels; ++c)
            for (Eigen::Index dy = 0; dy < patch; ++dy) {
              const Eigen::Index out_row = b * n + pr * gc + pc;
              const Eigen::Index out_col = c * pp + dy * patch;
              const Eigen::Index in_row = (b * channels + c) * height + pr * patch + dy;
              visit(out_row, out_col, in_row, pc * patch);
            }
  };
  Matrix out(batch * n, channels * pp);
  const Matrix& img = images.value();
  walk([&](Eigen::Index orow, Eigen::Index ocol, Eigen::Index irow, Eigen::Index icol) {
    out.row(orow).segment(ocol, patch) = img.row(irow).segment(icol, patch);
  });
  auto xn = images.node_;
  Shape shape = dims(out);
  return emit("patchify", std::move(out), std::move(shape), {xn}, [xn, walk, patch](const Matrix& g) {
    Matrix gx(xn->value.rows(), xn->value.cols());
    walk([&](Eigen::Index orow, Eigen::Index ocol, Eigen::Index irow, Eigen::Index icol) {
      gx.row(irow).segment(icol, patch) = g.row(orow).segment(ocol, patch);
    });
    xn->accumulate(gx);
  });
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward: loss must be a scalar, got " +
                         (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (backward_done_) throw std::logic_error("backward: already called on this tape; reset() first");
  if (!loss.requires_grad() || loss.tape() != this) {
    throw std::logic_error("backward: loss is not connected to this tape");
  }
  backward_done_ = true;
  loss.node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->has_grad) it->backward(it->output->grad);
  }
}

void Tape::reset() {
  for (auto& r : records_) r.output->tape = nullptr;
  records_.clear();
  backward_done_ = false;
}

}  // namespace sgt
