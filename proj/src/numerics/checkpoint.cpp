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

#include "sgt/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "sgt/binary_io.hpp"

namespace sgt {
namespace {
constexpr char kMagic[8] = {'S', 'G', 'T', 'C', 'K', 'P', 'T', '1'};
}

void write_checkpoint(std::ostream& out, std::span<const NamedParam> params) {
  out.write(kMagic, sizeof(kMagic));
  for (const auto& p : params) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& shape = p.tensor.shape();
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    const Matrix& v = p.tensor.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) detail::write_le<double>(out, v.data()[i]);
  }
  if (!out) throw std::runtime_error("write_checkpoint: stream error");
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedParam> params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

std::vector<CheckpointEntry> read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic)) {
    throw FormatError("checkpoint: missing SGTCKPT1 magic");
  }
  std::vector<CheckpointEntry> entries;
  while (in.peek() != std::char_traits<char>::eof()) {
    CheckpointEntry e;
    const auto name_len = detail::read_le<std::uint32_t>(in, "checkpoint name length");
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) throw FormatError("checkpoint: truncated name");
    const auto rank = detail::read_le<std::uint32_t>(in, "checkpoint rank");
    if (rank > 8) throw FormatError("checkpoint: implausible rank " + std::to_string(rank) + " for " + e.name);
    for (std::uint32_t i = 0; i < rank; ++i) e.shape.push_back(detail::read_le<std::uint32_t>(in, "checkpoint extent"));
    const std::size_t numel = shape_numel(e.shape);
    const Eigen::Index cols = rank == 0 ? 1 : static_cast<Eigen::Index>(e.shape.back());
    const Eigen::Index rows = cols == 0 ? 0 : static_cast<Eigen::Index>(numel) / cols;
    e.value.resize(rows, cols);
    for (std::size_t i = 0; i < numel; ++i) e.value.data()[i] = detail::read_le<double>(in, "checkpoint payload");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void load_into(std::span<const NamedParam> params, std::span<const CheckpointEntry> entries) {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing parameter " + p.name);
    if (it->second->shape != p.tensor.shape()) throw DimensionError("load " + p.name, p.tensor.shape(), it->second->shape);
    Tensor t = p.tensor;
    t.mutable_value() = it->second->value;
  }
}

}  // namespace sgt
