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

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sgt/optim.hpp"

namespace sgt {

/// One entry of an SGTCKPT1 container.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  Matrix value;  // row-major view of `shape`, as in Tensor
};

// Layout: "SGTCKPT1", then per entry
//   u32 name_len | name bytes | u32 rank | u32 extent * rank | f64 * numel
// all little-endian; entries run to end of file.
void write_checkpoint(std::ostream& out, std::span<const NamedParam> params);
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedParam> params);
std::vector<CheckpointEntry> read_checkpoint(std::istream& in);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `params` by name; every parameter must be
/// present with a matching shape.
void load_into(std::span<const NamedParam> params, std::span<const CheckpointEntry> entries);

}  // namespace sgt
