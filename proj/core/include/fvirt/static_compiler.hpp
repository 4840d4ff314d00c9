// Copyright 2026 The fpgavirt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "fvirt/isa.hpp"
#include "fvirt/latency.hpp"
#include "fvirt/model.hpp"

namespace fvirt {

// Splits a layer's output into at most `tile_count` non-empty tiles. Width
// tiles are as even as possible with the remainder going to the front;
// OutputChannel tiles are whole `ocp` groups distributed the same way, with
// the last tile clipped to channel_out.
std::vector<TileSpec> tile_layer(const LayerDescriptor& layer, Method method,
                                 int tile_count, int ocp);

// Byte offsets of every tensor of one model inside its DDR window. All
// tensors are HWC with 8-bit elements; weights are [cout][kh][kw][cin].
struct DdrLayout {
  std::int64_t input_base = 0;
  std::vector<std::int64_t> weight_base;
  std::vector<std::int64_t> output_base;
  std::int64_t total_bytes = 0;

  static DdrLayout for_model(const ModelGraph& model);
};

struct InstructionFramePackage {
  int layer_id = 0;
  Method method = Method::Width;
  int tile_index = 0;
  TileSpec tile;
  std::vector<Instruction> instructions;
};

// Emits the Load / init / compute / Save sequence for one tile. Instruction
// ids start at 0 and DDR addresses are window-relative. Throws CompileError
// when the tile is out of bounds or its working set cannot be staged on chip.
InstructionFramePackage generate_ifp(const ModelGraph& model, const DdrLayout& ddr,
                                     int layer_id, Method method, int tile_index,
                                     const TileSpec& tile, const CoreConfig& core);

struct StaticArtifact {
  ModelGraph model;
  CoreConfig core;
  MemoryModel mem;
  int max_tiles = 16;
  DdrLayout ddr;
  std::map<LutKey, InstructionFramePackage> ifps;
  // Whole-layer single-core streams, without System instructions.
  std::vector<std::vector<Instruction>> untiled;
  LatencyLUT lut;
  double wall_seconds = 0.0;

  const InstructionFramePackage& ifp(int layer_id, Method method, int tile) const;
  int tile_count(int layer_id, Method method) const;
};

StaticArtifact compile_static(const ModelGraph& model, const CoreConfig& core,
                              int max_tiles, const MemoryModel& mem = {});

// One entry per IFP plus an `untiled` entry (tile 0) per layer.
LatencyLUT build_lut(const StaticArtifact& artifact);

void save_artifact(const StaticArtifact& artifact, const std::filesystem::path& dir);
StaticArtifact load_artifact(const std::filesystem::path& dir);

}  // namespace fvirt
