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
#include <optional>
#include <string>
#include <vector>

#include "fvirt/isa.hpp"
#include "fvirt/latency.hpp"
#include "fvirt/static_compiler.hpp"

namespace fvirt {

// Contiguous partition of tile indices [begin, end).
struct Block {
  int begin = 0;
  int end = 0;

  bool operator==(const Block&) const = default;
};

struct Allocation {
  std::vector<Block> blocks;  // non-empty, in index order
  std::int64_t makespan = 0;
};

// Min-max contiguous partition of `latencies` into at most `num_cores`
// blocks. Among optimal partitions the one with the fewest blocks wins, then
// the one whose split points are lexicographically smallest.
Allocation allocate(const std::vector<std::int64_t>& latencies, int num_cores);

struct TilingChoice {
  Method method = Method::Width;
  Allocation allocation;
  std::int64_t width_makespan = 0;
  std::int64_t oc_makespan = 0;
};

// Picks the tiling method with the smaller makespan (Width on ties), or the
// forced method when one is given.
TilingChoice choose_tiling(int layer_id, const LatencyLUT& lut, int num_cores,
                           std::optional<Method> forced = std::nullopt);

struct CoreBlock {
  int core_id = 0;
  std::vector<int> tiles;
  std::int64_t predicted_cycles = 0;
};

struct LayerPlan {
  int layer_id = 0;
  Method method = Method::Untiled;
  std::vector<CoreBlock> blocks;  // one per allocated core, in core order
  std::int64_t width_makespan = 0;
  std::int64_t oc_makespan = 0;
  std::int64_t predicted_cycles = 0;
};

struct AllocationPlan {
  std::vector<LayerPlan> layers;

  std::string to_json() const;
};

struct VirtualizedProgram {
  int user_id = 0;
  std::vector<int> core_ids;
  std::vector<InstructionStream> streams;  // parallel to core_ids
  int layer_count = 0;
  AllocationPlan plan;
  std::int64_t ddr_base = 0;
  std::int64_t ddr_size = 0;

  // Total encoded size of all streams.
  std::int64_t text_bytes() const;
};

struct ContextSwitchReport {
  double t_recompile = 0.0;  // seconds
  double t_transfer = 0.0;
  double t_context = 0.0;

  std::string to_json() const;
};

struct DynamicOptions {
  // Restrict every layer to one tiling method (tiling experiments).
  std::optional<Method> forced_method;
  // Use the untiled stream when a single core is allocated.
  bool fast_path = true;
  // Host-to-instruction-memory link, bytes per second.
  double link_bytes_per_second = 16e9;
};

// Every user owns a 1 GiB DDR window starting at user_id << 30.
std::int64_t ddr_window_base(int user_id);
inline constexpr std::int64_t kDdrWindowBytes = std::int64_t{1} << 30;

AllocationPlan plan_program(const StaticArtifact& artifact,
                            const std::vector<int>& core_ids,
                            const DynamicOptions& options = {});

VirtualizedProgram assemble(const StaticArtifact& artifact, int user_id,
                            const std::vector<int>& core_ids, const AllocationPlan& plan);

struct DynamicResult {
  VirtualizedProgram program;
  ContextSwitchReport report;
};

DynamicResult dynamic_compile(const StaticArtifact& artifact, int user_id,
                              const std::vector<int>& core_ids,
                              const DynamicOptions& options = {});

// core_<k>.inst, manifest.json, plan.json; context_report.json when given.
void save_program(const VirtualizedProgram& program, const std::filesystem::path& dir,
                  const ContextSwitchReport* report = nullptr);
// Restores streams and manifest fields; the plan is not reloaded.
VirtualizedProgram load_program(const std::filesystem::path& dir);

}  // namespace fvirt
