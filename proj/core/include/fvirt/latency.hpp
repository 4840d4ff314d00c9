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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fvirt/isa.hpp"
#include "fvirt/model.hpp"

namespace fvirt {

struct CoreConfig {
  int pp = 1;
  int icp = 16;
  int ocp = 16;
  double clock_hz = 300e6;
  int port_bits = 128;
  int bank_count = 16;
  std::int64_t bank_bytes = 64 * 1024;

  bool operator==(const CoreConfig&) const = default;

  // The 512-op small core of the pool.
  static CoreConfig small();
  // A single core with k times the small core's pixel parallelism, port
  // width and bank capacity.
  static CoreConfig scaled(int k);

  // Throws Error when any field is non-positive.
  void validate() const;
};

struct MemoryModel {
  double eff = 0.8;
  int ddr_port_bits = 512;
  double clock_hz = 300e6;

  bool operator==(const MemoryModel&) const = default;
  void validate() const;
};

// Peak operations per cycle.
std::int64_t parallelism(const CoreConfig& core);

enum class Method { Width, OutputChannel, Untiled };

std::string_view to_string(Method method);
std::optional<Method> method_from_string(std::string_view text);

// A slice of a layer's output along width (pixels) or output channels.
struct TileSpec {
  Method dimension = Method::Width;
  int start = 0;
  int size = 1;

  bool operator==(const TileSpec&) const = default;
};

// The whole output of a layer expressed as one Width tile.
TileSpec full_tile(const LayerDescriptor& layer);

std::int64_t conv_instr_latency(const LayerDescriptor& layer, const TileSpec& tile,
                                const CoreConfig& core);
std::int64_t pool_instr_latency(const LayerDescriptor& layer, const TileSpec& tile,
                                const CoreConfig& core);
std::int64_t transfer_latency(std::int64_t length_bytes, int port_bits, double eff);

// Per-instruction cycles for a stream. Compute instructions take their
// shape from the most recent Convinit/Poolinit. Throws IsaError for a
// compute instruction with no preceding init.
std::vector<std::int64_t> stream_latencies(const std::vector<Instruction>& instrs,
                                           const CoreConfig& core,
                                           const MemoryModel& mem);

struct InstructionDag {
  std::vector<std::int64_t> latency;
  std::vector<Module> module;
  // preds[i]: declared deps, the previous instruction on the same module, and
  // the most recent System (barrier) before i.
  std::vector<std::vector<int>> preds;
};

// Throws IsaError when a dependency is unknown or not earlier in the list.
InstructionDag build_dag(const std::vector<Instruction>& instrs,
                         const CoreConfig& core, const MemoryModel& mem);

// In-order list schedule per module; returns the makespan.
std::int64_t dag_latency(const InstructionDag& dag);

// Start/finish of every node under the same schedule.
struct Schedule {
  std::vector<std::int64_t> start;
  std::vector<std::int64_t> finish;
};
Schedule list_schedule(const InstructionDag& dag);

struct LutKey {
  int layer_id = 0;
  Method method = Method::Width;
  int tile_index = 0;

  auto operator<=>(const LutKey&) const = default;
};

class LatencyLUT {
 public:
  void set(const LutKey& key, std::int64_t cycles);
  bool contains(const LutKey& key) const { return entries_.count(key) != 0; }
  // Throws Error for a missing key.
  std::int64_t at(const LutKey& key) const;
  // Cycles of every tile of (layer, method) in tile order; empty if none.
  std::vector<std::int64_t> tiles(int layer_id, Method method) const;
  const std::map<LutKey, std::int64_t>& entries() const { return entries_; }

  // Columns: layer_id,method,tile_index,cycles
  std::string to_csv() const;
  static LatencyLUT from_csv(std::string_view text);

  bool operator==(const LatencyLUT&) const = default;

 private:
  std::map<LutKey, std::int64_t> entries_;
};

}  // namespace fvirt
