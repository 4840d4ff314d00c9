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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fvirt/dynamic_compiler.hpp"
#include "fvirt/isa.hpp"
#include "fvirt/latency.hpp"

namespace fvirt {

// Cycles between the last sync_local of a layer and its sync_global.
inline constexpr std::int64_t kBarrierEpsilon = 1;

struct PoolConfig {
  int cores = 16;
  CoreConfig core;
  int ddr_banks = 4;
  int ddr_port_bits = 512;
  // Core -> DDR bank. Empty means core k uses bank k * ddr_banks / cores.
  std::vector<int> core_to_ddr;
  MemoryModel mem;
  // When false, banks may be oversubscribed and share bandwidth.
  bool enforce_port_capacity = true;

  int bank_of(int core_id) const;
  // Throws SimulationError on a bad mapping or an oversubscribed bank.
  void validate() const;
};

enum class EventKind { Start, End, SyncLocal, SyncGlobal, CtxSwitch };

std::string_view to_string(EventKind kind);

struct TraceEvent {
  std::int64_t cycle = 0;
  int user = 0;
  int core = -1;  // -1 for session-wide events
  Module module = Module::Sys;
  int instr = -1;
  EventKind kind = EventKind::Start;
  int layer = 0;  // barrier segment of the instruction
  int inference = 0;
  int epoch = 0;
  std::int64_t ddr_lo = 0;  // DDR span of a transfer start
  std::int64_t ddr_hi = 0;
  std::int64_t aux = 0;  // stall cycles of a ctx_switch

  bool operator==(const TraceEvent&) const = default;
};

struct LayerRecord {
  int user = 0;
  int inference = 0;
  int layer = 0;
  int epoch = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // sync_global cycle
};

// One program generation of a session.
struct EpochInfo {
  int user = 0;
  int epoch = 0;
  std::vector<int> cores;
  std::int64_t ddr_lo = 0;
  std::int64_t ddr_hi = 0;
  std::int64_t start_cycle = 0;
  int resume_layer = 0;
  std::shared_ptr<const VirtualizedProgram> program;
};

enum class SwitchMode { TaskLevel, LayerLevel };

std::string_view to_string(SwitchMode mode);

struct SwitchRecord {
  int user = 0;
  SwitchMode mode = SwitchMode::TaskLevel;
  std::int64_t switch_cycle = 0;  // old program released its cores
  std::int64_t start_cycle = 0;   // new program started
  std::int64_t stall_cycles = 0;
  int resume_layer = 0;
  int inference = 0;
  ContextSwitchReport report;
};

struct SimTrace {
  std::vector<TraceEvent> events;
  std::vector<LayerRecord> layers;
  std::vector<EpochInfo> epochs;
  std::vector<SwitchRecord> switches;
  std::map<int, std::vector<std::int64_t>> inference_end;  // per user
  std::map<int, double> per_task_cycles;  // mean cycles per inference
  std::map<int, double> throughput_fps;   // inferences per second
  double clock_hz = 300e6;

  // cycle,user,core,module,instr,kind
  std::string to_csv() const;
  std::string events_of_user_csv(int user) const;
  std::string summary_json() const;
};

struct ReconfigTrigger {
  std::optional<std::int64_t> cycle;
  // After sync_global of (user, layer) in any inference.
  int user = -1;
  int layer = -1;
};

struct Reconfiguration {
  ReconfigTrigger trigger;
  SwitchMode mode = SwitchMode::TaskLevel;
  std::map<int, std::vector<int>> allocations;
  // Fixed context-switch time; the measured one is used when absent.
  std::optional<double> context_ms;
};

// Produces the program of `user` for a new core set.
using Recompiler =
    std::function<DynamicResult(int user, const std::vector<int>& core_ids)>;

struct SimOptions {
  int horizon = 1;  // inferences per session
  std::vector<Reconfiguration> reconfigurations;
  Recompiler recompiler;
};

// Runs every session until it completes `horizon` inferences. Throws
// SimulationError for overlapping core sets or DDR windows, invalid pools,
// or a deadlock (the message lists what each core waits for).
SimTrace simulate(const PoolConfig& pool, const std::vector<VirtualizedProgram>& sessions,
                  const SimOptions& options = {});

struct VerificationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Barrier soundness and epsilon, core ownership, DDR windows, dependency
// order and module exclusivity.
VerificationReport verify_trace(const SimTrace& trace);

}  // namespace fvirt
