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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fvirt/dynamic_compiler.hpp"
#include "fvirt/simulator.hpp"
#include "fvirt/static_compiler.hpp"

namespace fvirt {

// Pool JSON: {"cores", "ddr_banks", "ddr_port_bits", "core_to_ddr",
// "enforce_port_capacity", "eff", "core": {"pp", "icp", "ocp", "clock_hz",
// "port_bits", "bank_count", "bank_bytes"}}. Missing keys keep defaults.
PoolConfig pool_from_json(std::string_view text);
std::string pool_to_json(const PoolConfig& pool);

// Compiles each model once per (model, core, max_tiles).
class ArtifactCache {
 public:
  const StaticArtifact& get(const std::string& model_spec, const CoreConfig& core,
                            int max_tiles, const MemoryModel& mem);

 private:
  std::map<std::string, std::unique_ptr<StaticArtifact>> cache_;
};

// ---------------------------------------------------------------------------
// Scenarios

struct SessionSpec {
  int user = 0;
  std::string model;  // builtin:NAME or a JSON path
  std::vector<int> cores;
};

struct Scenario {
  PoolConfig pool;
  int max_tiles = 16;
  int horizon = 1;
  std::vector<SessionSpec> sessions;
  std::vector<Reconfiguration> reconfigurations;
};

// {"pool": {...}, "max_tiles", "horizon", "sessions": [{"user", "model",
// "cores"}], "reconfigurations": [{"trigger": {"cycle"} | {"user", "layer"},
// "mode": "task"|"layer", "allocations": {"<user>": [cores]},
// "context_ms"}]}
Scenario parse_scenario(std::string_view text);

struct ScenarioResult {
  std::vector<VirtualizedProgram> programs;
  SimTrace trace;
  VerificationReport verification;
};

ScenarioResult run_scenario(const Scenario& scenario, ArtifactCache& cache);

// ---------------------------------------------------------------------------
// Experiments

enum class ExperimentKind { SingleTask, MultiTask, Isolation, ContextSwitch };

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> experiment_kind_from_string(std::string_view text);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::SingleTask;
  std::vector<std::string> models{"builtin:ResNet50"};
  PoolConfig pool;
  int max_tiles = 16;
  int horizon = 2;
  std::vector<int> core_counts{1, 2, 4, 8, 16};
  std::vector<int> task_counts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::vector<int> shares{16, 12, 8, 4};  // cores of the observed user
  int mixes_per_share = 8;
  std::uint64_t seed = 1;

  // Throws Error for sweep values outside the pool.
  void validate() const;
};

struct SingleTaskRow {
  std::string model;
  int cores = 0;
  std::int64_t parallelism = 0;
  // Sum over layers of the planned per-layer makespan.
  std::int64_t width_makespan = 0;
  std::int64_t oc_makespan = 0;
  std::int64_t opt_makespan = 0;
  double width_fps = 0.0;
  double oc_fps = 0.0;
  double opt_fps = 0.0;
  double single_core_fps = 0.0;
};

struct SingleTaskLayerRow {
  std::string model;
  int cores = 0;
  int layer_id = 0;
  std::int64_t width_makespan = 0;
  std::int64_t oc_makespan = 0;
  Method opt_method = Method::Width;
  std::int64_t opt_makespan = 0;
};

struct MultiTaskRow {
  std::string model;  // "+"-joined when mixed
  int tasks = 0;
  double virtualized_fps = 0.0;
  double static_multi_fps = 0.0;
  double static_single_fps = 0.0;
};

struct IsolationRow {
  std::string model;
  int share_cores = 0;
  bool shared_banks = false;
  int mixes = 0;
  double solo_fps = 0.0;
  double min_deviation = 0.0;  // relative fps loss against solo
  double max_deviation = 0.0;
  bool traces_identical = false;  // every mix matched the solo trace
};

struct ContextSwitchRow {
  std::string model;
  int cores = 0;
  std::int64_t text_bytes = 0;
  ContextSwitchReport report;  // seconds
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::SingleTask;
  std::vector<SingleTaskRow> single;
  std::vector<SingleTaskLayerRow> single_layers;
  std::vector<MultiTaskRow> multi;
  std::vector<IsolationRow> isolation;
  std::vector<ContextSwitchRow> context;

  // Main table for the kind.
  std::string to_csv() const;
  // Per-layer table (SingleTask only, empty otherwise).
  std::string layers_csv() const;
};

ExperimentReport run_experiment(const ExperimentSpec& spec, ArtifactCache& cache);

// Core ids [first, first + count).
std::vector<int> core_range(int first, int count);

// Even split of `total` cores over `tasks`, remainder to the lowest tasks.
std::vector<int> even_shares(int total, int tasks);

}  // namespace fvirt
