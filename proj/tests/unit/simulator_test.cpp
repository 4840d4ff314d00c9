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

#include <gtest/gtest.h>

#include <cmath>

#include "fvirt/error.hpp"
#include "fvirt/simulator.hpp"
#include "hand_programs.hpp"

using namespace fvirt;
using fvirt::testing::load_program_of;
using fvirt::testing::uniform_program;
using fvirt::testing::unit_pool;

namespace {

Recompiler uniform_recompiler(int layers, std::int64_t cycles) {
  return [layers, cycles](int user, const std::vector<int>& cores) {
    DynamicResult r;
    r.program = uniform_program(user, cores, layers, cycles);
    r.report.t_recompile = 1e-3;
    r.report.t_transfer = 2e-5;
    r.report.t_context = r.report.t_recompile + r.report.t_transfer;
    return r;
  };
}

int count_layer(const SimTrace& t, int user, int inference, int layer) {
  int n = 0;
  for (const LayerRecord& l : t.layers) {
    n += l.user == user && l.inference == inference && l.layer == layer;
  }
  return n;
}

}  // namespace

TEST(Simulator, DisjointSessionsMatchSoloRuns) {
  const PoolConfig pool = unit_pool();
  const auto a = uniform_program(0, {0}, 1, 1000);
  const auto b = uniform_program(1, {4}, 1, 1000);
  const SimTrace both = simulate(pool, {a, b});
  // barrier epsilon after the 1000-cycle critical path
  EXPECT_EQ(both.inference_end.at(0), std::vector<std::int64_t>{1000 + kBarrierEpsilon});
  EXPECT_EQ(both.inference_end.at(1), std::vector<std::int64_t>{1000 + kBarrierEpsilon});
  EXPECT_EQ(both.events_of_user_csv(0), simulate(pool, {a}).events_of_user_csv(0));
  EXPECT_EQ(both.events_of_user_csv(1), simulate(pool, {b}).events_of_user_csv(1));
  EXPECT_TRUE(verify_trace(both).ok());
}

TEST(Simulator, BarrierWaitsForSlowestCore) {
  const auto p = load_program_of(0, {0, 1}, {{500, 700}, {10, 10}});
  const SimTrace t = simulate(unit_pool(), {p});
  ASSERT_GE(t.layers.size(), 2u);
  EXPECT_EQ(t.layers[0].end, 701);
  EXPECT_EQ(t.layers[0].end - t.layers[0].start, 701);
  // layer 1 cannot start before the release
  for (const TraceEvent& e : t.events) {
    if (e.kind == EventKind::Start && e.layer == 1) EXPECT_GE(e.cycle, 701);
  }
  EXPECT_TRUE(verify_trace(t).ok());
}

TEST(Simulator, UnderCapacityBankRunsAtFullRate) {
  std::vector<VirtualizedProgram> s;
  for (int u = 0; u < 4; ++u) s.push_back(uniform_program(u, {u}, 1, 1000));
  const PoolConfig pool = unit_pool();
  ASSERT_EQ(pool.bank_of(0), pool.bank_of(3));
  const SimTrace t = simulate(pool, s);
  for (int u = 0; u < 4; ++u) {
    EXPECT_EQ(t.inference_end.at(u).front(), 1000 + kBarrierEpsilon);
  }
}

TEST(Simulator, OversubscribedBankSharesBandwidth) {
  PoolConfig pool = unit_pool();
  pool.ddr_port_bits = 256;
  EXPECT_THROW(pool.validate(), SimulationError);
  pool.enforce_port_capacity = false;
  std::vector<VirtualizedProgram> s;
  for (int u = 0; u < 4; ++u) s.push_back(uniform_program(u, {u}, 1, 1000));
  const SimTrace t = simulate(pool, s);
  for (int u = 0; u < 4; ++u) {
    EXPECT_EQ(t.inference_end.at(u).front(), 2000 + kBarrierEpsilon);
  }
}

TEST(Simulator, HorizonRepeatsInferences) {
  SimOptions opt;
  opt.horizon = 3;
  const SimTrace t = simulate(unit_pool(), {uniform_program(0, {0, 1}, 2, 100)}, opt);
  EXPECT_EQ(t.inference_end.at(0), (std::vector<std::int64_t>{202, 404, 606}));
  EXPECT_DOUBLE_EQ(t.per_task_cycles.at(0), 202.0);
  EXPECT_DOUBLE_EQ(t.throughput_fps.at(0), 3 * 300e6 / 606);
  EXPECT_TRUE(verify_trace(t).ok());
}

TEST(Simulator, RejectsOverlappingCoreSets) {
  EXPECT_THROW(simulate(unit_pool(), {uniform_program(0, {0, 1}, 1, 10),
                                      uniform_program(1, {1, 2}, 1, 10)}),
               SimulationError);
}

TEST(Simulator, ReportsDeadlock) {
  VirtualizedProgram p = uniform_program(0, {0}, 1, 10);
  p.streams[0].instructions[0].deps = {2};
  try {
    simulate(unit_pool(), {p});
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("deadlock"), std::string::npos);
  }
}

TEST(Reconfiguration, LayerLevelResumesAtNextLayer) {
  SimOptions opt;
  opt.recompiler = uniform_recompiler(53, 100);
  Reconfiguration rc;
  rc.trigger.user = 0;
  rc.trigger.layer = 12;
  rc.mode = SwitchMode::LayerLevel;
  rc.allocations[0] = {0, 1, 2, 3, 4, 5, 6, 7};
  opt.reconfigurations.push_back(rc);
  const SimTrace t = simulate(unit_pool(), {uniform_program(0, {0, 1, 2, 3}, 53, 100)}, opt);
  ASSERT_EQ(t.switches.size(), 1u);
  EXPECT_EQ(t.switches[0].resume_layer, 13);
  ASSERT_EQ(t.epochs.size(), 2u);
  EXPECT_EQ(t.epochs[1].resume_layer, 13);
  EXPECT_EQ(t.epochs[1].cores.size(), 8u);
  for (int l = 0; l < 53; ++l) EXPECT_EQ(count_layer(t, 0, 0, l), 1) << l;
  for (const TraceEvent& e : t.events) {
    if (e.epoch == 1 && e.kind == EventKind::Start) EXPECT_GE(e.layer, 13);
  }
  EXPECT_TRUE(verify_trace(t).ok());
}

TEST(Reconfiguration, TaskLevelWaitsForInferenceEnd) {
  SimOptions opt;
  opt.horizon = 2;
  opt.recompiler = uniform_recompiler(4, 100);
  Reconfiguration rc;
  rc.trigger.cycle = 150;
  rc.mode = SwitchMode::TaskLevel;
  rc.allocations[0] = {2, 3};
  opt.reconfigurations.push_back(rc);
  const SimTrace t = simulate(unit_pool(), {uniform_program(0, {0, 1}, 4, 100)}, opt);
  ASSERT_EQ(t.switches.size(), 1u);
  EXPECT_GE(t.switches[0].switch_cycle, t.inference_end.at(0).front());
  EXPECT_EQ(t.switches[0].resume_layer, 0);
  EXPECT_TRUE(verify_trace(t).ok());
}

TEST(Reconfiguration, StallIsContextCostInCycles) {
  SimOptions opt;
  opt.recompiler = uniform_recompiler(4, 100);
  Reconfiguration rc;
  rc.trigger.user = 0;
  rc.trigger.layer = 1;
  rc.mode = SwitchMode::LayerLevel;
  rc.allocations[0] = {4};
  opt.reconfigurations.push_back(rc);
  SimTrace t = simulate(unit_pool(), {uniform_program(0, {0}, 4, 100)}, opt);
  ASSERT_EQ(t.switches.size(), 1u);
  const SwitchRecord& s = t.switches[0];
  EXPECT_EQ(s.stall_cycles,
            static_cast<std::int64_t>(std::ceil(s.report.t_context * 300e6)));
  EXPECT_EQ(s.stall_cycles, 306000);
  EXPECT_EQ(s.start_cycle, s.switch_cycle + s.stall_cycles);

  opt.reconfigurations[0].context_ms = 1.0;
  t = simulate(unit_pool(), {uniform_program(0, {0}, 4, 100)}, opt);
  EXPECT_EQ(t.switches[0].stall_cycles, 300000);
}

TEST(Reconfiguration, RejectsConflictingTarget) {
  SimOptions opt;
  opt.recompiler = uniform_recompiler(2, 100);
  Reconfiguration rc;
  rc.trigger.cycle = 10;
  rc.allocations[0] = {1};
  opt.reconfigurations.push_back(rc);
  EXPECT_THROW(simulate(unit_pool(), {uniform_program(0, {0}, 2, 100),
                                      uniform_program(1, {1}, 2, 100)},
                        opt),
               SimulationError);
}

TEST(VerifyTrace, DetectsEarlyLayerStart) {
  SimTrace t = simulate(unit_pool(), {load_program_of(0, {0, 1}, {{500, 700}, {10, 10}})});
  ASSERT_TRUE(verify_trace(t).ok());
  int victim = -1;
  for (TraceEvent& e : t.events) {
    if (e.kind == EventKind::Start && e.layer == 1 && e.module == Module::Load) {
      e.cycle = 600;
      victim = e.instr;
      break;
    }
  }
  ASSERT_GE(victim, 0);
  std::stable_sort(t.events.begin(), t.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.cycle < b.cycle; });
  const VerificationReport r = verify_trace(t);
  ASSERT_FALSE(r.ok());
  bool named = false;
  for (const std::string& v : r.violations) {
    named |= v.find("instr " + std::to_string(victim)) != std::string::npos;
  }
  EXPECT_TRUE(named) << r.violations.front();
}

TEST(VerifyTrace, DetectsLateGlobalSync) {
  SimTrace t = simulate(unit_pool(), {uniform_program(0, {0, 1}, 2, 100)});
  for (TraceEvent& e : t.events) {
    if (e.kind == EventKind::SyncGlobal) {
      e.cycle += 5;
      break;
    }
  }
  std::stable_sort(t.events.begin(), t.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) { return a.cycle < b.cycle; });
  EXPECT_FALSE(verify_trace(t).ok());
}

TEST(Reconfiguration, ZeroStallTaskSwitchStartsImmediately) {
  SimOptions opt;
  opt.horizon = 2;
  opt.recompiler = uniform_recompiler(2, 100);
  Reconfiguration rc;
  rc.trigger.cycle = 50;
  rc.mode = SwitchMode::TaskLevel;
  rc.allocations[0] = {0, 1};
  rc.context_ms = 0.0;
  opt.reconfigurations.push_back(rc);
  const SimTrace t = simulate(unit_pool(), {uniform_program(0, {0}, 2, 100)}, opt);
  ASSERT_EQ(t.switches.size(), 1u);
  EXPECT_EQ(t.switches[0].start_cycle, t.switches[0].switch_cycle);
  EXPECT_EQ(t.inference_end.at(0).size(), 2u);
  EXPECT_TRUE(verify_trace(t).ok());
}
