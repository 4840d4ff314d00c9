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

#include "fvirt/dynamic_compiler.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fvirt/error.hpp"

namespace fvirt {
namespace {

using json = nlohmann::ordered_json;

}  // namespace

Allocation allocate(const std::vector<std::int64_t>& lat, int num_cores) {
  if (lat.empty()) throw CompileError("allocate: no tiles");
  if (num_cores < 1) throw CompileError("allocate: need at least one core");
  const int n = static_cast<int>(lat.size());
  const int m = std::min(num_cores, n);
  std::vector<std::int64_t> prefix(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    if (lat[static_cast<std::size_t>(i)] < 0) throw CompileError("allocate: negative latency");
    prefix[static_cast<std::size_t>(i) + 1] = prefix[static_cast<std::size_t>(i)] + lat[static_cast<std::size_t>(i)];
  }
  auto sum = [&prefix](int a, int b) {
    return prefix[static_cast<std::size_t>(b)] - prefix[static_cast<std::size_t>(a)];
  };

  // best[i]: optimal makespan of the first i items using at most k blocks.
  std::vector<std::int64_t> best(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) best[static_cast<std::size_t>(i)] = sum(0, i);
  for (int k = 2; k <= m; ++k) {
    std::vector<std::int64_t> next(best);
    for (int i = 1; i <= n; ++i) {
      for (int j = 1; j < i; ++j) {
        next[static_cast<std::size_t>(i)] =
            std::min(next[static_cast<std::size_t>(i)],
                     std::max(best[static_cast<std::size_t>(j)], sum(j, i)));
      }
    }
    best = std::move(next);
  }
  const std::int64_t target = best[static_cast<std::size_t>(n)];

  // Fewest blocks needed for the suffix starting at i (max fill).
  std::vector<int> need(static_cast<std::size_t>(n) + 1, 0);
  for (int i = n - 1; i >= 0; --i) {
    int e = i;
    while (e < n && sum(i, e + 1) <= target) ++e;
    need[static_cast<std::size_t>(i)] = 1 + need[static_cast<std::size_t>(e)];
  }

  Allocation out;
  out.makespan = target;
  const int blocks = need[0];
  int begin = 0;
  for (int b = 0; b < blocks; ++b) {
    const int rest = blocks - b - 1;
    int end = n;
    if (rest > 0) {
      for (end = begin + 1; end < n; ++end) {
        if (sum(begin, end) > target) break;
        if (need[static_cast<std::size_t>(end)] <= rest && n - end >= rest) break;
      }
    }
    out.blocks.push_back({begin, end});
    begin = end;
  }
  return out;
}

TilingChoice choose_tiling(int layer_id, const LatencyLUT& lut, int num_cores,
                           std::optional<Method> forced) {
  const auto w = lut.tiles(layer_id, Method::Width);
  const auto o = lut.tiles(layer_id, Method::OutputChannel);
  if (w.empty() || o.empty()) {
    throw CompileError("latency table lacks tiles for layer " + std::to_string(layer_id));
  }
  TilingChoice c;
  Allocation wa = allocate(w, num_cores);
  Allocation oa = allocate(o, num_cores);
  c.width_makespan = wa.makespan;
  c.oc_makespan = oa.makespan;
  const Method pick = forced ? *forced
                             : (oa.makespan < wa.makespan ? Method::OutputChannel
                                                          : Method::Width);
  if (pick == Method::Untiled) throw CompileError("cannot force the untiled method");
  c.method = pick;
  c.allocation = pick == Method::Width ? std::move(wa) : std::move(oa);
  return c;
}

std::int64_t ddr_window_base(int user_id) {
  if (user_id < 0) throw CompileError("user ids are non-negative");
  return static_cast<std::int64_t>(user_id) << 30;
}

std::int64_t VirtualizedProgram::text_bytes() const {
  std::int64_t n = 0;
  for (const InstructionStream& s : streams) {
    n += static_cast<std::int64_t>(encode_stream(s.instructions).size());
  }
  return n;
}

std::string AllocationPlan::to_json() const {
  json layers_j = json::array();
  for (const LayerPlan& l : layers) {
    json blocks = json::array();
    for (const CoreBlock& b : l.blocks) {
      blocks.push_back(
          json{{"core", b.core_id}, {"tiles", b.tiles}, {"predicted_cycles", b.predicted_cycles}});
    }
    layers_j.push_back(json{{"layer", l.layer_id},
                            {"method", std::string(to_string(l.method))},
                            {"width_makespan", l.width_makespan},
                            {"oc_makespan", l.oc_makespan},
                            {"predicted_cycles", l.predicted_cycles},
                            {"blocks", blocks}});
  }
  return json{{"layers", layers_j}}.dump(2) + "\n";
}

std::string ContextSwitchReport::to_json() const {
  return json{{"t_recompile_s", t_recompile},
              {"t_transfer_s", t_transfer},
              {"t_context_s", t_context}}
             .dump(2) +
         "\n";
}

AllocationPlan plan_program(const StaticArtifact& a, const std::vector<int>& core_ids,
                            const DynamicOptions& options) {
  if (core_ids.empty()) throw CompileError("no cores allocated");
  if (std::set<int>(core_ids.begin(), core_ids.end()).size() != core_ids.size()) {
    throw CompileError("duplicate core id in allocation");
  }
  const int m = static_cast<int>(core_ids.size());
  AllocationPlan plan;
  for (const LayerDescriptor& l : a.model.layers) {
    LayerPlan lp;
    lp.layer_id = l.layer_id;
    for (int c : core_ids) lp.blocks.push_back({c, {}, 0});
    if (m == 1 && options.fast_path && !options.forced_method) {
      lp.method = Method::Untiled;
      lp.blocks[0].tiles = {0};
      lp.blocks[0].predicted_cycles = a.lut.at(LutKey{l.layer_id, Method::Untiled, 0});
      lp.width_makespan = allocate(a.lut.tiles(l.layer_id, Method::Width), 1).makespan;
      lp.oc_makespan = allocate(a.lut.tiles(l.layer_id, Method::OutputChannel), 1).makespan;
      lp.predicted_cycles = lp.blocks[0].predicted_cycles;
    } else {
      TilingChoice choice = choose_tiling(l.layer_id, a.lut, m, options.forced_method);
      lp.method = choice.method;
      lp.width_makespan = choice.width_makespan;
      lp.oc_makespan = choice.oc_makespan;
      lp.predicted_cycles = choice.allocation.makespan;
      for (std::size_t b = 0; b < choice.allocation.blocks.size(); ++b) {
        const Block& blk = choice.allocation.blocks[b];
        for (int t = blk.begin; t < blk.end; ++t) {
          lp.blocks[b].tiles.push_back(t);
          lp.blocks[b].predicted_cycles += a.lut.at(LutKey{l.layer_id, choice.method, t});
        }
      }
    }
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

VirtualizedProgram assemble(const StaticArtifact& a, int user_id,
                            const std::vector<int>& core_ids, const AllocationPlan& plan) {
  if (plan.layers.size() != a.model.layers.size()) {
    throw CompileError("plan does not cover every layer");
  }
  if (a.ddr.total_bytes > kDdrWindowBytes) {
    throw CompileError("model needs " + std::to_string(a.ddr.total_bytes) +
                       " DDR bytes, more than one user window");
  }
  VirtualizedProgram p;
  p.user_id = user_id;
  p.core_ids = core_ids;
  p.layer_count = static_cast<int>(a.model.layers.size());
  p.plan = plan;
  p.ddr_base = ddr_window_base(user_id);
  p.ddr_size = kDdrWindowBytes;

  for (std::size_t ci = 0; ci < core_ids.size(); ++ci) {
    InstructionStream s;
    s.core_id = core_ids[ci];
    auto& out = s.instructions;
    std::size_t total = 1;
    for (const LayerPlan& lp : plan.layers) {
      if (ci >= lp.blocks.size()) break;
      for (int t : lp.blocks[ci].tiles) {
        total += lp.method == Method::Untiled
                     ? a.untiled.at(static_cast<std::size_t>(lp.layer_id)).size()
                     : a.ifp(lp.layer_id, lp.method, t).instructions.size();
      }
      ++total;
    }
    out.reserve(total);
    HazardTracker tracker;
    int last_sync = -1;
    for (const LayerPlan& lp : plan.layers) {
      if (lp.blocks.size() != core_ids.size() || lp.blocks[ci].core_id != core_ids[ci]) {
        throw CompileError("plan blocks do not match the core set");
      }
      tracker.clear();
      std::array<int, kModuleCount> last{};
      last.fill(-1);
      for (int t : lp.blocks[ci].tiles) {
        const std::vector<Instruction>& src =
            lp.method == Method::Untiled ? a.untiled.at(static_cast<std::size_t>(lp.layer_id))
                                         : a.ifp(lp.layer_id, lp.method, t).instructions;
        const int offset = static_cast<int>(out.size());
        for (const Instruction& in : src) {
          Instruction x = in;
          x.instr_id = in.instr_id + offset;
          for (int& d : x.deps) d += offset;
          if (x.opcode == Opcode::Load || x.opcode == Opcode::Save) {
            std::get<TransferFields>(x.fields).ddr_addr += p.ddr_base;
          }
          std::vector<int> extra = tracker.add(x);
          if (!extra.empty()) {
            x.deps.insert(x.deps.end(), extra.begin(), extra.end());
            std::sort(x.deps.begin(), x.deps.end());
            x.deps.erase(std::unique(x.deps.begin(), x.deps.end()), x.deps.end());
          }
          last[static_cast<std::size_t>(module_of(x.opcode))] = x.instr_id;
          out.push_back(std::move(x));
        }
      }
      std::vector<int> deps;
      for (int id : last) {
        if (id >= 0) deps.push_back(id);
      }
      std::sort(deps.begin(), deps.end());
      last_sync = static_cast<int>(out.size());
      out.push_back(make_system(last_sync, std::move(deps), {1, lp.layer_id, 0}));
    }
    std::vector<int> fin_deps;
    if (last_sync >= 0) fin_deps.push_back(last_sync);
    out.push_back(make_system(static_cast<int>(out.size()), std::move(fin_deps),
                              {0, p.layer_count, 1}));
    p.streams.push_back(std::move(s));
  }
  return p;
}

DynamicResult dynamic_compile(const StaticArtifact& a, int user_id,
                              const std::vector<int>& core_ids,
                              const DynamicOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  DynamicResult r;
  AllocationPlan plan = plan_program(a, core_ids, options);
  r.program = assemble(a, user_id, core_ids, plan);
  const std::int64_t bytes = r.program.text_bytes();
  r.report.t_recompile =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.report.t_transfer = static_cast<double>(bytes) / options.link_bytes_per_second;
  r.report.t_context = r.report.t_recompile + r.report.t_transfer;
  return r;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_program(const VirtualizedProgram& p, const std::filesystem::path& dir,
                  const ContextSwitchReport* report) {
  std::filesystem::create_directories(dir);
  for (const InstructionStream& s : p.streams) {
    write_file(dir / ("core_" + std::to_string(s.core_id) + ".inst"),
               encode_stream(s.instructions));
  }
  json manifest{{"user_id", p.user_id},
                {"core_ids", p.core_ids},
                {"layer_count", p.layer_count},
                {"ddr_base", p.ddr_base},
                {"ddr_size", p.ddr_size}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_file(dir / "plan.json", p.plan.to_json());
  if (report) write_file(dir / "context_report.json", report->to_json());
}

VirtualizedProgram load_program(const std::filesystem::path& dir) {
  VirtualizedProgram p;
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
    p.user_id = m.at("user_id");
    p.core_ids = m.at("core_ids").get<std::vector<int>>();
    p.layer_count = m.at("layer_count");
    p.ddr_base = m.at("ddr_base");
    p.ddr_size = m.at("ddr_size");
  } catch (const json::exception& e) {
    throw Error("bad manifest.json: " + std::string(e.what()));
  }
  for (int c : p.core_ids) {
    InstructionStream s;
    s.core_id = c;
    s.instructions = decode_stream(read_file(dir / ("core_" + std::to_string(c) + ".inst")));
    p.streams.push_back(std::move(s));
  }
  return p;
}

}  // namespace fvirt
