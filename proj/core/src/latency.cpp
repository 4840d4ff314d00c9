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

#include "fvirt/latency.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "fvirt/error.hpp"

namespace fvirt {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t compute_cycles(bool depthwise, std::int64_t cin, std::int64_t cout,
                            std::int64_t width, std::int64_t kw, std::int64_t kh,
                            const CoreConfig& core) {
  const std::int64_t window = width * kw * kh;
  if (depthwise) return ceil_div(cout, core.ocp) * window;
  return ceil_div(cin, core.icp) * ceil_div(cout, core.ocp) * window;
}

}  // namespace

CoreConfig CoreConfig::small() { return CoreConfig{}; }

CoreConfig CoreConfig::scaled(int k) {
  if (k < 1) throw Error("core scale must be >= 1");
  CoreConfig c;
  c.pp = k;
  c.port_bits = 128 * k;
  c.bank_bytes = std::int64_t{64} * 1024 * k;
  return c;
}

void CoreConfig::validate() const {
  if (pp < 1 || icp < 1 || ocp < 1 || !(clock_hz > 0) || port_bits < 8 ||
      port_bits % 8 != 0 || bank_count < 4 || bank_count % 4 != 0 ||
      bank_bytes < kBankWordBytes || bank_bytes % kBankWordBytes != 0) {
    throw Error("invalid core configuration");
  }
}

void MemoryModel::validate() const {
  if (!(eff > 0.0) || eff > 1.0) throw Error("eff must lie in (0, 1]");
  if (ddr_port_bits < 8 || !(clock_hz > 0)) throw Error("invalid memory model");
}

std::int64_t parallelism(const CoreConfig& core) {
  return std::int64_t{2} * core.pp * core.icp * core.ocp;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Width:
      return "width";
    case Method::OutputChannel:
      return "oc";
    case Method::Untiled:
      return "untiled";
  }
  return "?";
}

std::optional<Method> method_from_string(std::string_view text) {
  for (Method m : {Method::Width, Method::OutputChannel, Method::Untiled}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

TileSpec full_tile(const LayerDescriptor& layer) {
  return TileSpec{Method::Width, 0, layer.width_out};
}

std::int64_t conv_instr_latency(const LayerDescriptor& layer, const TileSpec& tile,
                                const CoreConfig& core) {
  const bool oc = tile.dimension == Method::OutputChannel;
  const std::int64_t cout = oc ? tile.size : layer.channel_out;
  const std::int64_t width = oc ? layer.width_out : tile.size;
  return compute_cycles(layer.kind == LayerKind::DepthwiseConv, layer.channel_in,
                        cout, width, layer.kernel_w, layer.kernel_h, core);
}

std::int64_t pool_instr_latency(const LayerDescriptor& layer, const TileSpec& tile,
                                const CoreConfig& core) {
  const bool oc = tile.dimension == Method::OutputChannel;
  const std::int64_t channels = oc ? tile.size : layer.channel_out;
  const std::int64_t width = oc ? layer.width_out : tile.size;
  return ceil_div(channels, core.icp) * width * layer.kernel_w * layer.kernel_h;
}

std::int64_t transfer_latency(std::int64_t length_bytes, int port_bits, double eff) {
  if (length_bytes <= 0) return 0;
  const double q = static_cast<double>(length_bytes) / (port_bits / 8.0 * eff);
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, q)) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(q));
}

std::vector<std::int64_t> stream_latencies(const std::vector<Instruction>& instrs,
                                           const CoreConfig& core,
                                           const MemoryModel& mem) {
  std::vector<std::int64_t> out;
  out.reserve(instrs.size());
  const InitFields* conv_init = nullptr;
  const InitFields* pool_init = nullptr;
  for (const Instruction& in : instrs) {
    switch (in.opcode) {
      case Opcode::Load:
      case Opcode::Save:
        out.push_back(transfer_latency(in.transfer().length_bytes, core.port_bits,
                                       mem.eff));
        break;
      case Opcode::Convinit:
        conv_init = &in.init();
        out.push_back(1);
        break;
      case Opcode::Poolinit:
        pool_init = &in.init();
        out.push_back(1);
        break;
      case Opcode::Conv: {
        if (!conv_init) {
          throw IsaError("CONV " + std::to_string(in.instr_id) + " before CONVINIT");
        }
        const auto& f = in.compute();
        out.push_back(compute_cycles(conv_init->depthwise != 0, conv_init->channel_in,
                                     conv_init->channel_out, f.width_out,
                                     conv_init->kernel_w, conv_init->kernel_h, core));
        break;
      }
      case Opcode::Pool: {
        if (!pool_init) {
          throw IsaError("POOL " + std::to_string(in.instr_id) + " before POOLINIT");
        }
        const auto& f = in.compute();
        out.push_back(ceil_div(pool_init->channel_out, core.icp) * f.width_out *
                      pool_init->kernel_w * pool_init->kernel_h);
        break;
      }
      case Opcode::System:
        out.push_back(0);
        break;
    }
  }
  return out;
}

InstructionDag build_dag(const std::vector<Instruction>& instrs,
                         const CoreConfig& core, const MemoryModel& mem) {
  InstructionDag dag;
  dag.latency = stream_latencies(instrs, core, mem);
  dag.module.reserve(instrs.size());
  dag.preds.resize(instrs.size());
  std::map<int, int> index;
  std::array<int, kModuleCount> last{};
  last.fill(-1);
  int barrier = -1;
  for (std::size_t i = 0; i < instrs.size(); ++i) {
    const Instruction& in = instrs[i];
    const Module m = module_of(in.opcode);
    dag.module.push_back(m);
    auto& p = dag.preds[i];
    for (int d : in.deps) {
      auto it = index.find(d);
      if (it == index.end()) {
        throw IsaError("instruction " + std::to_string(in.instr_id) +
                       " depends on " + std::to_string(d) +
                       " which does not precede it");
      }
      p.push_back(it->second);
    }
    if (last[static_cast<std::size_t>(m)] >= 0) p.push_back(last[static_cast<std::size_t>(m)]);
    if (barrier >= 0) p.push_back(barrier);
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    last[static_cast<std::size_t>(m)] = static_cast<int>(i);
    if (in.opcode == Opcode::System) barrier = static_cast<int>(i);
    if (!index.emplace(in.instr_id, static_cast<int>(i)).second) {
      throw IsaError("duplicate instruction id " + std::to_string(in.instr_id));
    }
  }
  return dag;
}

Schedule list_schedule(const InstructionDag& dag) {
  const std::size_t n = dag.latency.size();
  Schedule s;
  s.start.assign(n, 0);
  s.finish.assign(n, 0);
  // Program order is a topological order: every predecessor index is smaller.
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t t = 0;
    for (int p : dag.preds[i]) {
      if (static_cast<std::size_t>(p) >= i) throw Error("dag is not in topological order");
      t = std::max(t, s.finish[static_cast<std::size_t>(p)]);
    }
    s.start[i] = t;
    s.finish[i] = t + dag.latency[i];
  }
  return s;
}

std::int64_t dag_latency(const InstructionDag& dag) {
  const Schedule s = list_schedule(dag);
  std::int64_t out = 0;
  for (std::int64_t f : s.finish) out = std::max(out, f);
  return out;
}

void LatencyLUT::set(const LutKey& key, std::int64_t cycles) {
  entries_[key] = cycles;
}

std::int64_t LatencyLUT::at(const LutKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw Error("latency table has no entry for layer " + std::to_string(key.layer_id) +
                " method " + std::string(to_string(key.method)) + " tile " +
                std::to_string(key.tile_index));
  }
  return it->second;
}

std::vector<std::int64_t> LatencyLUT::tiles(int layer_id, Method method) const {
  std::vector<std::int64_t> out;
  for (auto it = entries_.lower_bound(LutKey{layer_id, method, 0});
       it != entries_.end() && it->first.layer_id == layer_id &&
       it->first.method == method;
       ++it) {
    out.push_back(it->second);
  }
  return out;
}

std::string LatencyLUT::to_csv() const {
  std::ostringstream os;
  os << "layer_id,method,tile_index,cycles\n";
  for (const auto& [k, v] : entries_) {
    os << k.layer_id << ',' << to_string(k.method) << ',' << k.tile_index << ','
       << v << '\n';
  }
  return os.str();
}

LatencyLUT LatencyLUT::from_csv(std::string_view text) {
  LatencyLUT lut;
  std::istringstream is{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string layer, method, tile, cycles;
    if (!std::getline(ls, layer, ',') || !std::getline(ls, method, ',') ||
        !std::getline(ls, tile, ',') || !std::getline(ls, cycles)) {
      throw Error("malformed latency table row '" + line + "'");
    }
    auto m = method_from_string(method);
    if (!m) throw Error("unknown tiling method '" + method + "'");
    lut.set(LutKey{std::stoi(layer), *m, std::stoi(tile)}, std::stoll(cycles));
  }
  return lut;
}

}  // namespace fvirt
