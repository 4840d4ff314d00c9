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

#include "fvirt/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fvirt/error.hpp"

namespace fvirt {
namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed ") + what + ": " + e.what());
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

PoolConfig pool_from(const json& j) {
  PoolConfig p;
  read_opt(j, "cores", p.cores);
  read_opt(j, "ddr_banks", p.ddr_banks);
  read_opt(j, "ddr_port_bits", p.ddr_port_bits);
  read_opt(j, "core_to_ddr", p.core_to_ddr);
  read_opt(j, "enforce_port_capacity", p.enforce_port_capacity);
  read_opt(j, "eff", p.mem.eff);
  if (j.contains("core")) {
    const json& c = j.at("core");
    read_opt(c, "pp", p.core.pp);
    read_opt(c, "icp", p.core.icp);
    read_opt(c, "ocp", p.core.ocp);
    read_opt(c, "clock_hz", p.core.clock_hz);
    read_opt(c, "port_bits", p.core.port_bits);
    read_opt(c, "bank_count", p.core.bank_count);
    read_opt(c, "bank_bytes", p.core.bank_bytes);
  }
  p.mem.clock_hz = p.core.clock_hz;
  p.mem.ddr_port_bits = p.ddr_port_bits;
  p.validate();
  return p;
}

// One big core with the whole pool's parallelism and DDR bandwidth.
PoolConfig fused_pool(const PoolConfig& base, int k, int ddr_bits) {
  PoolConfig p;
  p.cores = 1;
  p.ddr_banks = 1;
  p.core = CoreConfig::scaled(k);
  p.core.clock_hz = base.core.clock_hz;
  p.ddr_port_bits = ddr_bits;
  p.mem = base.mem;
  p.mem.ddr_port_bits = ddr_bits;
  return p;
}

double solo_fps(const PoolConfig& pool, const VirtualizedProgram& program, int horizon) {
  SimOptions opt;
  opt.horizon = horizon;
  SimTrace tr = simulate(pool, {program}, opt);
  return tr.throughput_fps.at(program.user_id);
}

std::int64_t total_makespan(const AllocationPlan& plan) {
  std::int64_t s = 0;
  for (const LayerPlan& l : plan.layers) s += l.predicted_cycles;
  return s;
}

std::string model_label(const std::string& spec) {
  const std::string prefix = "builtin:";
  return spec.rfind(prefix, 0) == 0 ? spec.substr(prefix.size()) : spec;
}

}  // namespace

PoolConfig pool_from_json(std::string_view text) {
  return pool_from(parse_json(text, "pool"));
}

std::string pool_to_json(const PoolConfig& p) {
  json j{{"cores", p.cores},
         {"ddr_banks", p.ddr_banks},
         {"ddr_port_bits", p.ddr_port_bits},
         {"core_to_ddr", p.core_to_ddr},
         {"enforce_port_capacity", p.enforce_port_capacity},
         {"eff", p.mem.eff},
         {"core", json{{"pp", p.core.pp},
                       {"icp", p.core.icp},
                       {"ocp", p.core.ocp},
                       {"clock_hz", p.core.clock_hz},
                       {"port_bits", p.core.port_bits},
                       {"bank_count", p.core.bank_count},
                       {"bank_bytes", p.core.bank_bytes}}}};
  return j.dump(2) + "\n";
}

const StaticArtifact& ArtifactCache::get(const std::string& model_spec, const CoreConfig& core,
                                         int max_tiles, const MemoryModel& mem) {
  std::ostringstream key;
  key << model_spec << '|' << core.pp << ',' << core.icp << ',' << core.ocp << ','
      << core.clock_hz << ',' << core.port_bits << ',' << core.bank_count << ','
      << core.bank_bytes << '|' << max_tiles << '|' << mem.eff << ',' << mem.ddr_port_bits
      << ',' << mem.clock_hz;
  auto& slot = cache_[key.str()];
  if (!slot) {
    slot = std::make_unique<StaticArtifact>(
        compile_static(load_model(model_spec), core, max_tiles, mem));
  }
  return *slot;
}

// ---------------------------------------------------------------------------

Scenario parse_scenario(std::string_view text) {
  const json j = parse_json(text, "scenario");
  Scenario s;
  try {
    if (j.contains("pool")) s.pool = pool_from(j.at("pool"));
    read_opt(j, "max_tiles", s.max_tiles);
    read_opt(j, "horizon", s.horizon);
    for (const json& e : j.at("sessions")) {
      SessionSpec ss;
      ss.user = e.at("user").get<int>();
      ss.model = e.at("model").get<std::string>();
      ss.cores = e.at("cores").get<std::vector<int>>();
      s.sessions.push_back(std::move(ss));
    }
    if (j.contains("reconfigurations")) {
      for (const json& e : j.at("reconfigurations")) {
        Reconfiguration r;
        const json& t = e.at("trigger");
        if (t.contains("cycle")) r.trigger.cycle = t.at("cycle").get<std::int64_t>();
        read_opt(t, "user", r.trigger.user);
        read_opt(t, "layer", r.trigger.layer);
        if (!r.trigger.cycle && (r.trigger.user < 0 || r.trigger.layer < 0)) {
          throw Error("trigger needs a cycle or a user and layer");
        }
        const std::string mode = e.value("mode", std::string("task"));
        if (mode == "task") {
          r.mode = SwitchMode::TaskLevel;
        } else if (mode == "layer") {
          r.mode = SwitchMode::LayerLevel;
        } else {
          throw Error("unknown switch mode '" + mode + "'");
        }
        for (const auto& [user, cores] : e.at("allocations").items()) {
          r.allocations[std::stoi(user)] = cores.get<std::vector<int>>();
        }
        if (e.contains("context_ms")) r.context_ms = e.at("context_ms").get<double>();
        s.reconfigurations.push_back(std::move(r));
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed scenario: ") + e.what());
  }
  if (s.sessions.empty()) throw Error("scenario has no sessions");
  if (s.max_tiles < 1 || s.horizon < 1) throw Error("max_tiles and horizon must be >= 1");
  return s;
}

ScenarioResult run_scenario(const Scenario& s, ArtifactCache& cache) {
  ScenarioResult res;
  std::map<int, const StaticArtifact*> arts;
  for (const SessionSpec& ss : s.sessions) {
    const StaticArtifact& a = cache.get(ss.model, s.pool.core, s.max_tiles, s.pool.mem);
    arts[ss.user] = &a;
    res.programs.push_back(dynamic_compile(a, ss.user, ss.cores).program);
  }
  SimOptions opt;
  opt.horizon = s.horizon;
  opt.reconfigurations = s.reconfigurations;
  opt.recompiler = [&arts](int user, const std::vector<int>& cores) {
    auto it = arts.find(user);
    if (it == arts.end()) throw SimulationError("no session for user " + std::to_string(user));
    return dynamic_compile(*it->second, user, cores);
  };
  res.trace = simulate(s.pool, res.programs, opt);
  res.verification = verify_trace(res.trace);
  return res;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SingleTask:
      return "single";
    case ExperimentKind::MultiTask:
      return "multi";
    case ExperimentKind::Isolation:
      return "isolation";
    case ExperimentKind::ContextSwitch:
      return "context";
  }
  return "?";
}

std::optional<ExperimentKind> experiment_kind_from_string(std::string_view text) {
  for (ExperimentKind k : {ExperimentKind::SingleTask, ExperimentKind::MultiTask,
                           ExperimentKind::Isolation, ExperimentKind::ContextSwitch}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

void ExperimentSpec::validate() const {
  pool.validate();
  if (models.empty()) throw Error("experiment needs at least one model");
  if (max_tiles < 1 || horizon < 1) throw Error("max_tiles and horizon must be >= 1");
  auto check = [this](const std::vector<int>& v, const char* what) {
    for (int x : v) {
      if (x < 1 || x > pool.cores) {
        throw Error(std::string(what) + " value " + std::to_string(x) + " outside 1.." +
                    std::to_string(pool.cores));
      }
    }
  };
  check(core_counts, "core count");
  check(task_counts, "task count");
  check(shares, "share");
  if (mixes_per_share < 1) throw Error("mixes_per_share must be >= 1");
}

std::vector<int> core_range(int first, int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), first);
  return v;
}

std::vector<int> even_shares(int total, int tasks) {
  if (tasks < 1 || tasks > total) throw Error("cannot split cores over that many tasks");
  std::vector<int> v(static_cast<std::size_t>(tasks), total / tasks);
  for (int i = 0; i < total % tasks; ++i) ++v[static_cast<std::size_t>(i)];
  return v;
}

namespace {

void run_single(const ExperimentSpec& spec, ArtifactCache& cache, ExperimentReport& rep) {
  for (const std::string& m : spec.models) {
    const StaticArtifact& a = cache.get(m, spec.pool.core, spec.max_tiles, spec.pool.mem);
    for (int k : spec.core_counts) {
      const std::vector<int> cores = core_range(0, k);
      DynamicOptions w_opt;
      w_opt.forced_method = Method::Width;
      w_opt.fast_path = false;
      DynamicOptions oc_opt = w_opt;
      oc_opt.forced_method = Method::OutputChannel;
      const AllocationPlan w_plan = plan_program(a, cores, w_opt);
      const AllocationPlan oc_plan = plan_program(a, cores, oc_opt);
      const AllocationPlan opt_plan = plan_program(a, cores, {});

      SingleTaskRow row;
      row.model = model_label(m);
      row.cores = k;
      row.parallelism = parallelism(spec.pool.core) * k;
      row.width_makespan = total_makespan(w_plan);
      row.oc_makespan = total_makespan(oc_plan);
      row.opt_makespan = total_makespan(opt_plan);
      row.width_fps = solo_fps(spec.pool, assemble(a, 0, cores, w_plan), spec.horizon);
      row.oc_fps = solo_fps(spec.pool, assemble(a, 0, cores, oc_plan), spec.horizon);
      row.opt_fps = solo_fps(spec.pool, assemble(a, 0, cores, opt_plan), spec.horizon);

      const PoolConfig big = fused_pool(spec.pool, k, spec.pool.core.port_bits * k);
      const StaticArtifact& b = cache.get(m, big.core, 1, big.mem);
      row.single_core_fps = solo_fps(big, dynamic_compile(b, 0, {0}).program, spec.horizon);
      rep.single.push_back(row);

      for (const LayerPlan& l : opt_plan.layers) {
        rep.single_layers.push_back({row.model, k, l.layer_id, l.width_makespan,
                                     l.oc_makespan, l.method, l.predicted_cycles});
      }
    }
  }
}

void run_multi(const ExperimentSpec& spec, ArtifactCache& cache, ExperimentReport& rep) {
  const PoolConfig& pool = spec.pool;
  std::string label;
  for (const std::string& m : spec.models) {
    label += (label.empty() ? "" : "+") + model_label(m);
  }
  auto model_of = [&spec](int t) -> const std::string& {
    return spec.models[static_cast<std::size_t>(t) % spec.models.size()];
  };

  // Time-division baseline: one core with the whole pool's resources,
  // serving one inference per task in turn.
  const PoolConfig big = fused_pool(pool, pool.cores, pool.ddr_port_bits * pool.ddr_banks);
  std::map<std::string, double> big_fps;
  for (const std::string& m : spec.models) {
    if (big_fps.count(m)) continue;
    const StaticArtifact& b = cache.get(m, big.core, 1, big.mem);
    big_fps[m] = solo_fps(big, dynamic_compile(b, 0, {0}).program, spec.horizon);
  }

  SimOptions opt;
  opt.horizon = spec.horizon;
  for (int tasks : spec.task_counts) {
    MultiTaskRow row;
    row.model = label;
    row.tasks = tasks;

    std::vector<VirtualizedProgram> virt;
    std::vector<VirtualizedProgram> multi;
    const std::vector<int> shares = even_shares(pool.cores, tasks);
    int next = 0;
    double round_seconds = 0.0;
    for (int t = 0; t < tasks; ++t) {
      const StaticArtifact& a = cache.get(model_of(t), pool.core, spec.max_tiles, pool.mem);
      virt.push_back(dynamic_compile(a, t, core_range(next, shares[static_cast<std::size_t>(t)])).program);
      next += shares[static_cast<std::size_t>(t)];
      multi.push_back(dynamic_compile(a, t, {t}).program);
      round_seconds += 1.0 / big_fps.at(model_of(t));
    }
    const SimTrace vt = simulate(pool, virt, opt);
    const SimTrace mt = simulate(pool, multi, opt);
    for (const auto& [u, f] : vt.throughput_fps) row.virtualized_fps += f;
    for (const auto& [u, f] : mt.throughput_fps) row.static_multi_fps += f;
    row.static_single_fps = tasks / round_seconds;
    rep.multi.push_back(row);
  }
}

void run_isolation(const ExperimentSpec& spec, ArtifactCache& cache, ExperimentReport& rep) {
  const std::string& observed = spec.models.front();
  const std::vector<std::string> co_models = [&spec] {
    std::vector<std::string> v;
    for (BuiltinModel b : all_builtin_models()) v.push_back("builtin:" + std::string(to_string(b)));
    if (spec.models.size() > 1) v.assign(spec.models.begin() + 1, spec.models.end());
    return v;
  }();
  std::mt19937_64 rng(spec.seed);
  SimOptions opt;
  opt.horizon = spec.horizon;

  for (bool interleaved : {false, true}) {
    PoolConfig pool = spec.pool;
    if (interleaved) {
      pool.core_to_ddr.resize(static_cast<std::size_t>(pool.cores));
      for (int c = 0; c < pool.cores; ++c) {
        pool.core_to_ddr[static_cast<std::size_t>(c)] = c % pool.ddr_banks;
      }
    }
    pool.validate();
    for (int share : spec.shares) {
      const std::vector<int> mine = core_range(0, share);
      const StaticArtifact& a = cache.get(observed, pool.core, spec.max_tiles, pool.mem);
      const VirtualizedProgram prog = dynamic_compile(a, 0, mine).program;
      const SimTrace solo = simulate(pool, {prog}, opt);
      const std::string solo_csv = solo.events_of_user_csv(0);

      IsolationRow row;
      row.model = model_label(observed);
      row.share_cores = share;
      row.solo_fps = solo.throughput_fps.at(0);
      row.traces_identical = true;
      std::set<int> my_banks;
      for (int c : mine) my_banks.insert(pool.bank_of(c));

      const int rest = pool.cores - share;
      bool first = true;
      for (int mix = 0; rest > 0 && mix < spec.mixes_per_share; ++mix) {
        // Random composition of the remaining cores over 1..4 co-runners.
        const int runners = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::min(4, rest)));
        std::vector<int> sizes(static_cast<std::size_t>(runners), 1);
        for (int left = rest - runners; left > 0; --left) {
          ++sizes[rng() % static_cast<std::uint64_t>(runners)];
        }
        std::vector<VirtualizedProgram> sessions{prog};
        int next = share;
        for (int r = 0; r < runners; ++r) {
          const std::string& m = co_models[rng() % co_models.size()];
          const StaticArtifact& ca = cache.get(m, pool.core, spec.max_tiles, pool.mem);
          const std::vector<int> cores = core_range(next, sizes[static_cast<std::size_t>(r)]);
          for (int c : cores) {
            if (my_banks.count(pool.bank_of(c))) row.shared_banks = true;
          }
          sessions.push_back(dynamic_compile(ca, r + 1, cores).program);
          next += sizes[static_cast<std::size_t>(r)];
        }
        const SimTrace co = simulate(pool, sessions, opt);
        const double dev = (row.solo_fps - co.throughput_fps.at(0)) / row.solo_fps;
        row.min_deviation = first ? dev : std::min(row.min_deviation, dev);
        row.max_deviation = first ? dev : std::max(row.max_deviation, dev);
        first = false;
        if (co.events_of_user_csv(0) != solo_csv) row.traces_identical = false;
        ++row.mixes;
      }
      rep.isolation.push_back(row);
    }
  }
}

void run_context(const ExperimentSpec& spec, ArtifactCache& cache, ExperimentReport& rep) {
  for (const std::string& m : spec.models) {
    const StaticArtifact& a = cache.get(m, spec.pool.core, spec.max_tiles, spec.pool.mem);
    for (int k : spec.core_counts) {
      // Best of three, to keep scheduler noise out of the figure.
      DynamicResult best;
      for (int rep_i = 0; rep_i < 3; ++rep_i) {
        DynamicResult r = dynamic_compile(a, 0, core_range(0, k));
        if (rep_i == 0 || r.report.t_recompile < best.report.t_recompile) best = std::move(r);
      }
      rep.context.push_back({model_label(m), k, best.program.text_bytes(), best.report});
    }
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, ArtifactCache& cache) {
  spec.validate();
  ExperimentReport rep;
  rep.kind = spec.kind;
  switch (spec.kind) {
    case ExperimentKind::SingleTask:
      run_single(spec, cache, rep);
      break;
    case ExperimentKind::MultiTask:
      run_multi(spec, cache, rep);
      break;
    case ExperimentKind::Isolation:
      run_isolation(spec, cache, rep);
      break;
    case ExperimentKind::ContextSwitch:
      run_context(spec, cache, rep);
      break;
  }
  return rep;
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  switch (kind) {
    case ExperimentKind::SingleTask:
      os << "model,cores,parallelism,width_makespan,oc_makespan,opt_makespan,width_fps,oc_fps,"
            "opt_fps,single_core_fps\n";
      for (const SingleTaskRow& r : single) {
        os << r.model << ',' << r.cores << ',' << r.parallelism << ',' << r.width_makespan << ','
           << r.oc_makespan << ',' << r.opt_makespan << ',' << fmt(r.width_fps) << ','
           << fmt(r.oc_fps) << ',' << fmt(r.opt_fps) << ',' << fmt(r.single_core_fps) << '\n';
      }
      break;
    case ExperimentKind::MultiTask:
      os << "model,tasks,virtualized_fps,static_multi_fps,static_single_fps\n";
      for (const MultiTaskRow& r : multi) {
        os << r.model << ',' << r.tasks << ',' << fmt(r.virtualized_fps) << ','
           << fmt(r.static_multi_fps) << ',' << fmt(r.static_single_fps) << '\n';
      }
      break;
    case ExperimentKind::Isolation:
      os << "model,share_cores,shared_banks,mixes,solo_fps,min_deviation,max_deviation,"
            "traces_identical\n";
      for (const IsolationRow& r : isolation) {
        os << r.model << ',' << r.share_cores << ',' << (r.shared_banks ? 1 : 0) << ','
           << r.mixes << ',' << fmt(r.solo_fps) << ',' << fmt(r.min_deviation, 6) << ','
           << fmt(r.max_deviation, 6) << ',' << (r.traces_identical ? 1 : 0) << '\n';
      }
      break;
    case ExperimentKind::ContextSwitch:
      // Round-trip precision so that the sum holds on the printed values.
      os << "model,cores,text_bytes,t_recompile_s,t_transfer_s,t_context_s\n";
      for (const ContextSwitchRow& r : context) {
        os << r.model << ',' << r.cores << ',' << r.text_bytes << ','
           << exact(r.report.t_recompile) << ',' << exact(r.report.t_transfer) << ','
           << exact(r.report.t_context) << '\n';
      }
      break;
  }
  return os.str();
}

std::string ExperimentReport::layers_csv() const {
  if (single_layers.empty()) return {};
  std::ostringstream os;
  os << "model,cores,layer,width_makespan,oc_makespan,opt_method,opt_makespan\n";
  for (const SingleTaskLayerRow& r : single_layers) {
    os << r.model << ',' << r.cores << ',' << r.layer_id << ',' << r.width_makespan << ','
       << r.oc_makespan << ',' << to_string(r.opt_method) << ',' << r.opt_makespan << '\n';
  }
  return os.str();
}

}  // namespace fvirt
