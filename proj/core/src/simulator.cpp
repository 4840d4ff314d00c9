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

#include "fvirt/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fvirt/error.hpp"

namespace fvirt {

int PoolConfig::bank_of(int core_id) const {
  if (core_id < 0 || core_id >= cores) {
    throw SimulationError("core " + std::to_string(core_id) + " is not in the pool");
  }
  if (!core_to_ddr.empty()) return core_to_ddr[static_cast<std::size_t>(core_id)];
  return core_id * ddr_banks / cores;
}

void PoolConfig::validate() const {
  if (cores < 1 || ddr_banks < 1 || ddr_port_bits < 8) {
    throw SimulationError("pool needs at least one core and one DDR bank");
  }
  core.validate();
  mem.validate();
  if (!core_to_ddr.empty() && static_cast<int>(core_to_ddr.size()) != cores) {
    throw SimulationError("core_to_ddr must list every core");
  }
  std::vector<std::int64_t> demand(static_cast<std::size_t>(ddr_banks), 0);
  for (int c = 0; c < cores; ++c) {
    const int b = bank_of(c);
    if (b < 0 || b >= ddr_banks) {
      throw SimulationError("core " + std::to_string(c) + " maps to missing DDR bank " +
                            std::to_string(b));
    }
    demand[static_cast<std::size_t>(b)] += core.port_bits;
  }
  if (!enforce_port_capacity) return;
  for (int b = 0; b < ddr_banks; ++b) {
    if (demand[static_cast<std::size_t>(b)] > ddr_port_bits) {
      throw SimulationError("DDR bank " + std::to_string(b) + " serves " +
                            std::to_string(demand[static_cast<std::size_t>(b)]) +
                            " port bits but is only " + std::to_string(ddr_port_bits) +
                            " bits wide");
    }
  }
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Start:
      return "start";
    case EventKind::End:
      return "end";
    case EventKind::SyncLocal:
      return "sync_local";
    case EventKind::SyncGlobal:
      return "sync_global";
    case EventKind::CtxSwitch:
      return "ctx_switch";
  }
  return "?";
}

std::string_view to_string(SwitchMode mode) {
  return mode == SwitchMode::TaskLevel ? "task" : "layer";
}

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

struct Transfer {
  int core = 0;
  int module = 0;
  bool write = false;  // Save
  std::int64_t remaining = 0;  // bit-cycles
  std::int64_t rate = 0;       // bits per cycle
};

struct CoreRun {
  bool active = false;
  int session = -1;
  const InstructionStream* stream = nullptr;
  std::vector<std::int64_t> latency;
  std::vector<int> segment;
  std::array<std::vector<int>, kModuleCount> queue;
  std::array<std::size_t, kModuleCount> head{};
  std::array<int, kModuleCount> running{};
  std::array<std::int64_t, kModuleCount> finish_at{};
  std::vector<char> done;
  int released = 0;
};

struct PendingSwitch {
  SwitchMode mode = SwitchMode::TaskLevel;
  std::shared_ptr<const VirtualizedProgram> program;
  ContextSwitchReport report;
  std::int64_t stall = 0;
};

struct SessionRun {
  enum class State { Running, Waiting, Done };
  int user = 0;
  std::shared_ptr<const VirtualizedProgram> program;
  int epoch = 0;
  State state = State::Running;
  int segment = 0;
  int inference = 0;
  int completed = 0;
  std::int64_t segment_start = 0;
  std::int64_t inference_start = 0;
  int sync_count = 0;
  std::int64_t global_at = kNever;
  int finished_cores = 0;
  std::optional<PendingSwitch> pending;
  // While waiting for a new program to start.
  std::int64_t start_at = 0;
  int resume_segment = 0;
  std::size_t switch_record = 0;
};

class Engine {
 public:
  Engine(const PoolConfig& pool, const SimOptions& opts) : pool_(pool), opts_(opts) {
    cores_.resize(static_cast<std::size_t>(pool.cores));
    owner_.assign(static_cast<std::size_t>(pool.cores), -1);
    banks_.resize(static_cast<std::size_t>(pool.ddr_banks));
    trace_.clock_hz = pool.core.clock_hz;
    trigger_fired_.assign(opts.reconfigurations.size(), false);
  }

  SimTrace run(const std::vector<VirtualizedProgram>& programs) {
    check_placement(programs);
    for (const VirtualizedProgram& p : programs) {
      SessionRun s;
      s.user = p.user_id;
      sessions_.push_back(std::move(s));
    }
    std::sort(sessions_.begin(), sessions_.end(),
              [](const SessionRun& a, const SessionRun& b) { return a.user < b.user; });
    for (const VirtualizedProgram& p : programs) {
      SessionRun& s = session_of(p.user_id);
      start_program(session_index(p.user_id), std::make_shared<VirtualizedProgram>(p), 0);
      s.inference_start = 0;
    }

    std::int64_t last = 0;
    for (;;) {
      advance_transfers(t_ - last);
      last = t_;
      complete_due();
      fire_globals();
      fire_cycle_triggers();
      // A switch with no stall can land inside the issue pass; start it now.
      do {
        while (issue_pass()) {
        }
      } while (start_waiting());
      if (std::all_of(sessions_.begin(), sessions_.end(), [](const SessionRun& s) {
            return s.state == SessionRun::State::Done;
          })) {
        break;
      }
      update_rates();
      const std::int64_t next = next_event_time();
      if (next == kNever) throw SimulationError(deadlock_report());
      t_ = next;
    }
    finish_stats();
    return std::move(trace_);
  }

 private:
  // ---- setup --------------------------------------------------------------

  void check_placement(const std::vector<VirtualizedProgram>& programs) {
    pool_.validate();
    std::set<int> users;
    std::vector<int> used(static_cast<std::size_t>(pool_.cores), -1);
    for (const VirtualizedProgram& p : programs) {
      if (!users.insert(p.user_id).second) {
        throw SimulationError("user " + std::to_string(p.user_id) + " appears twice");
      }
      if (p.core_ids.empty() || p.streams.size() != p.core_ids.size()) {
        throw SimulationError("user " + std::to_string(p.user_id) + " has no cores");
      }
      for (int c : p.core_ids) {
        pool_.bank_of(c);
        int& u = used[static_cast<std::size_t>(c)];
        if (u >= 0) {
          throw SimulationError("core " + std::to_string(c) + " assigned to users " +
                                std::to_string(u) + " and " + std::to_string(p.user_id));
        }
        u = p.user_id;
      }
    }
    for (std::size_t i = 0; i < programs.size(); ++i) {
      for (std::size_t j = i + 1; j < programs.size(); ++j) {
        const auto& a = programs[i];
        const auto& b = programs[j];
        if (a.ddr_base < b.ddr_base + b.ddr_size && b.ddr_base < a.ddr_base + a.ddr_size &&
            shares_bank(a.core_ids, b.core_ids)) {
          throw SimulationError("users " + std::to_string(a.user_id) + " and " +
                                std::to_string(b.user_id) +
                                " share a DDR bank with overlapping windows");
        }
      }
    }
  }

  bool shares_bank(const std::vector<int>& a, const std::vector<int>& b) const {
    for (int x : a) {
      for (int y : b) {
        if (pool_.bank_of(x) == pool_.bank_of(y)) return true;
      }
    }
    return false;
  }

  std::size_t session_index(int user) const {
    for (std::size_t i = 0; i < sessions_.size(); ++i) {
      if (sessions_[i].user == user) return i;
    }
    throw SimulationError("no session for user " + std::to_string(user));
  }
  SessionRun& session_of(int user) { return sessions_[session_index(user)]; }

  void load_core(CoreRun& cr, std::size_t si, const InstructionStream& stream) {
    cr = CoreRun{};
    cr.active = true;
    cr.session = static_cast<int>(si);
    cr.stream = &stream;
    cr.latency = stream_latencies(stream.instructions, pool_.core, pool_.mem);
    cr.segment.reserve(stream.instructions.size());
    int seg = 0;
    for (std::size_t i = 0; i < stream.instructions.size(); ++i) {
      const Instruction& in = stream.instructions[i];
      cr.segment.push_back(seg);
      cr.queue[static_cast<std::size_t>(module_of(in.opcode))].push_back(static_cast<int>(i));
      if (in.opcode == Opcode::System) ++seg;
    }
    cr.done.assign(stream.instructions.size(), 0);
    cr.running.fill(-1);
  }

  // Resets a core to the start of its stream, skipping segments below `seg`.
  void rewind_core(CoreRun& cr, int seg) {
    std::fill(cr.done.begin(), cr.done.end(), 0);
    cr.head.fill(0);
    for (std::size_t m = 0; m < kModuleCount; ++m) {
      auto& q = cr.queue[m];
      while (cr.head[m] < q.size() && cr.segment[static_cast<std::size_t>(q[cr.head[m]])] < seg) {
        cr.done[static_cast<std::size_t>(q[cr.head[m]])] = 1;
        ++cr.head[m];
      }
    }
    cr.released = seg;
  }

  void start_program(std::size_t si, std::shared_ptr<const VirtualizedProgram> prog,
                     int resume) {
    SessionRun& s = sessions_[si];
    s.program = std::move(prog);
    s.state = SessionRun::State::Running;
    s.segment = resume;
    s.segment_start = t_;
    s.sync_count = 0;
    s.global_at = kNever;
    s.finished_cores = 0;
    EpochInfo e;
    e.user = s.user;
    e.epoch = s.epoch;
    e.cores = s.program->core_ids;
    e.ddr_lo = s.program->ddr_base;
    e.ddr_hi = s.program->ddr_base + s.program->ddr_size;
    e.start_cycle = t_;
    e.resume_layer = resume;
    e.program = s.program;
    trace_.epochs.push_back(std::move(e));
    for (std::size_t k = 0; k < s.program->core_ids.size(); ++k) {
      const int c = s.program->core_ids[k];
      owner_[static_cast<std::size_t>(c)] = s.user;
      CoreRun& cr = cores_[static_cast<std::size_t>(c)];
      load_core(cr, si, s.program->streams[k]);
      rewind_core(cr, resume);
    }
  }

  void release_cores(SessionRun& s) {
    for (int c : s.program->core_ids) {
      owner_[static_cast<std::size_t>(c)] = -1;
      cores_[static_cast<std::size_t>(c)].active = false;
    }
  }

  // ---- events -------------------------------------------------------------

  void emit(const SessionRun& s, int core, Module m, int instr, EventKind kind, int layer,
            std::int64_t lo = 0, std::int64_t hi = 0, std::int64_t aux = 0) {
    trace_.events.push_back(
        {t_, s.user, core, m, instr, kind, layer, s.inference, s.epoch, lo, hi, aux});
  }

  bool ready(const CoreRun& cr, int idx) const {
    if (cr.segment[static_cast<std::size_t>(idx)] > cr.released) return false;
    for (int d : cr.stream->instructions[static_cast<std::size_t>(idx)].deps) {
      if (!cr.done[static_cast<std::size_t>(d)]) return false;
    }
    return true;
  }

  bool issue_pass() {
    bool progress = false;
    for (std::size_t si = 0; si < sessions_.size(); ++si) {
      SessionRun& s = sessions_[si];
      if (s.state != SessionRun::State::Running) continue;
      const std::shared_ptr<const VirtualizedProgram> prog = s.program;
      for (int c : prog->core_ids) {
        CoreRun& cr = cores_[static_cast<std::size_t>(c)];
        for (std::size_t m = 0; m < kModuleCount; ++m) {
          if (!cr.active || cr.session != static_cast<int>(si) || cr.stream->core_id != c) break;
          if (s.state != SessionRun::State::Running || s.program != prog) break;
          while (cr.running[m] < 0 && cr.head[m] < cr.queue[m].size() &&
                 ready(cr, cr.queue[m][cr.head[m]])) {
            const int idx = cr.queue[m][cr.head[m]];
            ++cr.head[m];
            issue(si, c, cr, m, idx);
            progress = true;
            if (!cr.active || s.program != prog) break;
          }
        }
      }
    }
    return progress;
  }

  void issue(std::size_t si, int c, CoreRun& cr, std::size_t m, int idx) {
    SessionRun& s = sessions_[si];
    const Instruction& in = cr.stream->instructions[static_cast<std::size_t>(idx)];
    const int seg = cr.segment[static_cast<std::size_t>(idx)];
    std::int64_t lo = 0, hi = 0;
    const bool transfer = in.opcode == Opcode::Load || in.opcode == Opcode::Save;
    if (transfer) {
      lo = in.transfer().ddr_addr;
      hi = lo + in.transfer().length_bytes;
    }
    emit(s, c, static_cast<Module>(m), in.instr_id, EventKind::Start, seg, lo, hi);
    const std::int64_t lat = cr.latency[static_cast<std::size_t>(idx)];
    cr.running[m] = idx;
    if (lat == 0) {
      complete(c, cr, m);
      return;
    }
    if (transfer) {
      Transfer tr;
      tr.core = c;
      tr.module = static_cast<int>(m);
      tr.write = in.opcode == Opcode::Save;
      tr.remaining = lat * pool_.core.port_bits;
      banks_[static_cast<std::size_t>(pool_.bank_of(c))].push_back(tr);
      cr.finish_at[m] = kNever;
    } else {
      cr.finish_at[m] = t_ + lat;
    }
  }

  void complete(int c, CoreRun& cr, std::size_t m) {
    const int idx = cr.running[m];
    cr.running[m] = -1;
    cr.done[static_cast<std::size_t>(idx)] = 1;
    const std::size_t si = static_cast<std::size_t>(cr.session);
    SessionRun& s = sessions_[si];
    const Instruction& in = cr.stream->instructions[static_cast<std::size_t>(idx)];
    const int seg = cr.segment[static_cast<std::size_t>(idx)];
    emit(s, c, static_cast<Module>(m), in.instr_id, EventKind::End, seg);
    if (in.opcode != Opcode::System) return;
    const SystemFields& f = in.system();
    if (f.sync_bit) {
      emit(s, c, Module::Sys, in.instr_id, EventKind::SyncLocal, seg);
      if (++s.sync_count == static_cast<int>(s.program->core_ids.size())) {
        s.global_at = t_ + kBarrierEpsilon;
      }
    }
    if (f.finish_bit) {
      if (++s.finished_cores == static_cast<int>(s.program->core_ids.size())) {
        inference_done(si);
      }
    }
  }

  void complete_due() {
    for (std::size_t b = 0; b < banks_.size(); ++b) {
      auto& list = banks_[b];
      std::vector<Transfer> finished;
      std::erase_if(list, [&](const Transfer& tr) {
        if (tr.remaining > 0) return false;
        finished.push_back(tr);
        return true;
      });
      std::sort(finished.begin(), finished.end(), [](const Transfer& x, const Transfer& y) {
        return std::tie(x.core, x.module) < std::tie(y.core, y.module);
      });
      for (const Transfer& tr : finished) {
        CoreRun& cr = cores_[static_cast<std::size_t>(tr.core)];
        complete(tr.core, cr, static_cast<std::size_t>(tr.module));
      }
    }
    for (std::size_t c = 0; c < cores_.size(); ++c) {
      CoreRun& cr = cores_[c];
      if (!cr.active) continue;
      for (std::size_t m = 0; m < kModuleCount; ++m) {
        if (cr.running[m] >= 0 && cr.finish_at[m] == t_) {
          complete(static_cast<int>(c), cr, m);
          if (!cr.active) break;
        }
      }
    }
  }

  void fire_globals() {
    for (std::size_t si = 0; si < sessions_.size(); ++si) {
      SessionRun& s = sessions_[si];
      if (s.state != SessionRun::State::Running || s.global_at != t_) continue;
      s.global_at = kNever;
      s.sync_count = 0;
      const int layer = s.segment;
      emit(s, -1, Module::Sys, -1, EventKind::SyncGlobal, layer);
      trace_.layers.push_back({s.user, s.inference, layer, s.epoch, s.segment_start, t_});
      for (std::size_t r = 0; r < opts_.reconfigurations.size(); ++r) {
        const ReconfigTrigger& tr = opts_.reconfigurations[r].trigger;
        if (!trigger_fired_[r] && !tr.cycle && tr.user == s.user && tr.layer == layer) {
          activate(r);
        }
      }
      s.segment = layer + 1;
      s.segment_start = t_;
      if (s.pending && s.pending->mode == SwitchMode::LayerLevel) {
        switch_out(si, layer + 1);
        continue;
      }
      for (int c : s.program->core_ids) cores_[static_cast<std::size_t>(c)].released = layer + 1;
    }
  }

  void fire_cycle_triggers() {
    for (std::size_t r = 0; r < opts_.reconfigurations.size(); ++r) {
      const ReconfigTrigger& tr = opts_.reconfigurations[r].trigger;
      if (!trigger_fired_[r] && tr.cycle && *tr.cycle <= t_) activate(r);
    }
  }

  void activate(std::size_t r) {
    trigger_fired_[r] = true;
    const Reconfiguration& rc = opts_.reconfigurations[r];
    // Final placement after this reconfiguration.
    std::map<int, std::vector<int>> target;
    for (const SessionRun& s : sessions_) {
      if (s.state == SessionRun::State::Done) continue;
      target[s.user] = s.pending ? s.pending->program->core_ids : s.program->core_ids;
    }
    for (const auto& [user, cores] : rc.allocations) {
      session_index(user);
      if (target.count(user)) target[user] = cores;
    }
    std::vector<int> used(static_cast<std::size_t>(pool_.cores), -1);
    for (const auto& [user, cores] : target) {
      if (cores.empty()) throw SimulationError("user " + std::to_string(user) + " left with no cores");
      for (int c : cores) {
        pool_.bank_of(c);
        if (used[static_cast<std::size_t>(c)] >= 0) {
          throw SimulationError("reconfiguration assigns core " + std::to_string(c) +
                                " to users " + std::to_string(used[static_cast<std::size_t>(c)]) +
                                " and " + std::to_string(user));
        }
        used[static_cast<std::size_t>(c)] = user;
      }
    }
    for (const auto& [user, cores] : rc.allocations) {
      SessionRun& s = session_of(user);
      if (s.state == SessionRun::State::Done) continue;
      const auto& current = s.pending ? s.pending->program->core_ids : s.program->core_ids;
      if (current == cores) continue;
      if (!opts_.recompiler) throw SimulationError("reconfiguration needs a recompiler");
      DynamicResult res = opts_.recompiler(user, cores);
      PendingSwitch p;
      p.mode = rc.mode;
      p.report = res.report;
      p.program = std::make_shared<VirtualizedProgram>(std::move(res.program));
      const double seconds = rc.context_ms ? *rc.context_ms * 1e-3 : res.report.t_context;
      p.stall = static_cast<std::int64_t>(std::ceil(seconds * pool_.core.clock_hz));
      s.pending = std::move(p);
    }
  }

  void switch_out(std::size_t si, int resume) {
    SessionRun& s = sessions_[si];
    PendingSwitch p = std::move(*s.pending);
    s.pending.reset();
    release_cores(s);
    emit(s, -1, Module::Sys, -1, EventKind::CtxSwitch, resume, 0, 0, p.stall);
    SwitchRecord rec;
    rec.user = s.user;
    rec.mode = p.mode;
    rec.switch_cycle = t_;
    rec.stall_cycles = p.stall;
    rec.resume_layer = resume;
    rec.inference = s.inference;
    rec.report = p.report;
    s.switch_record = trace_.switches.size();
    trace_.switches.push_back(rec);
    s.state = SessionRun::State::Waiting;
    s.start_at = t_ + p.stall;
    s.resume_segment = resume;
    s.program = std::move(p.program);
  }

  bool start_waiting() {
    bool started = false;
    for (std::size_t si = 0; si < sessions_.size(); ++si) {
      SessionRun& s = sessions_[si];
      if (s.state != SessionRun::State::Waiting || s.start_at > t_) continue;
      const bool free = std::all_of(s.program->core_ids.begin(), s.program->core_ids.end(),
                                    [&](int c) { return owner_[static_cast<std::size_t>(c)] < 0; });
      if (!free) continue;
      ++s.epoch;
      if (s.resume_segment == 0) s.inference_start = t_;
      trace_.switches[s.switch_record].start_cycle = t_;
      start_program(si, s.program, s.resume_segment);
      started = true;
    }
    return started;
  }

  void inference_done(std::size_t si) {
    SessionRun& s = sessions_[si];
    trace_.inference_end[s.user].push_back(t_);
    inference_span_[s.user].push_back(t_ - s.inference_start);
    ++s.completed;
    if (s.completed >= opts_.horizon) {
      s.state = SessionRun::State::Done;
      s.pending.reset();
      release_cores(s);
      return;
    }
    ++s.inference;
    if (s.pending && s.pending->mode == SwitchMode::TaskLevel) {
      switch_out(si, 0);
      return;
    }
    s.inference_start = t_;
    s.segment = 0;
    s.segment_start = t_;
    s.sync_count = 0;
    s.finished_cores = 0;
    for (int c : s.program->core_ids) rewind_core(cores_[static_cast<std::size_t>(c)], 0);
  }

  // ---- DDR ----------------------------------------------------------------

  void update_rates() {
    for (auto& list : banks_) {
      for (bool write : {false, true}) {
        std::int64_t demand = 0;
        for (const Transfer& tr : list) {
          if (tr.write == write) demand += pool_.core.port_bits;
        }
        for (Transfer& tr : list) {
          if (tr.write != write) continue;
          tr.rate = demand <= pool_.ddr_port_bits
                        ? pool_.core.port_bits
                        : std::max<std::int64_t>(
                              1, std::int64_t{pool_.core.port_bits} * pool_.ddr_port_bits / demand);
        }
      }
    }
  }

  void advance_transfers(std::int64_t dt) {
    if (dt <= 0) return;
    for (auto& list : banks_) {
      for (Transfer& tr : list) tr.remaining -= tr.rate * dt;
    }
  }

  std::int64_t next_event_time() const {
    std::int64_t next = kNever;
    for (const CoreRun& cr : cores_) {
      if (!cr.active) continue;
      for (std::size_t m = 0; m < kModuleCount; ++m) {
        if (cr.running[m] >= 0 && cr.finish_at[m] != kNever) next = std::min(next, cr.finish_at[m]);
      }
    }
    for (const auto& list : banks_) {
      for (const Transfer& tr : list) {
        next = std::min(next, t_ + (tr.remaining + tr.rate - 1) / tr.rate);
      }
    }
    for (const SessionRun& s : sessions_) {
      if (s.state == SessionRun::State::Running && s.global_at != kNever) {
        next = std::min(next, s.global_at);
      }
      if (s.state == SessionRun::State::Waiting && s.start_at > t_) next = std::min(next, s.start_at);
    }
    for (std::size_t r = 0; r < opts_.reconfigurations.size(); ++r) {
      const ReconfigTrigger& tr = opts_.reconfigurations[r].trigger;
      if (!trigger_fired_[r] && tr.cycle && *tr.cycle > t_) next = std::min(next, *tr.cycle);
    }
    return next;
  }

  std::string deadlock_report() const {
    std::ostringstream os;
    os << "deadlock at cycle " << t_ << ":";
    for (const SessionRun& s : sessions_) {
      if (s.state == SessionRun::State::Done) continue;
      if (s.state == SessionRun::State::Waiting) {
        os << "\n  user " << s.user << ": waiting for cores";
        for (int c : s.program->core_ids) {
          if (owner_[static_cast<std::size_t>(c)] >= 0) {
            os << ' ' << c << "(user " << owner_[static_cast<std::size_t>(c)] << ')';
          }
        }
        continue;
      }
      for (int c : s.program->core_ids) {
        const CoreRun& cr = cores_[static_cast<std::size_t>(c)];
        os << "\n  user " << s.user << " core " << c << ":";
        for (std::size_t m = 0; m < kModuleCount; ++m) {
          if (cr.head[m] >= cr.queue[m].size()) continue;
          const int idx = cr.queue[m][cr.head[m]];
          const Instruction& in = cr.stream->instructions[static_cast<std::size_t>(idx)];
          os << ' ' << to_string(static_cast<Module>(m)) << " instr " << in.instr_id;
          if (cr.running[m] >= 0) {
            os << " (module busy)";
          } else if (cr.segment[static_cast<std::size_t>(idx)] > cr.released) {
            os << " (barrier before layer " << cr.segment[static_cast<std::size_t>(idx)] << ")";
          } else {
            for (int d : in.deps) {
              if (!cr.done[static_cast<std::size_t>(d)]) {
                os << " (dep " << d << ")";
                break;
              }
            }
          }
          os << ';';
        }
      }
    }
    return os.str();
  }

  void finish_stats() {
    for (const auto& [user, spans] : inference_span_) {
      double sum = 0;
      for (std::int64_t v : spans) sum += static_cast<double>(v);
      trace_.per_task_cycles[user] = sum / static_cast<double>(spans.size());
      const auto& ends = trace_.inference_end[user];
      trace_.throughput_fps[user] = ends.back() > 0 ? static_cast<double>(ends.size()) *
                                                          pool_.core.clock_hz /
                                                          static_cast<double>(ends.back())
                                                    : 0.0;
    }
  }

  PoolConfig pool_;
  const SimOptions& opts_;
  std::int64_t t_ = 0;
  std::vector<CoreRun> cores_;
  std::vector<int> owner_;
  std::vector<std::vector<Transfer>> banks_;
  std::vector<SessionRun> sessions_;
  std::vector<bool> trigger_fired_;
  std::map<int, std::vector<std::int64_t>> inference_span_;
  SimTrace trace_;
};

}  // namespace

SimTrace simulate(const PoolConfig& pool, const std::vector<VirtualizedProgram>& sessions,
                  const SimOptions& options) {
  if (options.horizon < 1) throw SimulationError("horizon must be >= 1");
  Engine engine(pool, options);
  return engine.run(sessions);
}

// ---------------------------------------------------------------------------

namespace {

void csv_row(std::ostringstream& os, const TraceEvent& e) {
  os << e.cycle << ',' << e.user << ',' << e.core << ',' << to_string(e.module) << ','
     << e.instr << ',' << to_string(e.kind) << '\n';
}

}  // namespace

std::string SimTrace::to_csv() const {
  std::ostringstream os;
  os << "cycle,user,core,module,instr,kind\n";
  for (const TraceEvent& e : events) csv_row(os, e);
  return os.str();
}

std::string SimTrace::events_of_user_csv(int user) const {
  std::ostringstream os;
  for (const TraceEvent& e : events) {
    if (e.user == user) csv_row(os, e);
  }
  return os.str();
}

std::string SimTrace::summary_json() const {
  using json = nlohmann::ordered_json;
  json users = json::object();
  for (const auto& [user, cycles] : per_task_cycles) {
    json layers_j = json::array();
    for (const LayerRecord& l : layers) {
      if (l.user != user) continue;
      layers_j.push_back(json{{"inference", l.inference},
                              {"layer", l.layer},
                              {"epoch", l.epoch},
                              {"start", l.start},
                              {"end", l.end},
                              {"cycles", l.end - l.start}});
    }
    users[std::to_string(user)] = json{{"per_task_cycles", cycles},
                                       {"fps", throughput_fps.at(user)},
                                       {"inference_end", inference_end.at(user)},
                                       {"layers", layers_j}};
  }
  json sw = json::array();
  for (const SwitchRecord& s : switches) {
    sw.push_back(json{{"user", s.user},
                      {"mode", std::string(to_string(s.mode))},
                      {"switch_cycle", s.switch_cycle},
                      {"start_cycle", s.start_cycle},
                      {"stall_cycles", s.stall_cycles},
                      {"resume_layer", s.resume_layer},
                      {"inference", s.inference}});
  }
  return json{{"clock_hz", clock_hz}, {"users", users}, {"switches", sw}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

VerificationReport verify_trace(const SimTrace& trace) {
  VerificationReport rep;
  auto fail = [&rep](std::string msg) {
    if (rep.violations.size() < 200) rep.violations.push_back(std::move(msg));
  };
  std::map<std::pair<int, int>, const EpochInfo*> epochs;
  for (const EpochInfo& e : trace.epochs) epochs[{e.user, e.epoch}] = &e;

  struct CoreState {
    std::vector<std::int64_t> end;
    std::vector<int> stamp;  // inference of the recorded end, -1 if none
    std::vector<std::int64_t> start;
    std::vector<int> segment;
  };
  std::map<std::tuple<int, int, int>, CoreState> states;  // user, epoch, core
  auto state_for = [&](const TraceEvent& e, const EpochInfo& ep) -> CoreState* {
    auto key = std::make_tuple(e.user, e.epoch, e.core);
    auto it = states.find(key);
    if (it != states.end()) return &it->second;
    const auto& cores = ep.cores;
    auto pos = std::find(cores.begin(), cores.end(), e.core);
    if (pos == cores.end()) return nullptr;
    const auto& stream = ep.program->streams[static_cast<std::size_t>(pos - cores.begin())];
    CoreState cs;
    const std::size_t n = stream.instructions.size();
    cs.end.assign(n, 0);
    cs.stamp.assign(n, -1);
    cs.start.assign(n, -1);
    int seg = 0;
    for (const Instruction& in : stream.instructions) {
      cs.segment.push_back(seg);
      if (in.opcode == Opcode::System) ++seg;
    }
    return &states.emplace(key, std::move(cs)).first->second;
  };

  std::map<std::tuple<int, int, int>, std::int64_t> global_at;  // user, inference, layer
  std::map<std::tuple<int, int, int>, std::pair<int, std::int64_t>> locals;
  std::map<std::pair<int, int>, int> open;  // (core, module) -> user
  std::map<int, int> core_user;
  std::map<int, int> core_open;
  std::int64_t prev = 0;

  for (const TraceEvent& e : trace.events) {
    if (e.cycle < prev) fail("events out of cycle order at cycle " + std::to_string(e.cycle));
    prev = e.cycle;
    auto ep_it = epochs.find({e.user, e.epoch});
    if (ep_it == epochs.end()) {
      fail("event of unknown session epoch (user " + std::to_string(e.user) + ")");
      continue;
    }
    const EpochInfo& ep = *ep_it->second;
    const std::string who = "user " + std::to_string(e.user) + " core " + std::to_string(e.core) +
                            " instr " + std::to_string(e.instr);
    switch (e.kind) {
      case EventKind::Start: {
        CoreState* cs = state_for(e, ep);
        if (!cs || e.instr < 0 || e.instr >= static_cast<int>(cs->end.size())) {
          fail(who + ": core not owned by the session or unknown instruction");
          break;
        }
        auto cu = core_user.find(e.core);
        if (cu != core_user.end() && cu->second != e.user && core_open[e.core] > 0) {
          fail(who + ": core still running user " + std::to_string(cu->second));
        }
        core_user[e.core] = e.user;
        ++core_open[e.core];
        auto key = std::make_pair(e.core, static_cast<int>(e.module));
        if (open.count(key)) {
          fail(who + ": module " + std::string(to_string(e.module)) + " already busy");
        }
        open[key] = e.user;
        const auto& stream =
            ep.program->streams[static_cast<std::size_t>(
                std::find(ep.cores.begin(), ep.cores.end(), e.core) - ep.cores.begin())];
        const Instruction& in = stream.instructions[static_cast<std::size_t>(e.instr)];
        if ((in.opcode == Opcode::Load || in.opcode == Opcode::Save) &&
            e.ddr_hi > e.ddr_lo && (e.ddr_lo < ep.ddr_lo || e.ddr_hi > ep.ddr_hi)) {
          fail(who + ": DDR access outside the session window");
        }
        const int seg = cs->segment[static_cast<std::size_t>(e.instr)];
        if (seg != e.layer) fail(who + ": event layer does not match its stream segment");
        if (seg >= 1) {
          auto g = global_at.find({e.user, e.inference, seg - 1});
          if (g == global_at.end() || g->second > e.cycle) {
            fail(who + ": started in layer " + std::to_string(seg) +
                 " before sync_global of layer " + std::to_string(seg - 1));
          }
        }
        for (int d : in.deps) {
          if (cs->segment[static_cast<std::size_t>(d)] != seg) continue;
          if (cs->stamp[static_cast<std::size_t>(d)] != e.inference ||
              cs->end[static_cast<std::size_t>(d)] > e.cycle) {
            fail(who + ": started before dependency " + std::to_string(d) + " ended");
          }
        }
        cs->start[static_cast<std::size_t>(e.instr)] = e.cycle;
        break;
      }
      case EventKind::End: {
        CoreState* cs = state_for(e, ep);
        auto key = std::make_pair(e.core, static_cast<int>(e.module));
        if (!cs || !open.count(key)) {
          fail(who + ": end without start");
          break;
        }
        open.erase(key);
        --core_open[e.core];
        if (cs->start[static_cast<std::size_t>(e.instr)] > e.cycle) {
          fail(who + ": ends before it starts");
        }
        cs->end[static_cast<std::size_t>(e.instr)] = e.cycle;
        cs->stamp[static_cast<std::size_t>(e.instr)] = e.inference;
        break;
      }
      case EventKind::SyncLocal: {
        auto& [count, last] = locals[{e.user, e.inference, e.layer}];
        ++count;
        last = std::max(last, e.cycle);
        break;
      }
      case EventKind::SyncGlobal: {
        auto it = locals.find({e.user, e.inference, e.layer});
        const std::string tag = "user " + std::to_string(e.user) + " layer " +
                                std::to_string(e.layer) + " inference " +
                                std::to_string(e.inference);
        if (it == locals.end() || it->second.first != static_cast<int>(ep.cores.size())) {
          fail(tag + ": sync_global without every core's sync_local");
        } else if (e.cycle != it->second.second + kBarrierEpsilon) {
          fail(tag + ": sync_global at " + std::to_string(e.cycle) + " but last sync_local at " +
               std::to_string(it->second.second));
        }
        global_at[{e.user, e.inference, e.layer}] = e.cycle;
        break;
      }
      case EventKind::CtxSwitch:
        for (int c : ep.cores) {
          if (core_user.count(c) && core_user[c] == e.user && core_open[c] > 0) {
            fail("user " + std::to_string(e.user) + ": context switch with core " +
                 std::to_string(c) + " still busy");
          }
        }
        break;
    }
  }
  if (!open.empty()) fail("trace ends with unfinished instructions");
  return rep;
}

}  // namespace fvirt
