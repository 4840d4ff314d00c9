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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fvirt/dynamic_compiler.hpp"
#include "fvirt/error.hpp"
#include "fvirt/harness.hpp"
#include "fvirt/isa.hpp"
#include "fvirt/simulator.hpp"
#include "fvirt/static_compiler.hpp"

namespace fs = std::filesystem;
using namespace fvirt;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;

// Raised for bad flag values that CLI11 cannot catch itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

// "4" means cores 0..3; "2,5,7" and "4-7" list them.
std::vector<int> parse_cores(const std::string& text) {
  std::vector<int> out;
  try {
    if (text.find_first_of(",-") == std::string::npos) {
      return core_range(0, std::stoi(text));
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        if (hi < lo) throw UsageError("bad core range " + item);
        for (int c = lo; c <= hi; ++c) out.push_back(c);
      }
    }
  } catch (const std::logic_error&) {
    throw UsageError("bad --cores value '" + text + "'");
  }
  if (out.empty()) throw UsageError("bad --cores value '" + text + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    throw UsageError("bad integer list '" + text + "'");
  }
  return out;
}

struct Common {
  std::string model = "builtin:ResNet50";
  std::string pool_path;
  std::string out = "out";
  int max_tiles = 16;
  double eff = -1.0;
  std::uint64_t seed = 1;

  PoolConfig pool() const {
    PoolConfig p = pool_path.empty() ? PoolConfig{} : pool_from_json(read_text(pool_path));
    if (eff > 0.0) p.mem.eff = eff;
    p.validate();
    return p;
  }
};

int cmd_compile_static(const Common& c) {
  const PoolConfig pool = c.pool();
  const StaticArtifact a = compile_static(load_model(c.model), pool.core, c.max_tiles, pool.mem);
  save_artifact(a, c.out);
  std::cout << a.model.name << ": " << a.ifps.size() << " IFPs in " << a.wall_seconds
            << " s -> " << c.out << "\n";
  return kOk;
}

int cmd_compile_dynamic(const std::string& artifact_dir, int user, const std::string& cores,
                        const Common& c) {
  const StaticArtifact a = load_artifact(artifact_dir);
  DynamicResult r = dynamic_compile(a, user, parse_cores(cores));
  int bad = 0;
  for (const InstructionStream& s : r.program.streams) {
    const ValidationReport rep = check_stream(s, {a.core.bank_count, a.core.bank_bytes});
    for (const Violation& v : rep.violations) {
      std::cerr << "core " << s.core_id << ": " << v.message << "\n";
      ++bad;
    }
  }
  save_program(r.program, c.out, &r.report);
  std::cout << "t_recompile " << r.report.t_recompile * 1e3 << " ms, t_transfer "
            << r.report.t_transfer * 1e3 << " ms, t_context " << r.report.t_context * 1e3
            << " ms -> " << c.out << "\n";
  return bad ? kInvalid : kOk;
}

int report_verification(const VerificationReport& v, const fs::path& out) {
  nlohmann::ordered_json j{{"ok", v.ok()}, {"violations", v.violations}};
  write_text(out / "verification.json", j.dump(2) + "\n");
  for (const std::string& m : v.violations) std::cerr << "violation: " << m << "\n";
  return v.ok() ? kOk : kInvalid;
}

int cmd_simulate(const std::string& scenario_path, const Common& c) {
  Scenario s = parse_scenario(read_text(scenario_path));
  if (c.eff > 0.0) s.pool.mem.eff = c.eff;
  ArtifactCache cache;
  const ScenarioResult r = run_scenario(s, cache);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "trace.csv", r.trace.to_csv());
  write_text(fs::path(c.out) / "summary.json", r.trace.summary_json());
  for (const auto& [user, fps] : r.trace.throughput_fps) {
    std::cout << "user " << user << ": " << fps << " fps\n";
  }
  return report_verification(r.verification, c.out);
}

int cmd_verify(const std::string& program_dir, const std::string& scenario_path,
               const Common& c) {
  if (program_dir.empty() == scenario_path.empty()) {
    throw UsageError("verify needs exactly one of --program or --scenario");
  }
  if (!scenario_path.empty()) {
    Scenario s = parse_scenario(read_text(scenario_path));
    ArtifactCache cache;
    const ScenarioResult r = run_scenario(s, cache);
    fs::create_directories(c.out);
    return report_verification(r.verification, c.out);
  }
  const PoolConfig pool = c.pool();
  const VirtualizedProgram p = load_program(program_dir);
  int bad = 0;
  for (const InstructionStream& s : p.streams) {
    const ValidationReport rep =
        check_stream(s, {pool.core.bank_count, pool.core.bank_bytes});
    for (const Violation& v : rep.violations) {
      std::cerr << "core " << s.core_id << ": " << v.message << "\n";
      ++bad;
    }
  }
  std::cout << p.streams.size() << " streams, " << bad << " violations\n";
  return bad ? kInvalid : kOk;
}

int cmd_experiment(const std::string& kind, const std::vector<std::string>& models,
                   const std::string& cores, const std::string& tasks, int horizon,
                   const Common& c) {
  ExperimentSpec spec;
  auto k = experiment_kind_from_string(kind);
  if (!k) throw UsageError("unknown experiment kind '" + kind + "'");
  spec.kind = *k;
  spec.pool = c.pool();
  spec.max_tiles = c.max_tiles;
  spec.seed = c.seed;
  spec.horizon = horizon;
  if (!models.empty()) spec.models = models;
  if (!cores.empty()) {
    if (spec.kind == ExperimentKind::Isolation) {
      spec.shares = parse_int_list(cores);
    } else {
      spec.core_counts = parse_int_list(cores);
    }
  }
  if (!tasks.empty()) spec.task_counts = parse_int_list(tasks);
  try {
    spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  ArtifactCache cache;
  const ExperimentReport rep = run_experiment(spec, cache);
  fs::create_directories(c.out);
  const std::string name(to_string(spec.kind));
  write_text(fs::path(c.out) / (name + ".csv"), rep.to_csv());
  if (const std::string layers = rep.layers_csv(); !layers.empty()) {
    write_text(fs::path(c.out) / (name + "_layers.csv"), layers);
  }
  std::cout << rep.to_csv();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tenant accelerator virtualization toolkit"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&c](CLI::App* sub) {
    sub->add_option("--pool", c.pool_path, "Pool JSON");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--max-tiles", c.max_tiles, "Tiles per layer and method")
        ->check(CLI::PositiveNumber);
    sub->add_option("--eff", c.eff, "DDR bandwidth efficiency")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--seed", c.seed, "Seed for randomized scenarios");
  };

  auto* cs = app.add_subcommand("compile-static", "Compile every IFP and the latency table");
  add_common(cs);
  cs->add_option("--model", c.model, "builtin:NAME or model JSON");

  std::string artifact, cores = "1", tasks, kind, program, scenario;
  int user = 0, horizon = 2;
  std::vector<std::string> models;

  auto* cd = app.add_subcommand("compile-dynamic", "Assemble a program for a core set");
  add_common(cd);
  cd->add_option("--artifact", artifact, "Static artifact directory")->required();
  cd->add_option("--user", user, "User id")->check(CLI::NonNegativeNumber);
  cd->add_option("--cores", cores, "Core count or list (e.g. 4, 0-3, 1,5)");

  auto* sim = app.add_subcommand("simulate", "Simulate a scenario and verify the trace");
  add_common(sim);
  sim->add_option("--scenario", scenario, "Scenario JSON")->required();

  auto* ex = app.add_subcommand("experiment", "Run an experiment sweep");
  add_common(ex);
  ex->add_option("--kind", kind, "single, multi, isolation or context")->required();
  ex->add_option("--model", models, "Model(s); repeat for mixes");
  std::string sweep_cores;
  ex->add_option("--cores", sweep_cores, "Core counts (or shares for isolation), comma list");
  ex->add_option("--tasks", tasks, "Task counts, comma list");
  ex->add_option("--horizon", horizon, "Inferences per session")->check(CLI::PositiveNumber);

  auto* ver = app.add_subcommand("verify", "Check a program directory or a scenario trace");
  add_common(ver);
  ver->add_option("--program", program, "Program directory");
  ver->add_option("--scenario", scenario, "Scenario JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*cs) return cmd_compile_static(c);
    if (*cd) return cmd_compile_dynamic(artifact, user, cores, c);
    if (*sim) return cmd_simulate(scenario, c);
    if (*ex) return cmd_experiment(kind, models, sweep_cores, tasks, horizon, c);
    if (*ver) return cmd_verify(program, scenario, c);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kUsage;
}
