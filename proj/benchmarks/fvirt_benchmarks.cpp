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

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "fvirt/dynamic_compiler.hpp"
#include "fvirt/harness.hpp"
#include "fvirt/isa.hpp"
#include "fvirt/simulator.hpp"
#include "fvirt/static_compiler.hpp"

using namespace fvirt;

namespace {

const StaticArtifact& resnet() {
  static const StaticArtifact a =
      compile_static(builtin_model(BuiltinModel::ResNet50), CoreConfig::small(), 16);
  return a;
}

void BM_Allocate(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::vector<std::int64_t> lat(static_cast<std::size_t>(state.range(0)));
  for (auto& v : lat) v = 1 + static_cast<std::int64_t>(rng() % 100000);
  for (auto _ : state) benchmark::DoNotOptimize(allocate(lat, 16));
}
BENCHMARK(BM_Allocate)->Arg(16)->Arg(48)->Arg(128);

void BM_CompileStatic(benchmark::State& state) {
  const ModelGraph g = builtin_model(BuiltinModel::ResNet50);
  for (auto _ : state) benchmark::DoNotOptimize(compile_static(g, CoreConfig::small(), 16));
}
BENCHMARK(BM_CompileStatic)->Unit(benchmark::kMillisecond);

void BM_DynamicCompile(benchmark::State& state) {
  const StaticArtifact& a = resnet();
  const std::vector<int> cores = core_range(0, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dynamic_compile(a, 0, cores));
}
BENCHMARK(BM_DynamicCompile)->Arg(1)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
  const VirtualizedProgram p =
      dynamic_compile(resnet(), 0, core_range(0, static_cast<int>(state.range(0)))).program;
  const PoolConfig pool;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(pool, {p}));
}
BENCHMARK(BM_Simulate)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_EncodeStream(benchmark::State& state) {
  const VirtualizedProgram p = dynamic_compile(resnet(), 0, core_range(0, 4)).program;
  std::int64_t bytes = 0;
  for (auto _ : state) {
    const std::string text = encode_stream(p.streams[0].instructions);
    bytes += static_cast<std::int64_t>(text.size());
    benchmark::DoNotOptimize(text.data());
  }
  state.SetBytesProcessed(bytes);
}
BENCHMARK(BM_EncodeStream);

void BM_DecodeStream(benchmark::State& state) {
  const VirtualizedProgram p = dynamic_compile(resnet(), 0, core_range(0, 4)).program;
  const std::string text = encode_stream(p.streams[0].instructions);
  for (auto _ : state) benchmark::DoNotOptimize(decode_stream(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_DecodeStream);

}  // namespace

BENCHMARK_MAIN();
