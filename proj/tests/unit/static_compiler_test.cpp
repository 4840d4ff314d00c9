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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fvirt/error.hpp"
#include "fvirt/static_compiler.hpp"
#include "test_models.hpp"

using namespace fvirt;
using fvirt::testing::conv;

namespace {

std::vector<int> sizes(const std::vector<TileSpec>& tiles) {
  std::vector<int> out;
  for (const TileSpec& t : tiles) out.push_back(t.size);
  return out;
}

ModelGraph one_layer(const LayerDescriptor& l) {
  ModelGraph g;
  g.name = "one";
  g.layers.push_back(l);
  return g;
}

struct Traffic {
  std::int64_t weights = 0;
  std::int64_t input = 0;
  std::int64_t saved = 0;
};

Traffic traffic(const InstructionFramePackage& ifp, const DdrLayout& ddr, int layer) {
  Traffic t;
  const std::int64_t wb = ddr.weight_base[static_cast<std::size_t>(layer)];
  const std::int64_t we = layer + 1 < static_cast<int>(ddr.weight_base.size())
                              ? ddr.weight_base[static_cast<std::size_t>(layer) + 1]
                              : ddr.output_base.front();
  for (const Instruction& in : ifp.instructions) {
    if (in.opcode == Opcode::Save) t.saved += in.transfer().length_bytes;
    if (in.opcode != Opcode::Load) continue;
    const auto& f = in.transfer();
    (f.ddr_addr >= wb && f.ddr_addr < we ? t.weights : t.input) += f.length_bytes;
  }
  return t;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(TileLayer, WidthEvenSplit) {
  const LayerDescriptor l = conv(0, 64, 64, 56, 56, 3, 1, 1, {});
  EXPECT_EQ(sizes(tile_layer(l, Method::Width, 4, 16)), (std::vector<int>{14, 14, 14, 14}));
  EXPECT_EQ(sizes(tile_layer(l, Method::Width, 3, 16)), (std::vector<int>{19, 19, 18}));
  const auto t = tile_layer(l, Method::Width, 3, 16);
  EXPECT_EQ(t[1].start, 19);
  EXPECT_EQ(t[2].start, 38);
}

TEST(TileLayer, OutputChannelGroups) {
  const LayerDescriptor l = conv(0, 16, 64, 8, 8, 1, 1, 0, {});
  EXPECT_EQ(sizes(tile_layer(l, Method::OutputChannel, 3, 16)), (std::vector<int>{32, 16, 16}));
  const LayerDescriptor small = conv(0, 16, 16, 8, 8, 1, 1, 0, {});
  EXPECT_EQ(sizes(tile_layer(small, Method::OutputChannel, 4, 16)), std::vector<int>{16});
  const LayerDescriptor odd = conv(0, 16, 40, 8, 8, 1, 1, 0, {});
  EXPECT_EQ(sizes(tile_layer(odd, Method::OutputChannel, 16, 16)), (std::vector<int>{16, 16, 8}));
}

TEST(TileLayer, NarrowLayerElidesEmptyTiles) {
  const LayerDescriptor l = conv(0, 16, 16, 7, 7, 1, 1, 0, {});
  EXPECT_EQ(tile_layer(l, Method::Width, 16, 16).size(), 7u);
}

TEST(GenerateIfp, ConvCountIsCeilOfHeightOverPp) {
  CoreConfig c = CoreConfig::small();
  c.pp = 4;
  const ModelGraph g = one_layer(conv(0, 16, 16, 8, 8, 3, 1, 1, {}));
  const DdrLayout ddr = DdrLayout::for_model(g);
  for (Method m : {Method::Width, Method::OutputChannel}) {
    for (const TileSpec& t : tile_layer(g.layers[0], m, 4, c.ocp)) {
      const auto ifp = generate_ifp(g, ddr, 0, m, 0, t, c);
      int convs = 0;
      for (const Instruction& in : ifp.instructions) {
        convs += in.opcode == Opcode::Conv;
        if (in.opcode == Opcode::Conv) {
          EXPECT_EQ(in.compute().width_out, m == Method::Width ? t.size : 8);
        }
      }
      EXPECT_EQ(convs, 2);
    }
  }
}

TEST(GenerateIfp, WidthTileLoadsHaloSlab) {
  const ModelGraph g = one_layer(conv(0, 64, 64, 56, 56, 3, 1, 1, {}));
  const DdrLayout ddr = DdrLayout::for_model(g);
  const auto tiles = tile_layer(g.layers[0], Method::Width, 4, 16);
  const auto ifp = generate_ifp(g, ddr, 0, Method::Width, 1, tiles[1], CoreConfig::small());
  const Traffic t = traffic(ifp, ddr, 0);
  EXPECT_EQ(t.input, std::int64_t{16} * 56 * 64);
  EXPECT_EQ(t.weights, weight_bytes(g.layers[0]));
  EXPECT_EQ(t.saved, std::int64_t{14} * 56 * 64);
  // the first tile is clipped at the left border
  const auto first = generate_ifp(g, ddr, 0, Method::Width, 0, tiles[0], CoreConfig::small());
  EXPECT_EQ(traffic(first, ddr, 0).input, std::int64_t{15} * 56 * 64);
}

TEST(GenerateIfp, OutputChannelTileLoadsWeightSlice) {
  const ModelGraph g = one_layer(conv(0, 64, 64, 28, 28, 3, 1, 1, {}));
  const DdrLayout ddr = DdrLayout::for_model(g);
  const auto tiles = tile_layer(g.layers[0], Method::OutputChannel, 4, 16);
  ASSERT_EQ(tiles.size(), 4u);
  const auto ifp = generate_ifp(g, ddr, 0, Method::OutputChannel, 2, tiles[2], CoreConfig::small());
  const Traffic t = traffic(ifp, ddr, 0);
  EXPECT_EQ(t.weights, weight_bytes(g.layers[0]) / 4);
  EXPECT_EQ(t.input, input_bytes(g.layers[0]));
  EXPECT_EQ(t.saved, output_bytes(g.layers[0]) / 4);
}

TEST(GenerateIfp, RejectsOutOfBoundsTile) {
  const ModelGraph g = one_layer(conv(0, 16, 16, 8, 8, 1, 1, 0, {}));
  const DdrLayout ddr = DdrLayout::for_model(g);
  EXPECT_THROW(generate_ifp(g, ddr, 0, Method::Width, 0, {Method::Width, 6, 4}, CoreConfig::small()),
               CompileError);
}

TEST(CompileStatic, SingleTileEqualsUntiled) {
  const ModelGraph g = fvirt::testing::single_conv_model();
  const StaticArtifact a = compile_static(g, CoreConfig::small(), 1);
  EXPECT_EQ(a.tile_count(0, Method::Width), 1);
  EXPECT_EQ(a.ifp(0, Method::Width, 0).instructions, a.untiled[0]);
}

TEST(CompileStatic, LutCoversEveryIfp) {
  const StaticArtifact a = compile_static(builtin_model(BuiltinModel::ResNet50),
                                          CoreConfig::small(), 16);
  for (const auto& [key, ifp] : a.ifps) EXPECT_TRUE(a.lut.contains(key));
  for (const LayerDescriptor& l : a.model.layers) {
    EXPECT_TRUE(a.lut.contains({l.layer_id, Method::Untiled, 0}));
  }
  EXPECT_EQ(a.lut.entries().size(), a.ifps.size() + a.model.layers.size());
  EXPECT_GT(a.wall_seconds, 0.0);
}

TEST(CompileStatic, EveryIfpPassesCheckStream) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const ModelGraph g = fvirt::testing::random_model(rng, 6);
    const StaticArtifact a = compile_static(g, CoreConfig::small(), 4);
    for (const auto& [key, ifp] : a.ifps) {
      InstructionStream s;
      s.instructions = ifp.instructions;
      std::vector<int> deps;
      for (const Instruction& in : s.instructions) deps.push_back(in.instr_id);
      s.instructions.push_back(make_system(static_cast<int>(deps.size()), deps, {0, 0, 1}));
      const ValidationReport r = check_stream(s, {a.core.bank_count, a.core.bank_bytes});
      ASSERT_TRUE(r.ok()) << r.violations.front().message;
    }
  }
}

TEST(CompileStatic, ArtifactPersistsDeterministically) {
  const ModelGraph g = builtin_model(BuiltinModel::MobileNet);
  const StaticArtifact a = compile_static(g, CoreConfig::small(), 4);
  const auto dir = std::filesystem::temp_directory_path() / "fvirt_static_test";
  std::filesystem::remove_all(dir);
  save_artifact(a, dir / "a");
  save_artifact(compile_static(g, CoreConfig::small(), 4), dir / "b");
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "meta.json") continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "a");
    EXPECT_EQ(read_all(e.path()), read_all(dir / "b" / rel)) << rel;
  }
  const StaticArtifact back = load_artifact(dir / "a");
  EXPECT_EQ(back.model, a.model);
  EXPECT_EQ(back.lut, a.lut);
  EXPECT_EQ(back.untiled, a.untiled);
  EXPECT_EQ(back.ifps.size(), a.ifps.size());
  EXPECT_EQ(back.ifp(3, Method::OutputChannel, 1).instructions,
            a.ifp(3, Method::OutputChannel, 1).instructions);
  std::filesystem::remove_all(dir);
}
