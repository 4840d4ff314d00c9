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

#include "fvirt/model.hpp"

using namespace fvirt;

namespace {

struct Totals {
  int convs = 0;
  int fcs = 0;
  int pools = 0;
  std::int64_t weights = 0;
  std::int64_t macs = 0;
};

Totals totals(const ModelGraph& g) {
  Totals t;
  for (const LayerDescriptor& l : g.layers) {
    if (l.kind == LayerKind::Pool) {
      ++t.pools;
      continue;
    }
    // FC layers are 1x1 convolutions over a 1x1 map
    const bool fc = l.height_in == 1 && l.width_in == 1 && l.kernel_w == 1 &&
                    l.height_out == 1 && l.kind == LayerKind::Conv && l.channel_out >= 1000;
    (fc ? t.fcs : t.convs)++;
    t.weights += weight_bytes(l);
    t.macs += layer_macs(l);
  }
  return t;
}

}  // namespace

// Reference numbers produced by tests/oracles/model_totals.py from the
// torchvision definitions (MobileNet from the v1 layer table).
TEST(BuiltinModels, Vgg16MatchesReferenceTotals) {
  const ModelGraph g = builtin_model(BuiltinModel::VGG16);
  const Totals t = totals(g);
  EXPECT_EQ(g.layers.size(), 21u);
  EXPECT_EQ(t.pools, 5);
  EXPECT_EQ(t.convs + t.fcs, 16);
  EXPECT_EQ(t.weights, 138344128);
  EXPECT_EQ(t.macs, 15470264320);
}

TEST(BuiltinModels, ResNet50MatchesReferenceTotals) {
  const ModelGraph g = builtin_model(BuiltinModel::ResNet50);
  const Totals t = totals(g);
  EXPECT_EQ(g.layers.size(), 56u);
  EXPECT_EQ(t.convs + t.fcs, 54);
  EXPECT_EQ(t.weights, 25502912);
  EXPECT_EQ(t.macs, 4089184256);
  const LayerDescriptor& stem = g.layers.front();
  EXPECT_EQ(stem.kernel_w, 7);
  EXPECT_EQ(stem.channel_out, 64);
  EXPECT_EQ(stem.width_in, 224);
}

TEST(BuiltinModels, InceptionV3MatchesReferenceTotals) {
  const ModelGraph g = builtin_model(BuiltinModel::InceptionV3);
  const Totals t = totals(g);
  EXPECT_EQ(g.layers.size(), 109u);
  EXPECT_EQ(t.convs + t.fcs, 95);
  EXPECT_EQ(t.weights, 23799136);
  EXPECT_EQ(t.macs, 2837921120);
  int branching = 0;
  for (const LayerDescriptor& l : g.layers) branching += l.predecessor_ids.size() > 1;
  EXPECT_GT(branching, 0);
}

TEST(BuiltinModels, MobileNetMatchesReferenceTotals) {
  const ModelGraph g = builtin_model(BuiltinModel::MobileNet);
  const Totals t = totals(g);
  EXPECT_EQ(g.layers.size(), 29u);
  EXPECT_EQ(t.convs + t.fcs, 28);
  EXPECT_EQ(t.weights, 4209088);
  EXPECT_EQ(t.macs, 568740352);
  int dw = 0;
  for (const LayerDescriptor& l : g.layers) dw += l.kind == LayerKind::DepthwiseConv;
  EXPECT_EQ(dw, 13);
}

TEST(BuiltinModels, AllValidate) {
  for (BuiltinModel m : all_builtin_models()) {
    EXPECT_NO_THROW(validate_model(builtin_model(m))) << to_string(m);
  }
}
