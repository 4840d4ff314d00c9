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

#include <random>

#include "fvirt/error.hpp"
#include "fvirt/model.hpp"
#include "test_models.hpp"

using namespace fvirt;
using fvirt::testing::conv;

TEST(ModelIr, SingleConvPreservesWidth) {
  ModelGraph g;
  g.layers.push_back(conv(0, 3, 64, 224, 224, 3, 1, 1, {}));
  EXPECT_NO_THROW(validate_model(g));
  EXPECT_EQ(g.layers[0].width_out, 224);
}

TEST(ModelIr, InconsistentWidthNamesLayer) {
  ModelGraph g;
  g.layers.push_back(conv(0, 3, 64, 224, 224, 3, 1, 1, {}));
  g.layers[0].width_out = 100;
  try {
    validate_model(g);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_EQ(e.kind(), ModelError::Kind::Semantic);
    EXPECT_EQ(e.layer_id(), 0);
  }
}

TEST(ModelIr, RejectsForwardPredecessor) {
  ModelGraph g;
  g.layers.push_back(conv(0, 8, 8, 8, 8, 1, 1, 0, {1}));
  g.layers.push_back(conv(1, 8, 8, 8, 8, 1, 1, 0, {0}));
  EXPECT_THROW(validate_model(g), ModelError);
}

TEST(ModelIr, RejectsPoolChannelChange) {
  ModelGraph g;
  g.layers.push_back(fvirt::testing::pool(0, 8, 8, 8, 2, 2, {}));
  g.layers[0].channel_out = 16;
  EXPECT_THROW(validate_model(g), ModelError);
}

TEST(ModelIr, RejectsSparseIds) {
  ModelGraph g;
  g.layers.push_back(conv(0, 8, 8, 8, 8, 1, 1, 0, {}));
  g.layers.push_back(conv(2, 8, 8, 8, 8, 1, 1, 0, {0}));
  EXPECT_THROW(validate_model(g), ModelError);
}

TEST(ModelIr, ConcatChannelsMustSum) {
  ModelGraph g;
  g.layers.push_back(conv(0, 8, 16, 8, 8, 1, 1, 0, {}));
  g.layers.push_back(conv(1, 8, 24, 8, 8, 1, 1, 0, {}));
  g.layers.push_back(conv(2, 40, 8, 8, 8, 1, 1, 0, {0, 1}));
  EXPECT_NO_THROW(validate_model(g));
  const auto src = input_sources(g, 2);
  ASSERT_EQ(src.size(), 2u);
  EXPECT_EQ(src[1].channel_offset, 16);
  EXPECT_EQ(src[1].channels, 24);
  g.layers[2].channel_in = 32;
  EXPECT_THROW(validate_model(g), ModelError);
}

TEST(ModelIr, MalformedJsonIsSyntaxError) {
  try {
    parse_model("{\"layers\": [");
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.kind(), ModelError::Kind::Syntax);
  }
  EXPECT_THROW(parse_model("{\"layers\": [{\"id\": 0}]}"), ModelError);
}

TEST(ModelIr, SerializeRoundTripsRandomModels) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const ModelGraph g = fvirt::testing::random_model(rng, 10);
    ASSERT_NO_THROW(validate_model(g)) << serialize_model(g);
    const ModelGraph back = parse_model(serialize_model(g));
    EXPECT_EQ(back, g);
    EXPECT_EQ(model_hash(back), model_hash(g));
  }
}

TEST(ModelIr, HashSeparatesModels) {
  EXPECT_NE(model_hash(builtin_model(BuiltinModel::ResNet50)),
            model_hash(builtin_model(BuiltinModel::VGG16)));
}

TEST(ModelIr, LoadModelAcceptsBuiltinNames) {
  EXPECT_EQ(load_model("builtin:MobileNet").layers.size(),
            builtin_model(BuiltinModel::MobileNet).layers.size());
  EXPECT_THROW(load_model("builtin:AlexNet"), Error);
}
