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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fvirt {

enum class LayerKind { Conv, DepthwiseConv, Pool };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);

// Shape-only description of one network layer. Fully connected layers are
// expressed as 1x1 convolutions over a 1x1 feature map.
struct LayerDescriptor {
  int layer_id = 0;
  LayerKind kind = LayerKind::Conv;
  int channel_in = 1;
  int channel_out = 1;
  int height_in = 1;
  int width_in = 1;
  int height_out = 1;
  int width_out = 1;
  int kernel_w = 1;
  int kernel_h = 1;
  int stride = 1;
  int padding = 0;    // horizontal (and default vertical) zero padding
  int padding_h = 0;  // vertical padding; equals `padding` for square kernels
  std::vector<int> predecessor_ids;

  bool operator==(const LayerDescriptor&) const = default;
};

struct ModelGraph {
  std::string name;
  std::vector<LayerDescriptor> layers;

  bool operator==(const ModelGraph&) const = default;
};

// Where a layer's input feature map comes from. A layer with several
// predecessors either concatenates them along channels (channel counts sum to
// channel_in) or adds them element-wise (each carries channel_in channels);
// in both cases the consumer loads every source itself.
struct InputSource {
  int layer_id = -1;      // -1: the network input image
  int channel_offset = 0; // first consumer input channel fed by this source
  int channels = 0;
};

int conv_output_extent(int in, int kernel, int stride, int padding);

// Throws ModelError(Semantic) naming the first offending layer.
void validate_model(const ModelGraph& graph);

// Parses the JSON model format and validates it.
ModelGraph parse_model(std::string_view text);

// Canonical JSON: sorted keys, integers only, two-space indentation.
std::string serialize_model(const ModelGraph& graph);

// 64-bit FNV-1a over the canonical serialization.
std::uint64_t model_hash(const ModelGraph& graph);

std::vector<InputSource> input_sources(const ModelGraph& graph, int layer_id);

// Byte counts assume 8-bit activations and weights.
std::int64_t weight_bytes(const LayerDescriptor& layer);
std::int64_t output_bytes(const LayerDescriptor& layer);
std::int64_t input_bytes(const LayerDescriptor& layer);
std::int64_t layer_macs(const LayerDescriptor& layer);

enum class BuiltinModel { VGG16, ResNet50, InceptionV3, MobileNet };

std::string_view to_string(BuiltinModel model);
std::optional<BuiltinModel> builtin_from_name(std::string_view name);
const std::vector<BuiltinModel>& all_builtin_models();

// Shape-accurate layer tables at 224x224 input.
ModelGraph builtin_model(BuiltinModel model);

// Accepts "builtin:NAME" or a path to a JSON model file.
ModelGraph load_model(const std::string& spec);

}  // namespace fvirt
