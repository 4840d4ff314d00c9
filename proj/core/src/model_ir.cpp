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

#include "fvirt/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fvirt/error.hpp"
#include "json.hpp"

namespace fvirt {
namespace {

using nlohmann::json;

ModelError semantic(int layer, const std::string& msg) {
  return ModelError(ModelError::Kind::Semantic, layer,
                    "layer " + std::to_string(layer) + ": " + msg);
}

int required_int(const json& obj, const char* key, int layer_index) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ModelError(ModelError::Kind::Syntax, layer_index,
                     "layer " + std::to_string(layer_index) +
                         ": missing field '" + key + "'");
  }
  if (!it->is_number_integer()) {
    throw ModelError(ModelError::Kind::Syntax, layer_index,
                     "layer " + std::to_string(layer_index) + ": field '" +
                         key + "' must be an integer");
  }
  return it->get<int>();
}

void check_spatial_pred(const LayerDescriptor& layer,
                        const LayerDescriptor& pred) {
  if (pred.height_out == layer.height_in && pred.width_out == layer.width_in) {
    return;
  }
  const bool flatten = layer.predecessor_ids.size() == 1 &&
                       layer.height_in == 1 && layer.width_in == 1 &&
                       static_cast<std::int64_t>(layer.channel_in) ==
                           output_bytes(pred);
  if (!flatten) {
    throw semantic(layer.layer_id,
                   "input " + std::to_string(layer.height_in) + "x" +
                       std::to_string(layer.width_in) +
                       " does not match predecessor " +
                       std::to_string(pred.layer_id) + " output " +
                       std::to_string(pred.height_out) + "x" +
                       std::to_string(pred.width_out));
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv:
      return "Conv";
    case LayerKind::DepthwiseConv:
      return "DepthwiseConv";
    case LayerKind::Pool:
      return "Pool";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  if (name == "Conv") return LayerKind::Conv;
  if (name == "DepthwiseConv") return LayerKind::DepthwiseConv;
  if (name == "Pool") return LayerKind::Pool;
  return std::nullopt;
}

int conv_output_extent(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0 || stride <= 0) return 0;
  return span / stride + 1;
}

void validate_model(const ModelGraph& graph) {
  if (graph.layers.empty()) {
    throw ModelError(ModelError::Kind::Semantic, -1, "model has no layers");
  }
  const LayerDescriptor* first_root = nullptr;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerDescriptor& l = graph.layers[i];
    if (l.layer_id != static_cast<int>(i)) {
      throw semantic(l.layer_id, "layer ids must be dense and ordered; "
                                 "expected " + std::to_string(i));
    }
    const int dims[] = {l.channel_in, l.channel_out, l.height_in, l.width_in,
                        l.height_out, l.width_out, l.kernel_w, l.kernel_h,
                        l.stride};
    for (int d : dims) {
      if (d < 1) throw semantic(l.layer_id, "dimensions must be >= 1");
    }
    if (l.padding < 0 || l.padding_h < 0) {
      throw semantic(l.layer_id, "padding must be >= 0");
    }
    const int w = conv_output_extent(l.width_in, l.kernel_w, l.stride, l.padding);
    const int h =
        conv_output_extent(l.height_in, l.kernel_h, l.stride, l.padding_h);
    if (w != l.width_out) {
      throw semantic(l.layer_id, "declared width_out " +
                                     std::to_string(l.width_out) +
                                     " but shape formula gives " +
                                     std::to_string(w));
    }
    if (h != l.height_out) {
      throw semantic(l.layer_id, "declared height_out " +
                                     std::to_string(l.height_out) +
                                     " but shape formula gives " +
                                     std::to_string(h));
    }
    if (l.kind != LayerKind::Conv && l.channel_in != l.channel_out) {
      throw semantic(l.layer_id, std::string(to_string(l.kind)) +
                                     " layer requires channel_in == channel_out");
    }

    if (l.predecessor_ids.empty()) {
      if (first_root == nullptr) {
        first_root = &l;
      } else if (first_root->channel_in != l.channel_in ||
                 first_root->height_in != l.height_in ||
                 first_root->width_in != l.width_in) {
        throw semantic(l.layer_id,
                       "layer without predecessors must read the network "
                       "input shape of layer " +
                           std::to_string(first_root->layer_id));
      }
      continue;
    }
    std::set<int> seen;
    std::int64_t channel_sum = 0;
    bool all_equal = true;
    for (int p : l.predecessor_ids) {
      if (p < 0 || p >= l.layer_id) {
        throw semantic(l.layer_id, "predecessor " + std::to_string(p) +
                                       " does not refer to an earlier layer");
      }
      if (!seen.insert(p).second) {
        throw semantic(l.layer_id,
                       "duplicate predecessor " + std::to_string(p));
      }
      const LayerDescriptor& pred = graph.layers[p];
      check_spatial_pred(l, pred);
      channel_sum += pred.channel_out;
      all_equal = all_equal && pred.channel_out == l.channel_in;
    }
    const bool flatten = l.predecessor_ids.size() == 1 && l.height_in == 1 &&
                         l.width_in == 1 &&
                         (graph.layers[l.predecessor_ids[0]].height_out != 1 ||
                          graph.layers[l.predecessor_ids[0]].width_out != 1);
    if (!flatten && channel_sum != l.channel_in && !all_equal) {
      throw semantic(l.layer_id,
                     "channel_in " + std::to_string(l.channel_in) +
                         " matches neither the concatenation (" +
                         std::to_string(channel_sum) +
                         ") nor an element-wise add of its predecessors");
    }
  }
}

ModelGraph parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelError(ModelError::Kind::Syntax, -1,
                     std::string("malformed model file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("layers") ||
      !doc["layers"].is_array()) {
    throw ModelError(ModelError::Kind::Syntax, -1,
                     "model file needs an object with a 'layers' array");
  }
  ModelGraph graph;
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) {
      throw ModelError(ModelError::Kind::Syntax, -1, "'name' must be a string");
    }
    graph.name = it->get<std::string>();
  }
  int index = 0;
  for (const json& item : doc["layers"]) {
    if (!item.is_object()) {
      throw ModelError(ModelError::Kind::Syntax, index,
                       "layer " + std::to_string(index) + ": not an object");
    }
    LayerDescriptor l;
    l.layer_id = required_int(item, "id", index);
    auto kind_it = item.find("kind");
    if (kind_it == item.end() || !kind_it->is_string()) {
      throw ModelError(ModelError::Kind::Syntax, l.layer_id,
                       "layer " + std::to_string(l.layer_id) +
                           ": missing string field 'kind'");
    }
    auto kind = layer_kind_from_string(kind_it->get<std::string>());
    if (!kind) {
      throw ModelError(ModelError::Kind::Syntax, l.layer_id,
                       "layer " + std::to_string(l.layer_id) +
                           ": unknown kind '" + kind_it->get<std::string>() +
                           "'");
    }
    l.kind = *kind;
    l.channel_in = required_int(item, "cin", l.layer_id);
    l.channel_out = required_int(item, "cout", l.layer_id);
    l.height_in = required_int(item, "hin", l.layer_id);
    l.width_in = required_int(item, "win", l.layer_id);
    l.height_out = required_int(item, "hout", l.layer_id);
    l.width_out = required_int(item, "wout", l.layer_id);
    l.kernel_w = required_int(item, "kw", l.layer_id);
    l.kernel_h = required_int(item, "kh", l.layer_id);
    l.stride = required_int(item, "stride", l.layer_id);
    l.padding = required_int(item, "pad", l.layer_id);
    l.padding_h =
        item.contains("padh") ? required_int(item, "padh", l.layer_id) : l.padding;
    auto preds = item.find("preds");
    if (preds == item.end() || !preds->is_array()) {
      throw ModelError(ModelError::Kind::Syntax, l.layer_id,
                       "layer " + std::to_string(l.layer_id) +
                           ": missing array field 'preds'");
    }
    for (const json& p : *preds) {
      if (!p.is_number_integer()) {
        throw ModelError(ModelError::Kind::Syntax, l.layer_id,
                         "layer " + std::to_string(l.layer_id) +
                             ": predecessor ids must be integers");
      }
      l.predecessor_ids.push_back(p.get<int>());
    }
    graph.layers.push_back(std::move(l));
    ++index;
  }
  validate_model(graph);
  return graph;
}

std::string serialize_model(const ModelGraph& graph) {
  json doc;
  doc["name"] = graph.name;
  json layers = json::array();
  for (const LayerDescriptor& l : graph.layers) {
    json item;
    item["id"] = l.layer_id;
    item["kind"] = std::string(to_string(l.kind));
    item["cin"] = l.channel_in;
    item["cout"] = l.channel_out;
    item["hin"] = l.height_in;
    item["win"] = l.width_in;
    item["hout"] = l.height_out;
    item["wout"] = l.width_out;
    item["kw"] = l.kernel_w;
    item["kh"] = l.kernel_h;
    item["stride"] = l.stride;
    item["pad"] = l.padding;
    if (l.padding_h != l.padding) item["padh"] = l.padding_h;
    item["preds"] = l.predecessor_ids;
    layers.push_back(std::move(item));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

std::uint64_t model_hash(const ModelGraph& graph) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_model(graph)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<InputSource> input_sources(const ModelGraph& graph, int layer_id) {
  const LayerDescriptor& l = graph.layers.at(layer_id);
  std::vector<InputSource> out;
  if (l.predecessor_ids.empty()) {
    out.push_back({-1, 0, l.channel_in});
    return out;
  }
  std::int64_t sum = 0;
  for (int p : l.predecessor_ids) sum += graph.layers[p].channel_out;
  if (l.predecessor_ids.size() == 1 || sum != l.channel_in) {
    // Single source, flatten, or element-wise add of full-width operands.
    for (int p : l.predecessor_ids) out.push_back({p, 0, l.channel_in});
    return out;
  }
  int offset = 0;
  for (int p : l.predecessor_ids) {
    out.push_back({p, offset, graph.layers[p].channel_out});
    offset += graph.layers[p].channel_out;
  }
  return out;
}

std::int64_t weight_bytes(const LayerDescriptor& l) {
  const std::int64_t k = static_cast<std::int64_t>(l.kernel_w) * l.kernel_h;
  switch (l.kind) {
    case LayerKind::Conv:
      return k * l.channel_in * l.channel_out;
    case LayerKind::DepthwiseConv:
      return k * l.channel_out;
    case LayerKind::Pool:
      return 0;
  }
  return 0;
}

std::int64_t output_bytes(const LayerDescriptor& l) {
  return static_cast<std::int64_t>(l.channel_out) * l.height_out * l.width_out;
}

std::int64_t input_bytes(const LayerDescriptor& l) {
  return static_cast<std::int64_t>(l.channel_in) * l.height_in * l.width_in;
}

std::int64_t layer_macs(const LayerDescriptor& l) {
  return weight_bytes(l) * l.height_out * l.width_out;
}

ModelGraph load_model(const std::string& spec) {
  constexpr std::string_view kPrefix = "builtin:";
  if (spec.rfind(kPrefix, 0) == 0) {
    auto which = builtin_from_name(std::string_view(spec).substr(kPrefix.size()));
    if (!which) throw Error("unknown builtin model '" + spec + "'");
    return builtin_model(*which);
  }
  std::ifstream in(spec);
  if (!in) throw Error("cannot open model file '" + spec + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace fvirt
