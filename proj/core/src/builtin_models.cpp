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

#include <array>

#include "fvirt/error.hpp"
#include "fvirt/model.hpp"

namespace fvirt {
namespace {

// A tensor produced inside the graph: the layers whose outputs form it
// (several ids mean a channel concat or an element-wise add) plus its shape.
struct Tensor {
  std::vector<int> ids;
  int c = 0;
  int h = 0;
  int w = 0;
};

class NetBuilder {
 public:
  NetBuilder(std::string name, int c, int h, int w) : input_{{}, c, h, w} {
    graph_.name = std::move(name);
  }

  const Tensor& input() const { return input_; }

  Tensor conv(const Tensor& in, int cout, int kh, int kw, int stride,
              int pad_h, int pad_w) {
    return add_layer(LayerKind::Conv, in, in.c, cout, kh, kw, stride, pad_h,
                     pad_w);
  }
  Tensor conv(const Tensor& in, int cout, int k, int stride = 1, int pad = 0) {
    return conv(in, cout, k, k, stride, pad, pad);
  }
  Tensor depthwise(const Tensor& in, int k, int stride, int pad) {
    return add_layer(LayerKind::DepthwiseConv, in, in.c, in.c, k, k, stride,
                     pad, pad);
  }
  Tensor pool(const Tensor& in, int k, int stride, int pad = 0) {
    return add_layer(LayerKind::Pool, in, in.c, in.c, k, k, stride, pad, pad);
  }
  // Fully connected layer as a 1x1 convolution over a 1x1 map.
  Tensor fc(const Tensor& in, int cout) {
    Tensor flat = in;
    flat.c = in.c * in.h * in.w;
    flat.h = 1;
    flat.w = 1;
    return add_layer(LayerKind::Conv, flat, flat.c, cout, 1, 1, 1, 0, 0);
  }

  static Tensor concat(const std::vector<Tensor>& parts) {
    Tensor out{{}, 0, parts.front().h, parts.front().w};
    for (const Tensor& p : parts) {
      out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
      out.c += p.c;
    }
    return out;
  }

  // Residual add. The consumer loads two operands: the newest producer on the
  // main path and the newest producer on the shortcut path.
  static Tensor add(const Tensor& main, const Tensor& shortcut) {
    return Tensor{{main.ids.front(), shortcut.ids.front()}, main.c, main.h,
                  main.w};
  }

  ModelGraph finish() {
    validate_model(graph_);
    return std::move(graph_);
  }

 private:
  Tensor add_layer(LayerKind kind, const Tensor& in, int cin, int cout, int kh,
                   int kw, int stride, int pad_h, int pad_w) {
    LayerDescriptor l;
    l.layer_id = static_cast<int>(graph_.layers.size());
    l.kind = kind;
    l.channel_in = cin;
    l.channel_out = cout;
    l.height_in = in.h;
    l.width_in = in.w;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.stride = stride;
    l.padding = pad_w;
    l.padding_h = pad_h;
    l.height_out = conv_output_extent(in.h, kh, stride, pad_h);
    l.width_out = conv_output_extent(in.w, kw, stride, pad_w);
    l.predecessor_ids = in.ids;
    graph_.layers.push_back(l);
    return Tensor{{l.layer_id}, cout, l.height_out, l.width_out};
  }

  ModelGraph graph_;
  Tensor input_;
};

ModelGraph vgg16() {
  NetBuilder b("VGG16", 3, 224, 224);
  Tensor x = b.input();
  const std::array<std::array<int, 3>, 5> blocks = {
      {{64, 64, 0}, {128, 128, 0}, {256, 256, 256}, {512, 512, 512},
       {512, 512, 512}}};
  for (const auto& block : blocks) {
    for (int c : block) {
      if (c != 0) x = b.conv(x, c, 3, 1, 1);
    }
    x = b.pool(x, 2, 2);
  }
  x = b.fc(x, 4096);
  x = b.fc(x, 4096);
  b.fc(x, 1000);
  return b.finish();
}

ModelGraph resnet50() {
  NetBuilder b("ResNet50", 3, 224, 224);
  Tensor x = b.conv(b.input(), 64, 7, 2, 3);
  x = b.pool(x, 3, 2, 1);
  struct Stage {
    int width;
    int blocks;
    int stride;
  };
  const std::array<Stage, 4> stages = {{{64, 3, 1}, {128, 4, 2}, {256, 6, 2},
                                        {512, 3, 2}}};
  for (const Stage& s : stages) {
    for (int i = 0; i < s.blocks; ++i) {
      const int stride = i == 0 ? s.stride : 1;
      Tensor y = b.conv(x, s.width, 1);
      y = b.conv(y, s.width, 3, stride, 1);
      y = b.conv(y, 4 * s.width, 1);
      Tensor shortcut = i == 0 ? b.conv(x, 4 * s.width, 1, stride) : x;
      x = NetBuilder::add(y, shortcut);
    }
  }
  x = b.pool(x, 7, 1);
  b.fc(x, 1000);
  return b.finish();
}

Tensor inception_a(NetBuilder& b, const Tensor& in, int pool_features) {
  Tensor b1 = b.conv(in, 64, 1);
  Tensor b5 = b.conv(b.conv(in, 48, 1), 64, 5, 1, 2);
  Tensor b3 = b.conv(in, 64, 1);
  b3 = b.conv(b3, 96, 3, 1, 1);
  b3 = b.conv(b3, 96, 3, 1, 1);
  Tensor bp = b.conv(b.pool(in, 3, 1, 1), pool_features, 1);
  return NetBuilder::concat({b1, b5, b3, bp});
}

Tensor inception_b(NetBuilder& b, const Tensor& in) {
  Tensor b3 = b.conv(in, 384, 3, 2, 0);
  Tensor bd = b.conv(in, 64, 1);
  bd = b.conv(bd, 96, 3, 1, 1);
  bd = b.conv(bd, 96, 3, 2, 0);
  Tensor bp = b.pool(in, 3, 2);
  return NetBuilder::concat({b3, bd, bp});
}

Tensor inception_c(NetBuilder& b, const Tensor& in, int c7) {
  Tensor b1 = b.conv(in, 192, 1);
  Tensor b7 = b.conv(in, c7, 1);
  b7 = b.conv(b7, c7, 1, 7, 1, 0, 3);
  b7 = b.conv(b7, 192, 7, 1, 1, 3, 0);
  Tensor bd = b.conv(in, c7, 1);
  bd = b.conv(bd, c7, 7, 1, 1, 3, 0);
  bd = b.conv(bd, c7, 1, 7, 1, 0, 3);
  bd = b.conv(bd, c7, 7, 1, 1, 3, 0);
  bd = b.conv(bd, 192, 1, 7, 1, 0, 3);
  Tensor bp = b.conv(b.pool(in, 3, 1, 1), 192, 1);
  return NetBuilder::concat({b1, b7, bd, bp});
}

Tensor inception_d(NetBuilder& b, const Tensor& in) {
  Tensor b3 = b.conv(b.conv(in, 192, 1), 320, 3, 2, 0);
  Tensor b7 = b.conv(in, 192, 1);
  b7 = b.conv(b7, 192, 1, 7, 1, 0, 3);
  b7 = b.conv(b7, 192, 7, 1, 1, 3, 0);
  b7 = b.conv(b7, 192, 3, 2, 0);
  Tensor bp = b.pool(in, 3, 2);
  return NetBuilder::concat({b3, b7, bp});
}

Tensor inception_e(NetBuilder& b, const Tensor& in) {
  Tensor b1 = b.conv(in, 320, 1);
  Tensor b3 = b.conv(in, 384, 1);
  Tensor b3a = b.conv(b3, 384, 1, 3, 1, 0, 1);
  Tensor b3b = b.conv(b3, 384, 3, 1, 1, 1, 0);
  Tensor bd = b.conv(in, 448, 1);
  bd = b.conv(bd, 384, 3, 1, 1);
  Tensor bda = b.conv(bd, 384, 1, 3, 1, 0, 1);
  Tensor bdb = b.conv(bd, 384, 3, 1, 1, 1, 0);
  Tensor bp = b.conv(b.pool(in, 3, 1, 1), 192, 1);
  return NetBuilder::concat({b1, b3a, b3b, bda, bdb, bp});
}

ModelGraph inception_v3() {
  NetBuilder b("InceptionV3", 3, 224, 224);
  Tensor x = b.conv(b.input(), 32, 3, 2, 0);
  x = b.conv(x, 32, 3, 1, 0);
  x = b.conv(x, 64, 3, 1, 1);
  x = b.pool(x, 3, 2);
  x = b.conv(x, 80, 1);
  x = b.conv(x, 192, 3, 1, 0);
  x = b.pool(x, 3, 2);
  x = inception_a(b, x, 32);
  x = inception_a(b, x, 64);
  x = inception_a(b, x, 64);
  x = inception_b(b, x);
  x = inception_c(b, x, 128);
  x = inception_c(b, x, 160);
  x = inception_c(b, x, 160);
  x = inception_c(b, x, 192);
  x = inception_d(b, x);
  x = inception_e(b, x);
  x = inception_e(b, x);
  x = b.pool(x, x.h, 1);
  b.fc(x, 1000);
  return b.finish();
}

ModelGraph mobilenet_v1() {
  NetBuilder b("MobileNet", 3, 224, 224);
  Tensor x = b.conv(b.input(), 32, 3, 2, 1);
  const std::array<std::array<int, 2>, 13> cfg = {{{64, 1},
                                                   {128, 2},
                                                   {128, 1},
                                                   {256, 2},
                                                   {256, 1},
                                                   {512, 2},
                                                   {512, 1},
                                                   {512, 1},
                                                   {512, 1},
                                                   {512, 1},
                                                   {512, 1},
                                                   {1024, 2},
                                                   {1024, 1}}};
  for (const auto& [cout, stride] : cfg) {
    x = b.depthwise(x, 3, stride, 1);
    x = b.conv(x, cout, 1);
  }
  x = b.pool(x, 7, 1);
  b.fc(x, 1000);
  return b.finish();
}

}  // namespace

std::string_view to_string(BuiltinModel model) {
  switch (model) {
    case BuiltinModel::VGG16:
      return "VGG16";
    case BuiltinModel::ResNet50:
      return "ResNet50";
    case BuiltinModel::InceptionV3:
      return "InceptionV3";
    case BuiltinModel::MobileNet:
      return "MobileNet";
  }
  return "?";
}

std::optional<BuiltinModel> builtin_from_name(std::string_view name) {
  for (BuiltinModel m : all_builtin_models()) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

const std::vector<BuiltinModel>& all_builtin_models() {
  static const std::vector<BuiltinModel> models = {
      BuiltinModel::VGG16, BuiltinModel::ResNet50, BuiltinModel::InceptionV3,
      BuiltinModel::MobileNet};
  return models;
}

ModelGraph builtin_model(BuiltinModel model) {
  switch (model) {
    case BuiltinModel::VGG16:
      return vgg16();
    case BuiltinModel::ResNet50:
      return resnet50();
    case BuiltinModel::InceptionV3:
      return inception_v3();
    case BuiltinModel::MobileNet:
      return mobilenet_v1();
  }
  throw Error("unknown builtin model");
}

}  // namespace fvirt
