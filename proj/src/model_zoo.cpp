/* Copyright 2026 The n2n Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "n2n/model_zoo.hpp"

#include <cmath>

namespace n2n {

Graph build_mlp(const std::vector<std::size_t>& input_shape,
                const std::vector<std::size_t>& hidden, std::size_t n_classes) {
  Graph g;
  NodeId prev = g.add("input", InputKind{input_shape}, {});
  std::size_t in = 1;
  for (std::size_t e : input_shape) in *= e;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string base = "fc" + std::to_string(i + 1);
    prev = g.add(base, DenseKind{in, hidden[i]}, {prev});
    prev = g.add(base + "_relu", ReLUKind{}, {prev});
    in = hidden[i];
  }
  prev = g.add("head", DenseKind{in, n_classes}, {prev});
  g.set_output(g.add("softmax", SoftmaxOutputKind{}, {prev}));
  return g;
}

namespace {

NodeId conv_bn_relu(Graph& g, const std::string& base, NodeId in,
                    std::size_t in_ch, std::size_t out_ch, std::size_t kh,
                    std::size_t kw, std::size_t stride) {
  ConvGeometry geom;
  geom.kernel_h = kh;
  geom.kernel_w = kw;
  geom.stride_h = geom.stride_w = stride;
  geom.pad_h = (kh - 1) / 2;
  geom.pad_w = (kw - 1) / 2;
  geom.in_channels = in_ch;
  geom.out_channels = out_ch;
  NodeId id = g.add(base, Conv2DKind{geom}, {in});
  id = g.add(base + "_bn", BatchNormKind{out_ch, 1e-5}, {id});
  return g.add(base + "_relu", ReLUKind{}, {id});
}

}  // namespace

Graph build_toy_inception(const std::vector<std::size_t>& input_shape,
                          const ToyInceptionWidths& w, std::size_t n_classes) {
  if (input_shape.size() != 3) {
    throw ValueError("toy inception expects a [C,H,W] input shape");
  }
  Graph g;
  const NodeId input = g.add("input", InputKind{input_shape}, {});
  NodeId cur = conv_bn_relu(g, "stem", input, input_shape[0], w.stem, 3, 3, 2);
  std::size_t in_ch = w.stem;
  for (int m = 1; m <= 2; ++m) {
    const std::string p = "m" + std::to_string(m) + "_";
    const NodeId a = conv_bn_relu(g, p + "a", cur, in_ch, w.branch_a, 1, 1, 1);
    NodeId b = conv_bn_relu(g, p + "b1", cur, in_ch, w.branch_b, 3, 1, 1);
    b = conv_bn_relu(g, p + "b2", b, w.branch_b, w.branch_b, 1, 3, 1);
    const NodeId c = conv_bn_relu(g, p + "c", cur, in_ch, w.branch_c, 3, 3, 1);
    cur = g.add(p + "concat", ConcatKind{}, {a, b, c});
    in_ch = w.branch_a + w.branch_b + w.branch_c;
  }
  const std::size_t oh = (input_shape[1] + 2 - 3) / 2 + 1;
  const std::size_t ow = (input_shape[2] + 2 - 3) / 2 + 1;
  const NodeId head =
      g.add("head", DenseKind{in_ch * oh * ow, n_classes}, {cur});
  g.set_output(g.add("softmax", SoftmaxOutputKind{}, {head}));
  return g;
}

std::map<std::string, std::size_t> toy_inception_widen_targets(
    const ToyInceptionWidths& w) {
  std::map<std::string, std::size_t> t;
  for (int m = 1; m <= 2; ++m) {
    const std::string p = "m" + std::to_string(m) + "_";
    t[p + "a"] = w.branch_a;
    t[p + "b1"] = w.branch_b;
    t[p + "b2"] = w.branch_b;
    t[p + "c"] = w.branch_c;
  }
  return t;
}

ToyInceptionWidths scale_widths(const ToyInceptionWidths& w, double factor) {
  const auto scale = [factor](std::size_t v) {
    return std::max<std::size_t>(1, std::size_t(std::lround(double(v) * factor)));
  };
  ToyInceptionWidths out;
  out.stem = w.stem;  // only module branches scale, the stem stays fixed
  out.branch_a = scale(w.branch_a);
  out.branch_b = scale(w.branch_b);
  out.branch_c = scale(w.branch_c);
  return out;
}

}  // namespace n2n
