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

#ifndef N2N_MODEL_ZOO_HPP_
#define N2N_MODEL_ZOO_HPP_

#include <map>
#include <string>
#include <vector>

#include "n2n/graph.hpp"

namespace n2n {

// Plain MLP: input -> (dense -> relu)* -> dense -> softmax.
// Nodes are named fc1, fc1_relu, ..., head, softmax.
Graph build_mlp(const std::vector<std::size_t>& input_shape,
                const std::vector<std::size_t>& hidden, std::size_t n_classes);

// Small Inception-style classifier exercising every surgery constraint:
// strided stem conv with batch norm, two modules of {1x1, 3x1 -> 1x3, 3x3}
// branches joined by concat, and a dense softmax head over the flattened
// maps. Branch widths are shared between the two modules.
struct ToyInceptionWidths {
  std::size_t stem = 8;
  std::size_t branch_a = 4;   // 1x1
  std::size_t branch_b = 6;   // 3x1 then 1x3
  std::size_t branch_c = 4;   // 3x3
};

Graph build_toy_inception(const std::vector<std::size_t>& input_shape,
                          const ToyInceptionWidths& widths,
                          std::size_t n_classes);

// Module branch nodes eligible for widening, with their widths under `w`.
std::map<std::string, std::size_t> toy_inception_widen_targets(
    const ToyInceptionWidths& w);

// Widths scaled by `factor`, rounded, floored at 1.
ToyInceptionWidths scale_widths(const ToyInceptionWidths& w, double factor);

}  // namespace n2n

#endif  // N2N_MODEL_ZOO_HPP_
