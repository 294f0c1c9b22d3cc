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

#ifndef N2N_MODEL_IO_HPP_
#define N2N_MODEL_IO_HPP_

#include <optional>
#include <string>
#include <vector>

#include "n2n/graph.hpp"

namespace n2n {

// Optimizer slots captured mid-run so training can resume bit-exactly.
struct TrainState {
  std::string optimizer;  // "sgd" or "rmsprop"
  std::size_t step = 0;
  ParamSet slots;
};

// Single-file container: a text magic line with the format version, the
// byte length of a JSON header (graph structure plus a tensor directory
// with shapes and blob offsets), then a little-endian packed tensor blob
// covered by a CRC-32 checksum recorded in the header. Writes go through a
// temp file and a rename.
void save_model(const Graph& g, const ParamSet& p,
                const std::optional<TrainState>& state, const std::string& path);

struct LoadedModel {
  Graph graph;
  ParamSet params;
  std::optional<TrainState> state;
};

LoadedModel load_model(const std::string& path);

// IDX image/label pair (big-endian dimension fields, magic 0x803/0x801).
// Pixels are scaled to [0,1]; images come back as [N,1,H,W] f32.
struct IdxData {
  Tensor images;
  std::vector<int64_t> labels;
};
IdxData load_idx(const std::string& images_path, const std::string& labels_path);

struct Dataset {
  Tensor train_x;
  std::vector<int64_t> train_labels;
  Tensor eval_x;
  std::vector<int64_t> eval_labels;
  std::size_t n_classes = 0;
};

struct SyntheticSpec {
  uint64_t seed = 0;
  std::size_t n_classes = 3;
  std::vector<std::size_t> input_shape = {1, 16, 16};
  std::size_t n_train = 2048;
  std::size_t n_eval = 512;
};

// Seeded synthetic classification data. Images live on a low-dimensional
// smooth basis; labels come from a fixed random labeler network (two
// hidden layers of width 32) with class-balanced, margin-filtered
// acceptance, so the task is learnable by construction and the class
// histogram is near uniform. Train and eval splits are disjoint by index.
Dataset synthetic(const SyntheticSpec& spec);

// Splits an IDX pair into train/eval by index (eval takes the tail).
Dataset dataset_from_idx(const IdxData& data, std::size_t n_eval);

}  // namespace n2n

#endif  // N2N_MODEL_IO_HPP_
