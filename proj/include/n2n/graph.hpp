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

#ifndef N2N_GRAPH_HPP_
#define N2N_GRAPH_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "n2n/rng.hpp"
#include "n2n/tensor.hpp"

namespace n2n {

using NodeId = int32_t;

// Layer node kinds. Activation shapes below are per sample; the batch axis
// is prepended at evaluation time.
struct InputKind {
  std::vector<std::size_t> shape;  // per-sample, e.g. {1,16,16} or {2}
};
struct DenseKind {
  std::size_t in = 0, out = 0;  // weight stored [in x out], bias [out]
};
struct Conv2DKind {
  ConvGeometry geom;  // kernel [K,C,kh,kw], bias [K]
};
struct ReLUKind {};
struct MaxoutKind {
  std::size_t pieces = 2;
};
struct BatchNormKind {
  std::size_t channels = 0;
  double epsilon = 1e-5;
};
struct ConcatKind {};  // channel axis only
struct DropoutKind {
  double rate = 0.5;
};
struct SoftmaxOutputKind {};

using NodeKind = std::variant<InputKind, DenseKind, Conv2DKind, ReLUKind,
                              MaxoutKind, BatchNormKind, ConcatKind, DropoutKind,
                              SoftmaxOutputKind>;

const char* kind_name(const NodeKind& kind);

struct Node {
  NodeId id = -1;
  std::string name;
  NodeKind kind;
  std::vector<NodeId> preds;
};

// DAG of layer nodes. Nodes are appended with all predecessors already
// present, so node order is a valid topological order by construction.
class Graph {
 public:
  NodeId add(const std::string& name, NodeKind kind, std::vector<NodeId> preds);

  void set_output(NodeId id);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(std::size_t(id)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<NodeId>& outputs() const { return outputs_; }

  std::optional<NodeId> find(const std::string& name) const;
  NodeId require(const std::string& name) const;

  // Consumers of each node, in ascending id order.
  std::vector<std::vector<NodeId>> successors() const;

  // Structural checks beyond what add() enforces: exactly one Input,
  // one output set, every non-Input reachable rule counts.
  void validate() const;

 private:
  std::vector<Node> nodes_;
  std::vector<NodeId> outputs_;
  std::unordered_map<std::string, NodeId> by_name_;
};

Graph clone(const Graph& g);
std::vector<NodeId> topological_order(const Graph& g);

// Per-sample activation shape of every node. Throws ShapeError naming the
// offending node when predecessor shapes are incompatible.
std::vector<std::vector<std::size_t>> infer_shapes(const Graph& g);

// Named parameter tensors per node.
//   Dense:     weight [in x out], bias [out]
//   Conv2D:    kernel [K,C,kh,kw], bias [K]
//   BatchNorm: gamma, beta, running_mean, running_var  (all [C])
class ParamSet {
 public:
  using NodeParams = std::map<std::string, Tensor>;

  bool has(NodeId id) const { return params_.count(id) != 0; }
  bool has(NodeId id, const std::string& name) const;
  Tensor& at(NodeId id, const std::string& name);
  const Tensor& at(NodeId id, const std::string& name) const;
  void set(NodeId id, const std::string& name, Tensor t);

  const std::map<NodeId, NodeParams>& all() const { return params_; }
  std::map<NodeId, NodeParams>& all() { return params_; }

  std::size_t total_coords() const;

  // Re-keys node ids through id_map (old id -> new id); used by surgery
  // that renumbers the graph.
  ParamSet rekeyed(const std::vector<NodeId>& id_map) const;

 private:
  std::map<NodeId, NodeParams> params_;
};

ParamSet clone(const ParamSet& p);

// He-normal weights (std = sqrt(2/fan_in)), zero biases, identity-like
// batch-norm parameters.
ParamSet init_params(const Graph& g, Dtype dtype, Rng& rng);

// Verifies that every parametric node carries exactly its required tensors
// with the inferred shapes and a uniform dtype; returns that dtype.
Dtype check_params(const Graph& g, const ParamSet& p);

enum class Mode { train, eval };

struct ForwardResult {
  std::vector<Tensor> activations;  // indexed by NodeId
  // Batch moments of each BatchNorm node in train mode (mean, var).
  std::map<NodeId, std::pair<Tensor, Tensor>> bn_moments;
  // Scaled keep masks of each Dropout node in train mode.
  std::map<NodeId, Tensor> dropout_masks;
};

// Topological evaluation. x is [N, ...input shape]. Dropout needs rng in
// train mode; BatchNorm uses batch moments in train mode and running
// statistics in eval mode.
ForwardResult forward(const Graph& g, const ParamSet& p, const Tensor& x,
                      Mode mode, Rng* rng = nullptr);

struct BackwardResult {
  double loss = 0.0;
  ParamSet grads;
  ForwardResult fwd;
};

// Softmax cross-entropy loss (mean over batch) and reverse-mode gradients
// for every parameter tensor. The graph output must be a SoftmaxOutput.
BackwardResult backward(const Graph& g, const ParamSet& p, const Tensor& x,
                        const std::vector<int64_t>& labels, Mode mode,
                        Rng* rng = nullptr);

// Loss only, via the same code path as backward().
double eval_loss(const Graph& g, const ParamSet& p, const Tensor& x,
                 const std::vector<int64_t>& labels, Mode mode,
                 Rng* rng = nullptr);

// Fraction of rows whose output argmax equals the label.
double accuracy(const Graph& g, const ParamSet& p, const Tensor& x,
                const std::vector<int64_t>& labels);

}  // namespace n2n

#endif  // N2N_GRAPH_HPP_
