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

#include "n2n/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace n2n {

const char* kind_name(const NodeKind& kind) {
  struct Visitor {
    const char* operator()(const InputKind&) const { return "input"; }
    const char* operator()(const DenseKind&) const { return "dense"; }
    const char* operator()(const Conv2DKind&) const { return "conv2d"; }
    const char* operator()(const ReLUKind&) const { return "relu"; }
    const char* operator()(const MaxoutKind&) const { return "maxout"; }
    const char* operator()(const BatchNormKind&) const { return "batch_norm"; }
    const char* operator()(const ConcatKind&) const { return "concat"; }
    const char* operator()(const DropoutKind&) const { return "dropout"; }
    const char* operator()(const SoftmaxOutputKind&) const { return "softmax_output"; }
  };
  return std::visit(Visitor{}, kind);
}

NodeId Graph::add(const std::string& name, NodeKind kind,
                  std::vector<NodeId> preds) {
  if (name.empty()) throw ValueError("node name must be non-empty");
  if (by_name_.count(name)) throw ValueError("duplicate node name: " + name);
  const NodeId id = NodeId(nodes_.size());
  for (NodeId p : preds) {
    if (p < 0 || p >= id) {
      throw ValueError("node " + name + ": predecessor " + std::to_string(p) +
                       " must already be in the graph");
    }
  }
  const bool is_input = std::holds_alternative<InputKind>(kind);
  const bool is_concat = std::holds_alternative<ConcatKind>(kind);
  if (is_input && !preds.empty()) {
    throw ValueError("input node " + name + " cannot have predecessors");
  }
  if (!is_input && preds.empty()) {
    throw ValueError("node " + name + " needs at least one predecessor");
  }
  if (is_concat && preds.size() < 2) {
    throw ValueError("concat node " + name + " needs >= 2 predecessors");
  }
  if (!is_input && !is_concat && preds.size() != 1) {
    throw ValueError("node " + name + " takes exactly one predecessor");
  }
  nodes_.push_back(Node{id, name, std::move(kind), std::move(preds)});
  by_name_[name] = id;
  return id;
}

void Graph::set_output(NodeId id) {
  if (id < 0 || std::size_t(id) >= nodes_.size()) {
    throw ValueError("set_output: unknown node id " + std::to_string(id));
  }
  outputs_.push_back(id);
}

std::optional<NodeId> Graph::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

NodeId Graph::require(const std::string& name) const {
  auto id = find(name);
  if (!id) throw ValueError("no node named '" + name + "'");
  return *id;
}

std::vector<std::vector<NodeId>> Graph::successors() const {
  std::vector<std::vector<NodeId>> succ(nodes_.size());
  for (const Node& n : nodes_) {
    for (NodeId p : n.preds) succ[std::size_t(p)].push_back(n.id);
  }
  return succ;
}

void Graph::validate() const {
  std::size_t inputs = 0;
  for (const Node& n : nodes_) {
    if (std::holds_alternative<InputKind>(n.kind)) ++inputs;
  }
  if (inputs != 1) {
    throw ValueError("graph must have exactly one input node, found " +
                     std::to_string(inputs));
  }
  if (outputs_.size() != 1) {
    throw ValueError("graph must declare exactly one output node, found " +
                     std::to_string(outputs_.size()));
  }
}

Graph clone(const Graph& g) { return g; }

std::vector<NodeId> topological_order(const Graph& g) {
  // Nodes are appended predecessors-first, so id order is topological.
  std::vector<NodeId> order(g.size());
  std::iota(order.begin(), order.end(), NodeId(0));
  return order;
}

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_to_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void shape_fail(const Node& n, const std::string& why) {
  throw ShapeError("shape inference failed at node '" + n.name + "' (" +
                   kind_name(n.kind) + "): " + why);
}

}  // namespace

std::vector<std::vector<std::size_t>> infer_shapes(const Graph& g) {
  std::vector<std::vector<std::size_t>> shapes(g.size());
  for (const Node& n : g.nodes()) {
    const auto pred_shape = [&](std::size_t i) -> const std::vector<std::size_t>& {
      return shapes[std::size_t(n.preds.at(i))];
    };
    if (const auto* k = std::get_if<InputKind>(&n.kind)) {
      if (k->shape.empty()) shape_fail(n, "input shape must have rank >= 1");
      for (std::size_t e : k->shape) {
        if (e == 0) shape_fail(n, "input shape has a zero extent");
      }
      shapes[std::size_t(n.id)] = k->shape;
    } else if (const auto* k = std::get_if<DenseKind>(&n.kind)) {
      const auto& in = pred_shape(0);
      if (shape_numel(in) != k->in) {
        shape_fail(n, "expects " + std::to_string(k->in) + " inputs, got " +
                          shape_to_str(in));
      }
      shapes[std::size_t(n.id)] = {k->out};
    } else if (const auto* k = std::get_if<Conv2DKind>(&n.kind)) {
      const auto& in = pred_shape(0);
      if (in.size() != 3) shape_fail(n, "expects [C,H,W] input, got " + shape_to_str(in));
      if (in[0] != k->geom.in_channels) {
        shape_fail(n, "expects " + std::to_string(k->geom.in_channels) +
                          " channels, got " + std::to_string(in[0]));
      }
      try {
        shapes[std::size_t(n.id)] = {k->geom.out_channels, k->geom.out_h(in[1]),
                                     k->geom.out_w(in[2])};
      } catch (const ShapeError& e) {
        shape_fail(n, e.what());
      }
    } else if (std::holds_alternative<ReLUKind>(n.kind) ||
               std::holds_alternative<DropoutKind>(n.kind)) {
      shapes[std::size_t(n.id)] = pred_shape(0);
    } else if (const auto* k = std::get_if<MaxoutKind>(&n.kind)) {
      auto in = pred_shape(0);
      if (k->pieces == 0 || in[0] % k->pieces != 0) {
        shape_fail(n, std::to_string(in[0]) + " channels not divisible by " +
                          std::to_string(k->pieces) + " pieces");
      }
      in[0] /= k->pieces;
      shapes[std::size_t(n.id)] = in;
    } else if (const auto* k = std::get_if<BatchNormKind>(&n.kind)) {
      const auto& in = pred_shape(0);
      if (in[0] != k->channels) {
        shape_fail(n, "normalizes " + std::to_string(k->channels) +
                          " channels, input has " + std::to_string(in[0]));
      }
      shapes[std::size_t(n.id)] = in;
    } else if (std::holds_alternative<ConcatKind>(n.kind)) {
      auto out = pred_shape(0);
      for (std::size_t i = 1; i < n.preds.size(); ++i) {
        const auto& in = pred_shape(i);
        if (in.size() != out.size() ||
            !std::equal(in.begin() + 1, in.end(), out.begin() + 1)) {
          shape_fail(n, "branch shapes " + shape_to_str(out) + " and " +
                            shape_to_str(in) + " differ beyond the channel axis");
        }
        out[0] += in[0];
      }
      shapes[std::size_t(n.id)] = out;
    } else if (std::holds_alternative<SoftmaxOutputKind>(n.kind)) {
      const auto& in = pred_shape(0);
      if (in.size() != 1) {
        shape_fail(n, "expects flat logits, got " + shape_to_str(in));
      }
      shapes[std::size_t(n.id)] = in;
    }
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// ParamSet
// ---------------------------------------------------------------------------

bool ParamSet::has(NodeId id, const std::string& name) const {
  auto it = params_.find(id);
  return it != params_.end() && it->second.count(name) != 0;
}

Tensor& ParamSet::at(NodeId id, const std::string& name) {
  auto it = params_.find(id);
  if (it == params_.end() || !it->second.count(name)) {
    throw ValueError("missing parameter '" + name + "' for node " +
                     std::to_string(id));
  }
  return it->second.at(name);
}

const Tensor& ParamSet::at(NodeId id, const std::string& name) const {
  auto it = params_.find(id);
  if (it == params_.end() || !it->second.count(name)) {
    throw ValueError("missing parameter '" + name + "' for node " +
                     std::to_string(id));
  }
  return it->second.at(name);
}

void ParamSet::set(NodeId id, const std::string& name, Tensor t) {
  params_[id][name] = std::move(t);
}

std::size_t ParamSet::total_coords() const {
  std::size_t n = 0;
  for (const auto& [id, tensors] : params_) {
    for (const auto& [name, t] : tensors) n += t.numel();
  }
  return n;
}

ParamSet ParamSet::rekeyed(const std::vector<NodeId>& id_map) const {
  ParamSet out;
  for (const auto& [id, tensors] : params_) {
    const NodeId nid = id_map.at(std::size_t(id));
    for (const auto& [name, t] : tensors) out.set(nid, name, t);
  }
  return out;
}

ParamSet clone(const ParamSet& p) { return p; }

ParamSet init_params(const Graph& g, Dtype dtype, Rng& rng) {
  ParamSet p;
  for (const Node& n : g.nodes()) {
    if (const auto* k = std::get_if<DenseKind>(&n.kind)) {
      Tensor w({k->in, k->out}, dtype);
      const double std = std::sqrt(2.0 / double(k->in));
      for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, rng.normal() * std);
      p.set(n.id, "weight", std::move(w));
      p.set(n.id, "bias", Tensor({k->out}, dtype));
    } else if (const auto* k = std::get_if<Conv2DKind>(&n.kind)) {
      const auto& geo = k->geom;
      Tensor w({geo.out_channels, geo.in_channels, geo.kernel_h, geo.kernel_w},
               dtype);
      const double fan_in = double(geo.in_channels * geo.kernel_h * geo.kernel_w);
      const double std = std::sqrt(2.0 / fan_in);
      for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, rng.normal() * std);
      p.set(n.id, "kernel", std::move(w));
      p.set(n.id, "bias", Tensor({geo.out_channels}, dtype));
    } else if (const auto* k = std::get_if<BatchNormKind>(&n.kind)) {
      p.set(n.id, "gamma", Tensor::full({k->channels}, dtype, 1.0));
      p.set(n.id, "beta", Tensor({k->channels}, dtype));
      p.set(n.id, "running_mean", Tensor({k->channels}, dtype));
      p.set(n.id, "running_var", Tensor::full({k->channels}, dtype, 1.0));
    }
  }
  return p;
}

Dtype check_params(const Graph& g, const ParamSet& p) {
  const auto shapes = infer_shapes(g);
  std::optional<Dtype> dtype;
  const auto expect = [&](const Node& n, const std::string& name,
                          const std::vector<std::size_t>& shape) {
    const Tensor& t = p.at(n.id, name);
    if (t.shape() != shape) {
      throw ShapeError("node '" + n.name + "' parameter '" + name + "' has shape " +
                       t.shape_str() + ", expected " + shape_to_str(shape));
    }
    if (dtype && t.dtype() != *dtype) {
      throw ShapeError("node '" + n.name + "' parameter '" + name +
                       "' has inconsistent dtype");
    }
    dtype = t.dtype();
  };
  for (const Node& n : g.nodes()) {
    if (const auto* k = std::get_if<DenseKind>(&n.kind)) {
      expect(n, "weight", {k->in, k->out});
      expect(n, "bias", {k->out});
    } else if (const auto* k = std::get_if<Conv2DKind>(&n.kind)) {
      const auto& geo = k->geom;
      expect(n, "kernel", {geo.out_channels, geo.in_channels, geo.kernel_h,
                           geo.kernel_w});
      expect(n, "bias", {geo.out_channels});
    } else if (const auto* k = std::get_if<BatchNormKind>(&n.kind)) {
      for (const char* name : {"gamma", "beta", "running_mean", "running_var"}) {
        expect(n, name, {k->channels});
      }
    }
  }
  return dtype.value_or(Dtype::f32);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

Tensor reshape_copy(const Tensor& t, std::vector<std::size_t> shape) {
  Tensor out(std::move(shape), t.dtype());
  if (out.numel() != t.numel()) {
    throw ShapeError("reshape: element count mismatch");
  }
  if (t.dtype() == Dtype::f32) {
    auto src = t.data<float>();
    auto dst = out.data<float>();
    std::copy(src.begin(), src.end(), dst.begin());
  } else {
    auto src = t.data<double>();
    auto dst = out.data<double>();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

std::vector<std::size_t> with_batch(std::size_t n,
                                    const std::vector<std::size_t>& per_sample) {
  std::vector<std::size_t> s;
  s.reserve(per_sample.size() + 1);
  s.push_back(n);
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

template <typename T>
Tensor batchnorm_apply(const Tensor& x, const Tensor& mean, const Tensor& var,
                       const Tensor& gamma, const Tensor& beta, double epsilon) {
  Tensor out(x.shape(), x.dtype());
  auto px = x.data<T>();
  auto py = out.data<T>();
  auto pm = mean.data<T>();
  auto pv = var.data<T>();
  auto pg = gamma.data<T>();
  auto pb = beta.data<T>();
  const std::size_t n = x.extent(0), c = x.extent(1);
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < x.rank(); ++ax) post *= x.extent(ax);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T inv_std = T(1) / std::sqrt(pv[ch] + T(epsilon));
      const T g = pg[ch], b = pb[ch], m = pm[ch];
      const std::size_t base = (i * c + ch) * post;
      for (std::size_t s = 0; s < post; ++s) {
        py[base + s] = g * (px[base + s] - m) * inv_std + b;
      }
    }
  }
  return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  const Tensor& first = *parts.front();
  const std::size_t n = first.extent(0);
  std::size_t total_c = 0;
  for (const Tensor* t : parts) total_c += t->extent(1);
  std::vector<std::size_t> shape = first.shape();
  shape[1] = total_c;
  Tensor out(shape, first.dtype());
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < first.rank(); ++ax) post *= first.extent(ax);
  const auto copy_part = [&](auto dst) {
    std::size_t c_off = 0;
    for (const Tensor* t : parts) {
      const std::size_t c = t->extent(1);
      if (first.dtype() == Dtype::f32) {
        auto src = t->data<float>();
        for (std::size_t i = 0; i < n; ++i) {
          std::copy(src.begin() + (i * c) * post, src.begin() + (i * c + c) * post,
                    dst.begin() + (i * total_c + c_off) * post);
        }
      } else {
        auto src = t->data<double>();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c * post; ++j) {
            dst[(i * total_c + c_off) * post + j] = src[(i * c) * post + j];
          }
        }
      }
      c_off += c;
    }
  };
  if (first.dtype() == Dtype::f32) {
    copy_part(out.data<float>());
  } else {
    copy_part(out.data<double>());
  }
  return out;
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, Dtype dtype,
                    double rate, Rng& rng) {
  Tensor mask(shape, dtype);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask.set(i, rng.uniform01() >= rate ? keep_scale : 0.0);
  }
  return mask;
}

}  // namespace

ForwardResult forward(const Graph& g, const ParamSet& p, const Tensor& x,
                      Mode mode, Rng* rng) {
  g.validate();
  const auto shapes = infer_shapes(g);
  const std::size_t batch = x.extent(0);
  ForwardResult result;
  result.activations.resize(g.size());

  for (const Node& n : g.nodes()) {
    const std::size_t idx = std::size_t(n.id);
    const auto pred_act = [&](std::size_t i) -> const Tensor& {
      return result.activations[std::size_t(n.preds.at(i))];
    };
    if (std::holds_alternative<InputKind>(n.kind)) {
      const auto expected = with_batch(batch, shapes[idx]);
      if (x.shape() != expected) {
        throw ShapeError("input tensor " + x.shape_str() +
                         " does not match input node shape " +
                         shape_to_str(expected));
      }
      result.activations[idx] = x;
    } else if (const auto* k = std::get_if<DenseKind>(&n.kind)) {
      Tensor in = pred_act(0);
      if (in.rank() != 2) in = reshape_copy(in, {batch, k->in});
      result.activations[idx] = add_bias(matmul(in, p.at(n.id, "weight")),
                                         p.at(n.id, "bias"));
    } else if (const auto* k = std::get_if<Conv2DKind>(&n.kind)) {
      result.activations[idx] = add_bias(
          conv2d(pred_act(0), p.at(n.id, "kernel"), k->geom), p.at(n.id, "bias"));
    } else if (std::holds_alternative<ReLUKind>(n.kind)) {
      result.activations[idx] = relu(pred_act(0));
    } else if (const auto* k = std::get_if<MaxoutKind>(&n.kind)) {
      result.activations[idx] = maxout(pred_act(0), k->pieces);
    } else if (const auto* k = std::get_if<BatchNormKind>(&n.kind)) {
      const Tensor& in = pred_act(0);
      const Tensor& gamma = p.at(n.id, "gamma");
      const Tensor& beta = p.at(n.id, "beta");
      Tensor mean, var;
      if (mode == Mode::train) {
        auto [m, v] = batch_moments(in);
        mean = std::move(m);
        var = std::move(v);
        result.bn_moments[n.id] = {mean, var};
      } else {
        mean = p.at(n.id, "running_mean");
        var = p.at(n.id, "running_var");
      }
      result.activations[idx] =
          in.dtype() == Dtype::f32
              ? batchnorm_apply<float>(in, mean, var, gamma, beta, k->epsilon)
              : batchnorm_apply<double>(in, mean, var, gamma, beta, k->epsilon);
    } else if (std::holds_alternative<ConcatKind>(n.kind)) {
      std::vector<const Tensor*> parts;
      parts.reserve(n.preds.size());
      for (std::size_t i = 0; i < n.preds.size(); ++i) parts.push_back(&pred_act(i));
      result.activations[idx] = concat_channels(parts);
    } else if (const auto* k = std::get_if<DropoutKind>(&n.kind)) {
      if (mode == Mode::eval) {
        result.activations[idx] = pred_act(0);
      } else {
        if (k->rate < 0.0 || k->rate >= 1.0) {
          throw ValueError("dropout rate must be in [0,1) at node " + n.name);
        }
        if (!rng) {
          throw ValueError("train-mode forward through dropout needs an rng");
        }
        Tensor mask = dropout_mask(pred_act(0).shape(), pred_act(0).dtype(),
                                   k->rate, *rng);
        result.activations[idx] = elementwise_mul(pred_act(0), mask);
        result.dropout_masks[n.id] = std::move(mask);
      }
    } else if (std::holds_alternative<SoftmaxOutputKind>(n.kind)) {
      result.activations[idx] = softmax(pred_act(0));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void accumulate(Tensor& into, const Tensor& from) {
  auto dst = into.data<T>();
  auto src = from.data<T>();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void accumulate_grad(Tensor& slot, const Tensor& grad) {
  if (slot.is_null()) {
    slot = grad;
    return;
  }
  if (slot.dtype() == Dtype::f32) {
    accumulate<float>(slot, grad);
  } else {
    accumulate<double>(slot, grad);
  }
}

template <typename T>
Tensor conv2d_grad_kernel(const Tensor& input, const Tensor& dy,
                          const ConvGeometry& g) {
  const std::size_t N = input.extent(0), C = input.extent(1),
                    H = input.extent(2), W = input.extent(3);
  const std::size_t K = dy.extent(1), OH = dy.extent(2), OW = dy.extent(3);
  Tensor dk({K, C, g.kernel_h, g.kernel_w}, input.dtype());
  auto px = input.data<T>();
  auto pdy = dy.data<T>();
  auto pdk = dk.data<T>();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t r = 0; r < g.kernel_h; ++r) {
        for (std::size_t s = 0; s < g.kernel_w; ++s) {
          T acc = 0;
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t oh = 0; oh < OH; ++oh) {
              const std::ptrdiff_t ih = std::ptrdiff_t(oh * g.stride_h + r) -
                                        std::ptrdiff_t(g.pad_h);
              if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
              for (std::size_t ow = 0; ow < OW; ++ow) {
                const std::ptrdiff_t iw = std::ptrdiff_t(ow * g.stride_w + s) -
                                          std::ptrdiff_t(g.pad_w);
                if (iw < 0 || iw >= std::ptrdiff_t(W)) continue;
                acc += pdy[((n * K + k) * OH + oh) * OW + ow] *
                       px[((n * C + c) * H + std::size_t(ih)) * W + std::size_t(iw)];
              }
            }
          }
          pdk[((k * C + c) * g.kernel_h + r) * g.kernel_w + s] = acc;
        }
      }
    }
  }
  return dk;
}

template <typename T>
Tensor conv2d_grad_input(const Tensor& kernel, const Tensor& dy,
                         const ConvGeometry& g, std::size_t H, std::size_t W) {
  const std::size_t N = dy.extent(0), K = dy.extent(1), OH = dy.extent(2),
                    OW = dy.extent(3);
  const std::size_t C = kernel.extent(1);
  Tensor dx({N, C, H, W}, dy.dtype());
  auto pw = kernel.data<T>();
  auto pdy = dy.data<T>();
  auto pdx = dx.data<T>();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const T grad = pdy[((n * K + k) * OH + oh) * OW + ow];
          const std::ptrdiff_t base_h =
              std::ptrdiff_t(oh * g.stride_h) - std::ptrdiff_t(g.pad_h);
          const std::ptrdiff_t base_w =
              std::ptrdiff_t(ow * g.stride_w) - std::ptrdiff_t(g.pad_w);
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t r = 0; r < g.kernel_h; ++r) {
              const std::ptrdiff_t ih = base_h + std::ptrdiff_t(r);
              if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
              for (std::size_t s = 0; s < g.kernel_w; ++s) {
                const std::ptrdiff_t iw = base_w + std::ptrdiff_t(s);
                if (iw < 0 || iw >= std::ptrdiff_t(W)) continue;
                pdx[((n * C + c) * H + std::size_t(ih)) * W + std::size_t(iw)] +=
                    grad * pw[((k * C + c) * g.kernel_h + r) * g.kernel_w + s];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

// Per-channel reduction sum of dy over batch and spatial axes.
template <typename T>
Tensor channel_sum(const Tensor& dy) {
  const std::size_t n = dy.extent(0), c = dy.rank() == 1 ? dy.extent(0) : dy.extent(1);
  Tensor out({c}, dy.dtype());
  auto src = dy.data<T>();
  auto dst = out.data<T>();
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < dy.rank(); ++ax) post *= dy.extent(ax);
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * post;
      for (std::size_t s = 0; s < post; ++s) acc += src[base + s];
    }
    dst[ch] = acc;
  }
  return out;
}

template <typename T>
void batchnorm_backward(const Tensor& x, const Tensor& dy, const Tensor& mean,
                        const Tensor& var, const Tensor& gamma, double epsilon,
                        bool train_stats, Tensor& dx, Tensor& dgamma,
                        Tensor& dbeta) {
  const std::size_t n = x.extent(0), c = x.extent(1);
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < x.rank(); ++ax) post *= x.extent(ax);
  const T count = T(n * post);
  auto px = x.data<T>();
  auto pdy = dy.data<T>();
  auto pm = mean.data<T>();
  auto pv = var.data<T>();
  auto pg = gamma.data<T>();
  auto pdx = dx.data<T>();
  auto pdg = dgamma.data<T>();
  auto pdb = dbeta.data<T>();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T inv_std = T(1) / std::sqrt(pv[ch] + T(epsilon));
    T sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * post;
      for (std::size_t s = 0; s < post; ++s) {
        const T xhat = (px[base + s] - pm[ch]) * inv_std;
        sum_dy += pdy[base + s];
        sum_dy_xhat += pdy[base + s] * xhat;
      }
    }
    pdg[ch] = sum_dy_xhat;
    pdb[ch] = sum_dy;
    const T scale = pg[ch] * inv_std;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * post;
      for (std::size_t s = 0; s < post; ++s) {
        if (train_stats) {
          const T xhat = (px[base + s] - pm[ch]) * inv_std;
          pdx[base + s] = scale * (pdy[base + s] - sum_dy / count -
                                   xhat * sum_dy_xhat / count);
        } else {
          pdx[base + s] = scale * pdy[base + s];
        }
      }
    }
  }
}

template <typename T>
Tensor maxout_backward(const Tensor& x, const Tensor& dy, std::size_t pieces) {
  Tensor dx(x.shape(), x.dtype());
  auto px = x.data<T>();
  auto pdy = dy.data<T>();
  auto pdx = dx.data<T>();
  const std::size_t rank1 = x.rank() == 1 ? 1 : 0;
  const std::size_t n = rank1 ? 1 : x.extent(0);
  const std::size_t c = rank1 ? x.extent(0) : x.extent(1);
  std::size_t post = 1;
  for (std::size_t ax = 2; ax < x.rank(); ++ax) post *= x.extent(ax);
  const std::size_t out_c = c / pieces;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      for (std::size_t s = 0; s < post; ++s) {
        std::size_t best_p = 0;
        T best = px[(i * c + oc * pieces) * post + s];
        for (std::size_t pp = 1; pp < pieces; ++pp) {
          const T v = px[(i * c + oc * pieces + pp) * post + s];
          if (v > best) {
            best = v;
            best_p = pp;
          }
        }
        pdx[(i * c + oc * pieces + best_p) * post + s] =
            pdy[(i * out_c + oc) * post + s];
      }
    }
  }
  return dx;
}

template <typename T>
double softmax_ce_loss(const Tensor& logits, const std::vector<int64_t>& labels,
                       Tensor& dlogits) {
  const std::size_t n = logits.extent(0), u = logits.extent(1);
  auto pl = logits.data<T>();
  auto pd = dlogits.data<T>();
  double loss = 0.0;
  const T inv_n = T(1) / T(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = pl.data() + i * u;
    T mx = row[0];
    for (std::size_t j = 1; j < u; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (std::size_t j = 0; j < u; ++j) denom += std::exp(row[j] - mx);
    const int64_t y = labels[i];
    loss += double(std::log(denom) - (row[std::size_t(y)] - mx));
    for (std::size_t j = 0; j < u; ++j) {
      T p = std::exp(row[j] - mx) / denom;
      if (int64_t(j) == y) p -= T(1);
      pd[i * u + j] = p * inv_n;
    }
  }
  return loss / double(n);
}

}  // namespace

BackwardResult backward(const Graph& g, const ParamSet& p, const Tensor& x,
                        const std::vector<int64_t>& labels, Mode mode, Rng* rng) {
  g.validate();
  const NodeId out_id = g.outputs().front();
  if (!std::holds_alternative<SoftmaxOutputKind>(g.node(out_id).kind)) {
    throw ValueError("backward requires a softmax output node");
  }
  const std::size_t batch = x.extent(0);
  if (labels.size() != batch) {
    throw ShapeError("backward: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }

  BackwardResult result;
  result.fwd = forward(g, p, x, mode, rng);
  const auto& acts = result.fwd.activations;

  // Loss and seed gradient at the logits feeding the softmax output.
  const NodeId logits_id = g.node(out_id).preds.front();
  const Tensor& logits = acts[std::size_t(logits_id)];
  std::vector<Tensor> act_grads(g.size());
  Tensor dlogits(logits.shape(), logits.dtype());
  result.loss = logits.dtype() == Dtype::f32
                    ? softmax_ce_loss<float>(logits, labels, dlogits)
                    : softmax_ce_loss<double>(logits, labels, dlogits);
  act_grads[std::size_t(logits_id)] = std::move(dlogits);

  // Zero-initialized gradient slots for every parameter tensor.
  for (const auto& [id, tensors] : p.all()) {
    for (const auto& [name, t] : tensors) {
      result.grads.set(id, name, Tensor(t.shape(), t.dtype()));
    }
  }

  const auto order = topological_order(g);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node& n = g.node(*it);
    const std::size_t idx = std::size_t(n.id);
    if (n.id == out_id || std::holds_alternative<InputKind>(n.kind)) continue;
    Tensor& dy = act_grads[idx];
    if (dy.is_null()) continue;  // not on any path to the loss

    const NodeId pred = n.preds.front();
    const Tensor& x_in = acts[std::size_t(pred)];
    if (const auto* k = std::get_if<DenseKind>(&n.kind)) {
      Tensor in2d = x_in.rank() == 2 ? x_in : reshape_copy(x_in, {batch, k->in});
      const Tensor& w = p.at(n.id, "weight");
      accumulate_grad(result.grads.at(n.id, "weight"), matmul_tn(in2d, dy));
      accumulate_grad(result.grads.at(n.id, "bias"),
                      dy.dtype() == Dtype::f32 ? channel_sum<float>(dy)
                                               : channel_sum<double>(dy));
      Tensor dx = matmul_nt(dy, w);
      if (x_in.rank() != 2) dx = reshape_copy(dx, x_in.shape());
      accumulate_grad(act_grads[std::size_t(pred)], dx);
    } else if (const auto* k = std::get_if<Conv2DKind>(&n.kind)) {
      const Tensor& kernel = p.at(n.id, "kernel");
      accumulate_grad(result.grads.at(n.id, "kernel"),
                      x_in.dtype() == Dtype::f32
                          ? conv2d_grad_kernel<float>(x_in, dy, k->geom)
                          : conv2d_grad_kernel<double>(x_in, dy, k->geom));
      accumulate_grad(result.grads.at(n.id, "bias"),
                      dy.dtype() == Dtype::f32 ? channel_sum<float>(dy)
                                               : channel_sum<double>(dy));
      accumulate_grad(act_grads[std::size_t(pred)],
                      x_in.dtype() == Dtype::f32
                          ? conv2d_grad_input<float>(kernel, dy, k->geom,
                                                     x_in.extent(2), x_in.extent(3))
                          : conv2d_grad_input<double>(kernel, dy, k->geom,
                                                      x_in.extent(2), x_in.extent(3)));
    } else if (std::holds_alternative<ReLUKind>(n.kind)) {
      Tensor dx(x_in.shape(), x_in.dtype());
      for (std::size_t i = 0; i < dx.numel(); ++i) {
        dx.set(i, x_in.get(i) > 0.0 ? dy.get(i) : 0.0);
      }
      accumulate_grad(act_grads[std::size_t(pred)], dx);
    } else if (const auto* k = std::get_if<MaxoutKind>(&n.kind)) {
      accumulate_grad(act_grads[std::size_t(pred)],
                      x_in.dtype() == Dtype::f32
                          ? maxout_backward<float>(x_in, dy, k->pieces)
                          : maxout_backward<double>(x_in, dy, k->pieces));
    } else if (const auto* k = std::get_if<BatchNormKind>(&n.kind)) {
      Tensor mean, var;
      bool train_stats = false;
      if (auto it2 = result.fwd.bn_moments.find(n.id);
          it2 != result.fwd.bn_moments.end()) {
        mean = it2->second.first;
        var = it2->second.second;
        train_stats = true;
      } else {
        mean = p.at(n.id, "running_mean");
        var = p.at(n.id, "running_var");
      }
      Tensor dx(x_in.shape(), x_in.dtype());
      Tensor dgamma({k->channels}, x_in.dtype());
      Tensor dbeta({k->channels}, x_in.dtype());
      if (x_in.dtype() == Dtype::f32) {
        batchnorm_backward<float>(x_in, dy, mean, var, p.at(n.id, "gamma"),
                                  k->epsilon, train_stats, dx, dgamma, dbeta);
      } else {
        batchnorm_backward<double>(x_in, dy, mean, var, p.at(n.id, "gamma"),
                                   k->epsilon, train_stats, dx, dgamma, dbeta);
      }
      accumulate_grad(result.grads.at(n.id, "gamma"), dgamma);
      accumulate_grad(result.grads.at(n.id, "beta"), dbeta);
      accumulate_grad(act_grads[std::size_t(pred)], dx);
    } else if (std::holds_alternative<ConcatKind>(n.kind)) {
      std::size_t post = 1;
      for (std::size_t ax = 2; ax < dy.rank(); ++ax) post *= dy.extent(ax);
      const std::size_t total_c = dy.extent(1);
      std::size_t c_off = 0;
      for (NodeId pid : n.preds) {
        const Tensor& part = acts[std::size_t(pid)];
        const std::size_t c = part.extent(1);
        Tensor dpart(part.shape(), part.dtype());
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t j = 0; j < c * post; ++j) {
            dpart.set((i * c) * post + j,
                      dy.get((i * total_c + c_off) * post + j));
          }
        }
        accumulate_grad(act_grads[std::size_t(pid)], dpart);
        c_off += c;
      }
    } else if (std::holds_alternative<DropoutKind>(n.kind)) {
      auto mit = result.fwd.dropout_masks.find(n.id);
      if (mit == result.fwd.dropout_masks.end()) {
        accumulate_grad(act_grads[std::size_t(pred)], dy);  // eval: identity
      } else {
        accumulate_grad(act_grads[std::size_t(pred)],
                        elementwise_mul(dy, mit->second));
      }
    }
  }
  return result;
}

double eval_loss(const Graph& g, const ParamSet& p, const Tensor& x,
                 const std::vector<int64_t>& labels, Mode mode, Rng* rng) {
  g.validate();
  const NodeId out_id = g.outputs().front();
  if (!std::holds_alternative<SoftmaxOutputKind>(g.node(out_id).kind)) {
    throw ValueError("eval_loss requires a softmax output node");
  }
  auto fwd = forward(g, p, x, mode, rng);
  const NodeId logits_id = g.node(out_id).preds.front();
  const Tensor& logits = fwd.activations[std::size_t(logits_id)];
  Tensor scratch(logits.shape(), logits.dtype());
  return logits.dtype() == Dtype::f32
             ? softmax_ce_loss<float>(logits, labels, scratch)
             : softmax_ce_loss<double>(logits, labels, scratch);
}

double accuracy(const Graph& g, const ParamSet& p, const Tensor& x,
                const std::vector<int64_t>& labels) {
  auto fwd = forward(g, p, x, Mode::eval);
  const Tensor& out = fwd.activations[std::size_t(g.outputs().front())];
  const auto pred = argmax_rows(out);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == labels[i]) ++hit;
  }
  return double(hit) / double(pred.size());
}

}  // namespace n2n
