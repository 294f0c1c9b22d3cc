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

#include "n2n/net2net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace n2n {

Mapping Mapping::identity(std::size_t n) {
  Mapping m;
  m.old_width = n;
  m.new_width = n;
  m.map.resize(n);
  std::iota(m.map.begin(), m.map.end(), 0u);
  m.counts.assign(n, 1u);
  return m;
}

void Mapping::refresh_counts() {
  counts.assign(old_width, 0u);
  for (uint32_t u : map) counts.at(u) += 1;
}

void Mapping::validate() const {
  if (map.size() != new_width || counts.size() != old_width) {
    throw ValueError("mapping arrays disagree with declared widths");
  }
  if (new_width < old_width) {
    throw ValueError("mapping must not shrink the interface");
  }
  for (std::size_t j = 0; j < old_width; ++j) {
    if (map[j] != j) throw ValueError("mapping must be the identity on the prefix");
  }
  std::vector<uint32_t> check(old_width, 0u);
  std::size_t total = 0;
  for (uint32_t u : map) {
    if (u >= old_width) throw ValueError("mapping index out of range");
    check[u] += 1;
    ++total;
  }
  if (check != counts || total != new_width) {
    throw ValueError("mapping counts are inconsistent");
  }
}

Mapping expand_mapping(const Mapping& cm, std::size_t spatial) {
  if (spatial == 1) return cm;
  Mapping m;
  m.old_width = cm.old_width * spatial;
  m.new_width = cm.new_width * spatial;
  m.map.resize(m.new_width);
  m.counts.resize(m.old_width);
  for (std::size_t c = 0; c < cm.new_width; ++c) {
    for (std::size_t s = 0; s < spatial; ++s) {
      m.map[c * spatial + s] = uint32_t(cm.map[c] * spatial + s);
    }
  }
  for (std::size_t u = 0; u < cm.old_width; ++u) {
    for (std::size_t s = 0; s < spatial; ++s) {
      m.counts[u * spatial + s] = cm.counts[u];
    }
  }
  return m;
}

std::vector<NodeId> RemapPlan::widened() const {
  std::vector<NodeId> out;
  for (const auto& [id, m] : node_out) {
    if (!m.is_identity()) out.push_back(id);
  }
  return out;
}

NoiseConfig NoiseConfig::gaussian(double relative_std, uint64_t seed) {
  NoiseConfig nc;
  nc.enabled = relative_std > 0.0;
  nc.relative_std = relative_std;
  nc.seed = seed;
  nc.validate();
  return nc;
}

void NoiseConfig::validate() const {
  if (relative_std < 0.0) throw ValueError("noise relative_std must be >= 0");
  if (enabled != (relative_std > 0.0)) {
    throw ValueError("noise enabled flag must match relative_std > 0");
  }
}

namespace {

bool propagates_mapping(const NodeKind& kind) {
  return std::holds_alternative<ReLUKind>(kind) ||
         std::holds_alternative<DropoutKind>(kind) ||
         std::holds_alternative<BatchNormKind>(kind) ||
         std::holds_alternative<SoftmaxOutputKind>(kind);
}

bool is_parametric_layer(const NodeKind& kind) {
  return std::holds_alternative<DenseKind>(kind) ||
         std::holds_alternative<Conv2DKind>(kind);
}

std::size_t layer_out_width(const NodeKind& kind) {
  if (const auto* d = std::get_if<DenseKind>(&kind)) return d->out;
  return std::get<Conv2DKind>(kind).geom.out_channels;
}

// Group alignment required by downstream maxout nodes reached through
// mapping-propagating nodes only. Returns (group_size, witness maxout).
std::pair<std::size_t, NodeId> maxout_group_constraint(
    const Graph& g, const std::vector<std::vector<NodeId>>& succ, NodeId start) {
  std::size_t group = 1;
  NodeId witness = -1;
  std::vector<NodeId> frontier{start};
  std::set<NodeId> seen;
  while (!frontier.empty()) {
    const NodeId id = frontier.back();
    frontier.pop_back();
    for (NodeId s : succ[std::size_t(id)]) {
      if (!seen.insert(s).second) continue;
      const Node& sn = g.node(s);
      if (const auto* mk = std::get_if<MaxoutKind>(&sn.kind)) {
        group = std::lcm(group, mk->pieces);
        witness = s;
      } else if (propagates_mapping(sn.kind)) {
        frontier.push_back(s);
      }
    }
  }
  return {group, witness};
}

Mapping make_widened_mapping(std::size_t n, std::size_t q, std::size_t group,
                             Rng& rng) {
  Mapping m;
  m.old_width = n;
  m.new_width = q;
  m.map.resize(q);
  const std::size_t ng = n / group, qg = q / group;
  for (std::size_t jg = 0; jg < qg; ++jg) {
    const std::size_t src = jg < ng ? jg : rng.uniform_u32(uint32_t(ng));
    for (std::size_t p = 0; p < group; ++p) {
      m.map[jg * group + p] = uint32_t(src * group + p);
    }
  }
  m.refresh_counts();
  return m;
}

}  // namespace

RemapPlan infer_remaps(const Graph& g, const WidenSpec& spec, Rng& rng) {
  g.validate();
  const auto shapes = infer_shapes(g);
  const auto succ = g.successors();

  // Validate targets and derive any maxout group alignment up front.
  std::map<NodeId, std::size_t> group_of;
  for (const auto& [id, q] : spec.new_widths) {
    if (id < 0 || std::size_t(id) >= g.size()) {
      throw ValueError("widen spec names unknown node id " + std::to_string(id));
    }
    const Node& n = g.node(id);
    if (!is_parametric_layer(n.kind)) {
      throw ValueError("widen spec target '" + n.name +
                       "' is not a dense or convolution layer");
    }
    const std::size_t old_w = layer_out_width(n.kind);
    if (q <= old_w) {
      throw ValueError("widen spec for '" + n.name + "': new width " +
                       std::to_string(q) + " must exceed current width " +
                       std::to_string(old_w));
    }
    auto [group, witness] = maxout_group_constraint(g, succ, id);
    if (group > 1 && (old_w % group != 0 || q % group != 0)) {
      throw ValueError("inconsistent widening of '" + n.name + "': maxout node '" +
                       g.node(witness).name + "' needs widths divisible by " +
                       std::to_string(group));
    }
    group_of[id] = group;
  }

  RemapPlan plan;
  for (const Node& n : g.nodes()) {
    const auto channel_width = [&](NodeId id) {
      return shapes[std::size_t(id)][0];
    };
    if (std::holds_alternative<InputKind>(n.kind)) {
      plan.node_out[n.id] = Mapping::identity(channel_width(n.id));
    } else if (is_parametric_layer(n.kind)) {
      auto it = spec.new_widths.find(n.id);
      if (it == spec.new_widths.end()) {
        plan.node_out[n.id] = Mapping::identity(layer_out_width(n.kind));
      } else {
        plan.node_out[n.id] = make_widened_mapping(
            layer_out_width(n.kind), it->second, group_of.at(n.id), rng);
      }
    } else if (propagates_mapping(n.kind)) {
      plan.node_out[n.id] = plan.node_out.at(n.preds.front());
    } else if (const auto* mk = std::get_if<MaxoutKind>(&n.kind)) {
      const Mapping& in = plan.node_out.at(n.preds.front());
      const std::size_t k = mk->pieces;
      if (in.new_width % k != 0 || in.old_width % k != 0) {
        throw ValueError("inconsistent mapping into maxout '" + n.name +
                         "' from '" + g.node(n.preds.front()).name + "'");
      }
      Mapping out;
      out.old_width = in.old_width / k;
      out.new_width = in.new_width / k;
      out.map.resize(out.new_width);
      for (std::size_t j = 0; j < out.new_width; ++j) {
        const uint32_t head = in.map[j * k];
        if (head % k != 0) {
          throw ValueError("mapping into maxout '" + n.name +
                           "' does not respect piece groups (producer '" +
                           g.node(n.preds.front()).name + "')");
        }
        for (std::size_t p = 1; p < k; ++p) {
          if (in.map[j * k + p] != head + p) {
            throw ValueError("mapping into maxout '" + n.name +
                             "' does not respect piece groups (producer '" +
                             g.node(n.preds.front()).name + "')");
          }
        }
        out.map[j] = head / uint32_t(k);
      }
      out.refresh_counts();
      plan.node_out[n.id] = std::move(out);
    } else if (std::holds_alternative<ConcatKind>(n.kind)) {
      Mapping out;
      std::size_t old_off = 0;
      for (NodeId pid : n.preds) {
        const Mapping& bm = plan.node_out.at(pid);
        for (uint32_t v : bm.map) out.map.push_back(uint32_t(old_off) + v);
        for (uint32_t c : bm.counts) out.counts.push_back(c);
        old_off += bm.old_width;
        out.new_width += bm.new_width;
      }
      out.old_width = old_off;
      plan.node_out[n.id] = std::move(out);
    }
  }

  // Output layers must never be remapped.
  for (NodeId out : g.outputs()) {
    if (!plan.node_out.at(out).is_identity()) {
      throw ValueError("widen spec would change the output width at node '" +
                       g.node(out).name + "'");
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Net2WiderNet
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_finite(const Tensor& t, const std::string& where) {
  auto d = t.data<T>();
  for (T v : d) {
    if (!std::isfinite(v)) {
      throw ValueError("non-finite teacher parameter in " + where);
    }
  }
}

double tensor_std(const Tensor& t) {
  double sum = 0.0;
  const std::size_t n = t.numel();
  for (std::size_t i = 0; i < n; ++i) sum += t.get(i);
  const double mean = sum / double(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = t.get(i) - mean;
    sq += d * d;
  }
  return std::sqrt(sq / double(n));
}

template <typename T>
Tensor remap_dense_weight(const Tensor& w, const Mapping& in_map,
                          const Mapping& out_map) {
  Tensor u({in_map.new_width, out_map.new_width}, w.dtype());
  auto pw = w.data<T>();
  auto pu = u.data<T>();
  const std::size_t old_out = out_map.old_width;
  for (std::size_t k = 0; k < in_map.new_width; ++k) {
    const uint32_t src_row = in_map.map[k];
    const T divisor = T(in_map.counts[src_row]);
    for (std::size_t j = 0; j < out_map.new_width; ++j) {
      pu[k * out_map.new_width + j] =
          pw[src_row * old_out + out_map.map[j]] / divisor;
    }
  }
  return u;
}

template <typename T>
Tensor remap_conv_kernel(const Tensor& w, const Mapping& in_map,
                         const Mapping& out_map, std::size_t kh, std::size_t kw) {
  Tensor u({out_map.new_width, in_map.new_width, kh, kw}, w.dtype());
  auto pw = w.data<T>();
  auto pu = u.data<T>();
  const std::size_t taps = kh * kw;
  const std::size_t old_c = in_map.old_width;
  for (std::size_t ko = 0; ko < out_map.new_width; ++ko) {
    const std::size_t src_k = out_map.map[ko];
    for (std::size_t ci = 0; ci < in_map.new_width; ++ci) {
      const uint32_t src_c = in_map.map[ci];
      const T divisor = T(in_map.counts[src_c]);
      const T* src = pw.data() + (src_k * old_c + src_c) * taps;
      T* dst = pu.data() + (ko * in_map.new_width + ci) * taps;
      for (std::size_t t = 0; t < taps; ++t) dst[t] = src[t] / divisor;
    }
  }
  return u;
}

Tensor remap_vector(const Tensor& v, const Mapping& m) {
  Tensor out({m.new_width}, v.dtype());
  for (std::size_t j = 0; j < m.new_width; ++j) out.set(j, v.get(m.map[j]));
  return out;
}

}  // namespace

WidenResult widen_with_plan(const Graph& g, const ParamSet& p,
                            const WidenSpec& spec, RemapPlan plan,
                            const NoiseConfig& noise) {
  noise.validate();
  check_params(g, p);
  for (const auto& [id, tensors] : p.all()) {
    for (const auto& [name, t] : tensors) {
      if (t.dtype() == Dtype::f32) {
        check_finite<float>(t, g.node(id).name + "." + name);
      } else {
        check_finite<double>(t, g.node(id).name + "." + name);
      }
    }
  }
  const auto old_shapes = infer_shapes(g);

  // Rebuild the graph with widened widths.
  Graph ng;
  for (const Node& n : g.nodes()) {
    NodeKind kind = n.kind;
    if (auto* d = std::get_if<DenseKind>(&kind)) {
      const auto& pred_shape = old_shapes[std::size_t(n.preds.front())];
      std::size_t spatial = 1;
      for (std::size_t ax = 1; ax < pred_shape.size(); ++ax) spatial *= pred_shape[ax];
      d->in = plan.at(n.preds.front()).new_width * spatial;
      d->out = plan.at(n.id).new_width;
    } else if (auto* c = std::get_if<Conv2DKind>(&kind)) {
      c->geom.in_channels = plan.at(n.preds.front()).new_width;
      c->geom.out_channels = plan.at(n.id).new_width;
    } else if (auto* b = std::get_if<BatchNormKind>(&kind)) {
      b->channels = plan.at(n.id).new_width;
    }
    ng.add(n.name, std::move(kind), n.preds);
  }
  for (NodeId out : g.outputs()) ng.set_output(out);

  TransformReport report;
  report.noise_applied = noise.enabled;
  report.noise_relative_std = noise.enabled ? noise.relative_std : 0.0;

  ParamSet np;
  for (const Node& n : g.nodes()) {
    if (std::holds_alternative<DenseKind>(n.kind)) {
      const auto& pred_shape = old_shapes[std::size_t(n.preds.front())];
      std::size_t spatial = 1;
      for (std::size_t ax = 1; ax < pred_shape.size(); ++ax) spatial *= pred_shape[ax];
      const Mapping in_map = expand_mapping(plan.at(n.preds.front()), spatial);
      const Mapping& out_map = plan.at(n.id);
      const Tensor& w = p.at(n.id, "weight");
      np.set(n.id, "weight",
             w.dtype() == Dtype::f32
                 ? remap_dense_weight<float>(w, in_map, out_map)
                 : remap_dense_weight<double>(w, in_map, out_map));
      np.set(n.id, "bias", remap_vector(p.at(n.id, "bias"), out_map));
      if (!in_map.is_identity() || !out_map.is_identity()) {
        report.affected_nodes.push_back(n.name);
      }
    } else if (const auto* c = std::get_if<Conv2DKind>(&n.kind)) {
      const Mapping& in_map = plan.at(n.preds.front());
      const Mapping& out_map = plan.at(n.id);
      const Tensor& w = p.at(n.id, "kernel");
      np.set(n.id, "kernel",
             w.dtype() == Dtype::f32
                 ? remap_conv_kernel<float>(w, in_map, out_map, c->geom.kernel_h,
                                            c->geom.kernel_w)
                 : remap_conv_kernel<double>(w, in_map, out_map, c->geom.kernel_h,
                                             c->geom.kernel_w));
      np.set(n.id, "bias", remap_vector(p.at(n.id, "bias"), out_map));
      if (!in_map.is_identity() || !out_map.is_identity()) {
        report.affected_nodes.push_back(n.name);
      }
    } else if (std::holds_alternative<BatchNormKind>(n.kind)) {
      const Mapping& m = plan.at(n.id);
      for (const char* name : {"gamma", "beta", "running_mean", "running_var"}) {
        np.set(n.id, name, remap_vector(p.at(n.id, name), m));
      }
      if (!m.is_identity()) report.affected_nodes.push_back(n.name);
    }
  }

  // Symmetry-breaking noise on the incoming weights of replica columns.
  // Layers feeding straight into dropout keep the exact transform; the
  // dropout randomization already separates the replicas.
  if (noise.enabled) {
    const auto succ = g.successors();
    Rng nrng(noise.seed);
    for (const auto& [id, q] : spec.new_widths) {
      (void)q;
      bool feeds_dropout = false;
      for (NodeId s : succ[std::size_t(id)]) {
        if (std::holds_alternative<DropoutKind>(g.node(s).kind)) feeds_dropout = true;
      }
      if (feeds_dropout) continue;
      const Node& n = g.node(id);
      const Mapping& out_map = plan.at(id);
      const std::size_t old_out = out_map.old_width;
      if (std::holds_alternative<DenseKind>(n.kind)) {
        Tensor& w = np.at(id, "weight");
        const double sd = tensor_std(p.at(id, "weight")) * noise.relative_std;
        const std::size_t rows = w.extent(0), cols = w.extent(1);
        for (std::size_t j = old_out; j < cols; ++j) {
          for (std::size_t k = 0; k < rows; ++k) {
            const std::size_t i = k * cols + j;
            w.set(i, w.get(i) + nrng.normal() * sd);
          }
        }
      } else {
        Tensor& w = np.at(id, "kernel");
        const double sd = tensor_std(p.at(id, "kernel")) * noise.relative_std;
        const std::size_t per_out = w.numel() / w.extent(0);
        for (std::size_t ko = old_out; ko < w.extent(0); ++ko) {
          for (std::size_t t = 0; t < per_out; ++t) {
            const std::size_t i = ko * per_out + t;
            w.set(i, w.get(i) + nrng.normal() * sd);
          }
        }
      }
    }
  }

  check_params(ng, np);
  return WidenResult{std::move(ng), std::move(np), std::move(plan),
                     std::move(report)};
}

WidenResult widen(const Graph& g, const ParamSet& p, const WidenSpec& spec,
                  const NoiseConfig& noise, Rng& rng) {
  RemapPlan plan = infer_remaps(g, spec, rng);
  return widen_with_plan(g, p, spec, std::move(plan), noise);
}

// ---------------------------------------------------------------------------
// Net2DeeperNet
// ---------------------------------------------------------------------------

namespace {

struct InsertionBlock {
  NodeId bn = -1;   // optional batch norm between layer and activation
  NodeId act = -1;  // the activation node following `at`
  bool maxout = false;
  std::size_t pieces = 1;
};

InsertionBlock locate_block(const Graph& g, NodeId at) {
  const Node& layer = g.node(at);
  if (!is_parametric_layer(layer.kind)) {
    throw ValueError("deepen target '" + layer.name +
                     "' is not a dense or convolution layer");
  }
  const auto succ = g.successors();
  InsertionBlock block;
  NodeId cur = at;
  const auto& direct = succ[std::size_t(cur)];
  NodeId next = direct.size() == 1 ? direct.front() : -1;
  if (next >= 0 && std::holds_alternative<BatchNormKind>(g.node(next).kind)) {
    block.bn = next;
    const auto& after_bn = succ[std::size_t(next)];
    next = after_bn.size() == 1 ? after_bn.front() : -1;
  }
  if (next < 0) {
    throw ValueError("cannot locate a single activation following '" +
                     layer.name + "'");
  }
  const Node& act = g.node(next);
  if (std::holds_alternative<ReLUKind>(act.kind)) {
    block.act = next;
  } else if (const auto* mk = std::get_if<MaxoutKind>(&act.kind)) {
    block.act = next;
    block.maxout = true;
    block.pieces = mk->pieces;
  } else {
    throw ValueError("cannot insert an identity layer after '" + layer.name +
                     "': following activation '" + act.name + "' is " +
                     kind_name(act.kind) +
                     ", which does not preserve identity composition");
  }
  return block;
}

std::string unique_name(const Graph& g, const std::string& base) {
  if (!g.find(base)) return base;
  for (int i = 2;; ++i) {
    const std::string candidate = base + "_" + std::to_string(i);
    if (!g.find(candidate)) return candidate;
  }
}

// Per-channel mean / population variance of one node's activation over the
// calibration batches, accumulated in double.
std::pair<std::vector<double>, std::vector<double>> estimate_stats(
    const Graph& g, const ParamSet& p, NodeId node,
    const std::vector<Tensor>& batches, std::size_t channels) {
  std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
  double count = 0.0;
  for (const Tensor& batch : batches) {
    auto fwd = forward(g, p, batch, Mode::eval);
    const Tensor& act = fwd.activations[std::size_t(node)];
    const std::size_t n = act.extent(0);
    const std::size_t c = act.rank() == 1 ? act.extent(0) : act.extent(1);
    std::size_t post = 1;
    for (std::size_t ax = 2; ax < act.rank(); ++ax) post *= act.extent(ax);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * post;
        for (std::size_t s = 0; s < post; ++s) {
          const double v = act.get(base + s);
          sum[ch] += v;
          sumsq[ch] += v * v;
        }
      }
    }
    count += double(n * post);
  }
  std::vector<double> mean(channels), var(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    mean[ch] = sum[ch] / count;
    var[ch] = std::max(0.0, sumsq[ch] / count - mean[ch] * mean[ch]);
  }
  return {mean, var};
}

}  // namespace

DeepenResult deepen(const Graph& g, const ParamSet& p, NodeId at,
                    const std::vector<Tensor>& calib_batches,
                    const NoiseConfig& noise,
                    std::optional<std::pair<std::size_t, std::size_t>> kernel) {
  noise.validate();
  const Dtype dtype = check_params(g, p);
  const auto shapes = infer_shapes(g);
  const InsertionBlock block = locate_block(g, at);
  const Node& layer = g.node(at);
  const bool is_conv = std::holds_alternative<Conv2DKind>(layer.kind);
  const auto& act_shape = shapes[std::size_t(block.act)];
  const std::size_t width = act_shape[0];  // units or channels after activation
  const std::size_t ident_out = width * block.pieces;

  // The kinds of the nodes to insert, in order.
  std::vector<std::pair<std::string, NodeKind>> inserted;
  std::size_t kh = 0, kw = 0;
  if (is_conv) {
    const auto& geom = std::get<Conv2DKind>(layer.kind).geom;
    kh = kernel ? kernel->first : geom.kernel_h;
    kw = kernel ? kernel->second : geom.kernel_w;
    if (kh % 2 == 0 || kw % 2 == 0) {
      throw ValueError("deepen at '" + layer.name + "': identity kernel " +
                       std::to_string(kh) + "x" + std::to_string(kw) +
                       " must have odd extents");
    }
    ConvGeometry ng;
    ng.kernel_h = kh;
    ng.kernel_w = kw;
    ng.stride_h = ng.stride_w = 1;
    ng.pad_h = (kh - 1) / 2;
    ng.pad_w = (kw - 1) / 2;
    ng.in_channels = width;
    ng.out_channels = ident_out;
    inserted.emplace_back(layer.name + "_id", NodeKind(Conv2DKind{ng}));
  } else {
    if (kernel) {
      throw ValueError("deepen at '" + layer.name +
                       "': kernel override applies to convolutions only");
    }
    inserted.emplace_back(layer.name + "_id", NodeKind(DenseKind{width, ident_out}));
  }
  double bn_epsilon = 1e-5;
  if (block.bn >= 0) {
    if (calib_batches.empty()) {
      throw ValueError("deepen at '" + layer.name +
                       "': inserting batch norm requires calibration batches");
    }
    bn_epsilon = std::get<BatchNormKind>(g.node(block.bn).kind).epsilon;
    inserted.emplace_back(layer.name + "_id_bn",
                          NodeKind(BatchNormKind{ident_out, bn_epsilon}));
  }
  inserted.emplace_back(layer.name + "_id_act",
                        block.maxout ? NodeKind(MaxoutKind{block.pieces})
                                     : NodeKind(ReLUKind{}));

  // Rebuild the graph with the new nodes spliced in after the activation.
  const std::size_t m = inserted.size();
  std::vector<NodeId> id_map(g.size());
  for (const Node& n : g.nodes()) {
    id_map[std::size_t(n.id)] = n.id <= block.act ? n.id : NodeId(n.id + m);
  }
  Graph ng;
  NodeId first_new = -1, last_new = -1;
  for (const Node& n : g.nodes()) {
    std::vector<NodeId> preds;
    preds.reserve(n.preds.size());
    for (NodeId pid : n.preds) {
      preds.push_back(pid == block.act ? last_new : id_map[std::size_t(pid)]);
    }
    ng.add(n.name, n.kind, std::move(preds));
    if (n.id == block.act) {
      NodeId prev = block.act;
      for (auto& [name, kind] : inserted) {
        prev = ng.add(unique_name(ng, name), kind, {prev});
        if (first_new < 0) first_new = prev;
      }
      last_new = prev;
    }
  }
  for (NodeId out : g.outputs()) {
    ng.set_output(out == block.act ? last_new : id_map[std::size_t(out)]);
  }

  ParamSet np = p.rekeyed(id_map);
  const NodeId ident_id = first_new;

  // Identity weights: exact identity for rectifiers; for maxout, each
  // output group's pieces all copy the same input unit.
  if (is_conv) {
    Tensor k({ident_out, width, kh, kw}, dtype);
    const std::size_t center = ((kh - 1) / 2) * kw + (kw - 1) / 2;
    for (std::size_t ko = 0; ko < ident_out; ++ko) {
      const std::size_t src = block.maxout ? ko / block.pieces : ko;
      k.set((ko * width + src) * (kh * kw) + center, 1.0);
    }
    np.set(ident_id, "kernel", std::move(k));
    np.set(ident_id, "bias", Tensor({ident_out}, dtype));
  } else {
    Tensor w({width, ident_out}, dtype);
    for (std::size_t j = 0; j < ident_out; ++j) {
      const std::size_t src = block.maxout ? j / block.pieces : j;
      w.set(src * ident_out + j, 1.0);
    }
    np.set(ident_id, "weight", std::move(w));
    np.set(ident_id, "bias", Tensor({ident_out}, dtype));
  }

  // Inserted batch norm: running statistics estimated at the insertion
  // point, scale and bias chosen to undo the normalization.
  if (block.bn >= 0) {
    auto [mean, var] = estimate_stats(g, p, block.act, calib_batches, width);
    const NodeId bn_id = first_new + 1;
    Tensor gamma({ident_out}, dtype), beta({ident_out}, dtype);
    Tensor rmean({ident_out}, dtype), rvar({ident_out}, dtype);
    for (std::size_t ch = 0; ch < ident_out; ++ch) {
      const std::size_t src = block.maxout ? ch / block.pieces : ch;
      gamma.set(ch, std::sqrt(var[src] + bn_epsilon));
      beta.set(ch, mean[src]);
      rmean.set(ch, mean[src]);
      rvar.set(ch, var[src]);
    }
    np.set(bn_id, "gamma", std::move(gamma));
    np.set(bn_id, "beta", std::move(beta));
    np.set(bn_id, "running_mean", std::move(rmean));
    np.set(bn_id, "running_var", std::move(rvar));
  }

  TransformReport report;
  report.noise_applied = noise.enabled;
  report.noise_relative_std = noise.enabled ? noise.relative_std : 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    report.affected_nodes.push_back(ng.node(first_new + NodeId(i)).name);
  }

  if (noise.enabled) {
    Rng nrng(noise.seed);
    const char* wname = is_conv ? "kernel" : "weight";
    Tensor& w = np.at(ident_id, wname);
    const double sd = tensor_std(p.at(at, wname)) * noise.relative_std;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      w.set(i, w.get(i) + nrng.normal() * sd);
    }
  }

  check_params(ng, np);
  return DeepenResult{std::move(ng), std::move(np), std::move(report),
                      std::move(id_map), ident_id};
}

ComposedResult widen_then_deepen(const Graph& g, const ParamSet& p,
                                 const WidenSpec& wspec,
                                 const std::vector<std::string>& deepen_at,
                                 const std::vector<Tensor>& calib_batches,
                                 const NoiseConfig& noise, Rng& rng) {
  WidenResult w = wspec.new_widths.empty()
                      ? WidenResult{g, p, RemapPlan{}, TransformReport{}}
                      : widen(g, p, wspec, noise, rng);
  ComposedResult out{std::move(w.graph), std::move(w.params), std::move(w.report)};
  for (const std::string& name : deepen_at) {
    const NodeId at = out.graph.require(name);
    DeepenResult d = deepen(out.graph, out.params, at, calib_batches, noise);
    out.graph = std::move(d.graph);
    out.params = std::move(d.params);
    for (auto& n : d.report.affected_nodes) {
      out.report.affected_nodes.push_back(std::move(n));
    }
    out.report.noise_applied = out.report.noise_applied || d.report.noise_applied;
    out.report.noise_relative_std =
        std::max(out.report.noise_relative_std, d.report.noise_relative_std);
  }
  return out;
}

}  // namespace n2n
