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

#include "n2n/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace n2n {

std::string PreservationReport::to_json() const {
  nlohmann::json j;
  j["argmax_agreement"] = argmax_agreement;
  j["max_abs_diff"] = max_abs_diff;
  j["mean_abs_diff"] = mean_abs_diff;
  j["n_samples"] = n_samples;
  j["passed"] = passed;
  j["tolerance"] = tolerance;
  return j.dump();
}

Tensor sample_inputs(const std::vector<std::size_t>& per_sample_shape,
                     std::size_t n, uint64_t seed, Dtype dtype) {
  std::vector<std::size_t> shape;
  shape.push_back(n);
  shape.insert(shape.end(), per_sample_shape.begin(), per_sample_shape.end());
  Tensor x(shape, dtype);
  Rng rng(seed);
  for (std::size_t i = 0; i < x.numel(); ++i) x.set(i, rng.normal());
  return x;
}

PreservationReport check_preserved(const Graph& tg, const ParamSet& tp,
                                   const Graph& sg, const ParamSet& sp,
                                   const Tensor& inputs, double tolerance) {
  tg.validate();
  sg.validate();
  const auto t_shapes = infer_shapes(tg);
  const auto s_shapes = infer_shapes(sg);
  const auto input_of = [](const Graph& g, const auto& shapes) {
    for (const Node& n : g.nodes()) {
      if (std::holds_alternative<InputKind>(n.kind)) {
        return shapes[std::size_t(n.id)];
      }
    }
    throw ValueError("graph has no input node");
  };
  if (input_of(tg, t_shapes) != input_of(sg, s_shapes)) {
    throw ShapeError("teacher and student input shapes differ");
  }
  const auto& t_out_shape = t_shapes[std::size_t(tg.outputs().front())];
  const auto& s_out_shape = s_shapes[std::size_t(sg.outputs().front())];
  if (t_out_shape != s_out_shape) {
    throw ShapeError("teacher and student output shapes differ");
  }

  auto t_fwd = forward(tg, tp, inputs, Mode::eval);
  auto s_fwd = forward(sg, sp, inputs, Mode::eval);
  const Tensor& ty = t_fwd.activations[std::size_t(tg.outputs().front())];
  const Tensor& sy = s_fwd.activations[std::size_t(sg.outputs().front())];

  PreservationReport report;
  report.n_samples = inputs.extent(0);
  report.tolerance = tolerance;
  double sum = 0.0;
  for (std::size_t i = 0; i < ty.numel(); ++i) {
    const double d = std::abs(ty.get(i) - sy.get(i));
    report.max_abs_diff = std::max(report.max_abs_diff, d);
    sum += d;
  }
  report.mean_abs_diff = sum / double(ty.numel());

  // Per-sample argmax over the flattened output.
  const std::size_t n = ty.extent(0);
  const std::size_t per = ty.numel() / n;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t tb = 0, sb = 0;
    double tv = ty.get(i * per), sv = sy.get(i * per);
    for (std::size_t j = 1; j < per; ++j) {
      if (ty.get(i * per + j) > tv) {
        tv = ty.get(i * per + j);
        tb = j;
      }
      if (sy.get(i * per + j) > sv) {
        sv = sy.get(i * per + j);
        sb = j;
      }
    }
    if (tb == sb) ++agree;
  }
  report.argmax_agreement = double(agree) / double(n);
  report.passed = report.max_abs_diff <= tolerance;
  return report;
}

PreservationReport check_preserved(const Graph& tg, const ParamSet& tp,
                                   const Graph& sg, const ParamSet& sp,
                                   uint64_t sampler_seed, std::size_t n,
                                   double tolerance) {
  const auto shapes = infer_shapes(tg);
  for (const Node& node : tg.nodes()) {
    if (std::holds_alternative<InputKind>(node.kind)) {
      const Tensor x = sample_inputs(shapes[std::size_t(node.id)], n,
                                     sampler_seed, check_params(tg, tp));
      return check_preserved(tg, tp, sg, sp, x, tolerance);
    }
  }
  throw ValueError("graph has no input node");
}

GradCheckResult grad_check(const Graph& g, const ParamSet& p, const Tensor& x,
                           const std::vector<int64_t>& labels, double eps,
                           double threshold) {
  if (check_params(g, p) != Dtype::f64) {
    throw ValueError("grad_check requires f64 parameters");
  }
  // Dropout masks (if any) must be identical across loss evaluations.
  constexpr uint64_t kMaskSeed = 0x6e326e;
  const auto loss_at = [&](const ParamSet& params) {
    Rng rng(kMaskSeed);
    return eval_loss(g, params, x, labels, Mode::train, &rng);
  };

  Rng grad_rng(kMaskSeed);
  BackwardResult analytic = backward(g, p, x, labels, Mode::train, &grad_rng);

  struct Coord {
    NodeId id;
    std::string name;
    std::size_t idx;
  };
  std::vector<Coord> coords;
  for (const auto& [id, tensors] : p.all()) {
    for (const auto& [name, t] : tensors) {
      for (std::size_t i = 0; i < t.numel(); ++i) coords.push_back({id, name, i});
    }
  }
  constexpr std::size_t kMaxCoords = 10000;
  if (coords.size() > kMaxCoords) {
    Rng pick(0xc0ffee);
    for (std::size_t i = 0; i < kMaxCoords; ++i) {
      const std::size_t j =
          i + pick.uniform_u32(uint32_t(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(kMaxCoords);
  }

  ParamSet probe = p;
  GradCheckResult result;
  for (const Coord& c : coords) {
    Tensor& t = probe.at(c.id, c.name);
    const double saved = t.get(c.idx);
    t.set(c.idx, saved + eps);
    const double up = loss_at(probe);
    t.set(c.idx, saved - eps);
    const double down = loss_at(probe);
    t.set(c.idx, saved);
    const double fd = (up - down) / (2.0 * eps);
    const double an = analytic.grads.at(c.id, c.name).get(c.idx);
    // Relative above unit scale, absolute below it: keeps difference noise
    // on near-zero gradients from swamping the measurement.
    const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an) + std::abs(fd));
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  result.passed = result.max_rel_error <= threshold;
  return result;
}

std::vector<Tensor> alg1_reference(const std::vector<Tensor>& weights,
                                   const std::vector<Mapping>& mappings) {
  if (weights.empty()) throw ValueError("alg1_reference: empty chain");
  const std::size_t layers = weights.size();
  if (mappings.size() + 1 != layers) {
    throw ValueError("alg1_reference: chain of " + std::to_string(layers) +
                     " layers needs " + std::to_string(layers - 1) +
                     " hidden mappings, got " + std::to_string(mappings.size()));
  }
  for (std::size_t i = 0; i < layers; ++i) {
    if (weights[i].rank() != 2) {
      throw ValueError("alg1_reference: weights must be rank-2 matrices");
    }
    const std::size_t in_w = i == 0 ? weights[0].extent(0) : mappings[i - 1].old_width;
    const std::size_t out_w =
        i + 1 == layers ? weights[i].extent(1) : mappings[i].old_width;
    if (weights[i].extent(0) != in_w || weights[i].extent(1) != out_w) {
      throw ValueError("alg1_reference: layer " + std::to_string(i) +
                       " shape " + weights[i].shape_str() +
                       " is inconsistent with the plan widths");
    }
    if (i + 1 < layers && weights[i + 1].extent(0) != mappings[i].old_width) {
      throw ValueError("alg1_reference: interface width mismatch at layer " +
                       std::to_string(i));
    }
  }

  const auto interface = [&](std::size_t i, std::size_t fallback) -> Mapping {
    if (i == 0 || i == layers) return Mapping::identity(fallback);
    return mappings[i - 1];
  };

  std::vector<Tensor> out;
  out.reserve(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    const Mapping g_in = interface(i, weights[i].extent(0));
    const Mapping g_out = interface(i + 1, weights[i].extent(1));
    // Counts accumulated from the input-side mapping, as the rule states.
    std::vector<uint32_t> counts(g_in.old_width, 0u);
    for (std::size_t j = 0; j < g_in.new_width; ++j) counts[g_in.map[j]] += 1;

    const Tensor& w = weights[i];
    Tensor u({g_in.new_width, g_out.new_width}, w.dtype());
    const std::size_t old_out = w.extent(1);
    if (w.dtype() == Dtype::f32) {
      auto pw = w.data<float>();
      auto pu = u.data<float>();
      for (std::size_t k = 0; k < g_in.new_width; ++k) {
        for (std::size_t j = 0; j < g_out.new_width; ++j) {
          pu[k * g_out.new_width + j] =
              pw[g_in.map[k] * old_out + g_out.map[j]] /
              float(counts[g_in.map[k]]);
        }
      }
    } else {
      auto pw = w.data<double>();
      auto pu = u.data<double>();
      for (std::size_t k = 0; k < g_in.new_width; ++k) {
        for (std::size_t j = 0; j < g_out.new_width; ++j) {
          pu[k * g_out.new_width + j] =
              pw[g_in.map[k] * old_out + g_out.map[j]] /
              double(counts[g_in.map[k]]);
        }
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace n2n
