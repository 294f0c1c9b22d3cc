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

#ifndef N2N_VERIFY_HPP_
#define N2N_VERIFY_HPP_

#include <string>
#include <vector>

#include "n2n/graph.hpp"
#include "n2n/net2net.hpp"

namespace n2n {

struct PreservationReport {
  std::size_t n_samples = 0;
  double max_abs_diff = 0.0;
  double mean_abs_diff = 0.0;
  double argmax_agreement = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  // Single JSON object with keys in a stable (sorted) order.
  std::string to_json() const;
};

// Standard-normal input batch [n, ...shape], seeded.
Tensor sample_inputs(const std::vector<std::size_t>& per_sample_shape,
                     std::size_t n, uint64_t seed, Dtype dtype);

// Compares teacher and student outputs in eval mode on the given inputs.
// Architectural mismatches (different input or output shapes) raise
// ShapeError instead of returning a failed report.
PreservationReport check_preserved(const Graph& tg, const ParamSet& tp,
                                   const Graph& sg, const ParamSet& sp,
                                   const Tensor& inputs, double tolerance);
// Same, sampling n standard-normal inputs from sampler_seed.
PreservationReport check_preserved(const Graph& tg, const ParamSet& tp,
                                   const Graph& sg, const ParamSet& sp,
                                   uint64_t sampler_seed, std::size_t n,
                                   double tolerance);

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central finite differences on every parameter coordinate (a seeded
// subsample above 10^4 coordinates). Requires f64 parameters. Relative
// error uses an absolute floor so exactly-zero gradients compare cleanly.
GradCheckResult grad_check(const Graph& g, const ParamSet& p, const Tensor& x,
                           const std::vector<int64_t>& labels, double eps = 1e-5,
                           double threshold = 1e-4);

// Direct nested-loop evaluation of the wider-net weight rule over a chain
// of weight matrices: U[k,j] = W[g_in(k), g_out(j)] / c_in(g_in(k)), with
// counts accumulated from the mapping exactly as the rule states. mappings
// holds the hidden interfaces only (interface i = output of layer i).
std::vector<Tensor> alg1_reference(const std::vector<Tensor>& weights,
                                   const std::vector<Mapping>& mappings);

}  // namespace n2n

#endif  // N2N_VERIFY_HPP_
