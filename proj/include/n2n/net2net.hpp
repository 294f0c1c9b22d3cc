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

#ifndef N2N_NET2NET_HPP_
#define N2N_NET2NET_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "n2n/graph.hpp"
#include "n2n/rng.hpp"

namespace n2n {

// Unit (or channel) remapping for one interface: new index -> old index.
// The first old_width entries are the identity, replicas follow, and every
// old unit appears at least once.
struct Mapping {
  std::size_t old_width = 0;
  std::size_t new_width = 0;
  std::vector<uint32_t> map;     // length new_width, values in [0, old_width)
  std::vector<uint32_t> counts;  // length old_width, counts[u] = |{j : map[j]=u}|

  static Mapping identity(std::size_t n);
  bool is_identity() const { return new_width == old_width; }
  void validate() const;

  // Recomputes counts from map.
  void refresh_counts();
};

// Unit-level view of a channel-level mapping: each channel expands to
// `spatial` consecutive units (row-major NCHW flattening).
Mapping expand_mapping(const Mapping& channel_map, std::size_t spatial);

// Output of remapping inference: a consistent output mapping for every node.
struct RemapPlan {
  std::map<NodeId, Mapping> node_out;

  const Mapping& at(NodeId id) const { return node_out.at(id); }
  // Interfaces actually widened (non-identity mappings), for reporting.
  std::vector<NodeId> widened() const;
};

// Target widths for hidden parametric nodes (units for dense layers,
// channels for convolutions). New width must exceed the old width.
struct WidenSpec {
  std::map<NodeId, std::size_t> new_widths;
};

struct NoiseConfig {
  bool enabled = false;
  double relative_std = 0.0;
  uint64_t seed = 0;

  static NoiseConfig off() { return {}; }
  static NoiseConfig gaussian(double relative_std, uint64_t seed);
  void validate() const;
};

struct PreservationSummary {
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct TransformReport {
  std::vector<std::string> affected_nodes;
  bool noise_applied = false;
  double noise_relative_std = 0.0;
  std::optional<PreservationSummary> preservation;  // filled by callers
};

// Derives a consistent per-node remapping for the requested widths by a
// forward pass over the DAG: elementwise nodes propagate their
// predecessor's mapping, batch-norm parameters share the producing layer's
// mapping, concatenation composes branch mappings with channel offsets,
// maxout requires (and reduces) piece-aligned group mappings, and output
// layers are never remapped.
RemapPlan infer_remaps(const Graph& g, const WidenSpec& spec, Rng& rng);

struct WidenResult {
  Graph graph;
  ParamSet params;
  RemapPlan plan;
  TransformReport report;
};

// Net2WiderNet: replaces targeted layers with wider ones by unit
// replication. Incoming weights and biases are copied through the mapping;
// weights consuming a replicated unit are divided by its replication count.
WidenResult widen(const Graph& g, const ParamSet& p, const WidenSpec& spec,
                  const NoiseConfig& noise, Rng& rng);
// Same, with a caller-supplied plan (used by tests and the reference oracle).
WidenResult widen_with_plan(const Graph& g, const ParamSet& p,
                            const WidenSpec& spec, RemapPlan plan,
                            const NoiseConfig& noise);

struct DeepenResult {
  Graph graph;
  ParamSet params;
  TransformReport report;
  std::vector<NodeId> id_map;       // old id -> new id
  NodeId inserted_layer = -1;       // the new identity layer
};

// Net2DeeperNet: inserts an identity-initialized layer (plus batch norm
// when the insertion point carries one, plus a clone of the activation)
// after the activation that follows `at`. The following activation must be
// a rectifier or maxout. Conv insertions need odd kernel extents; the
// default kernel matches the layer below. calib_batches feed the forward
// passes that estimate statistics for the inserted batch norm.
DeepenResult deepen(const Graph& g, const ParamSet& p, NodeId at,
                    const std::vector<Tensor>& calib_batches,
                    const NoiseConfig& noise,
                    std::optional<std::pair<std::size_t, std::size_t>> kernel = {});

struct ComposedResult {
  Graph graph;
  ParamSet params;
  TransformReport report;
};

// widen followed by deepen at each named node (names resolved after the
// widen, in order). Preservation composes when noise is disabled.
ComposedResult widen_then_deepen(const Graph& g, const ParamSet& p,
                                 const WidenSpec& wspec,
                                 const std::vector<std::string>& deepen_at,
                                 const std::vector<Tensor>& calib_batches,
                                 const NoiseConfig& noise, Rng& rng);

}  // namespace n2n

#endif  // N2N_NET2NET_HPP_
