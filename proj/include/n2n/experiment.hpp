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

#ifndef N2N_EXPERIMENT_HPP_
#define N2N_EXPERIMENT_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "n2n/model_zoo.hpp"
#include "n2n/net2net.hpp"
#include "n2n/train.hpp"

namespace n2n {

// Flat `key = value` text with [section] headers and # comments.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_text(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  std::string require(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key,
                       std::size_t fallback) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class ExperimentKind { wider, deeper, explore };
enum class ArmKind { net2net, random_pad, random_init };

const char* arm_name(ArmKind a);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::wider;
  std::string data;                      // "synth:SEED" or "idx:IMAGES,LABELS"
  std::size_t data_classes = 3;
  std::size_t data_n_train = 2048;
  std::size_t data_n_eval = 512;
  std::vector<std::size_t> input_shape = {1, 16, 16};
  std::vector<uint64_t> seeds;
  double noise = 0.0;
  ToyInceptionWidths channels;           // the standard-size model
  double narrow_factor = 0.5477225575051661;  // sqrt(0.3)
  double widen_factor = 1.4142135623730951;   // sqrt(2), explore only
  std::vector<std::string> deepen_at;    // deeper/explore only
  std::optional<std::string> teacher_model;  // skip teacher training if set
  TrainConfig teacher_train;
  TrainConfig student_train;             // per-arm configs start from this
  std::map<std::string, TrainConfig> arm_overrides;

  static ExperimentSpec from_config(const KvConfig& cfg);
};

// Same architecture as the widened student, but the new units carry fresh
// random weights (the layer's He initializer) instead of replicated ones,
// and nothing is rescaled. Breaks function preservation by construction.
WidenResult random_pad_baseline(const Graph& g, const ParamSet& p,
                                const WidenSpec& spec, Rng& rng);

struct ArmSeedResult {
  uint64_t seed = 0;
  bool aborted = false;
  std::string abort_reason;
  int64_t steps_to_threshold = -1;  // -1 = never reached
  double final_eval_accuracy = 0.0;
  double step0_eval_accuracy = 0.0;
  std::string csv_path;
};

struct ArmSummary {
  ArmKind kind = ArmKind::net2net;
  std::vector<ArmSeedResult> runs;
  double median_steps_to_threshold = -1.0;  // -1 = median never reached
  double median_final_eval_accuracy = 0.0;
  std::size_t aborted = 0;
};

struct ExperimentSummary {
  double teacher_eval_accuracy = 0.0;  // the steps-to-threshold target
  std::vector<ArmSummary> arms;
  std::string summary_csv_path;
  std::string summary_json_path;

  const ArmSummary& arm(ArmKind kind) const;
};

// Trains (or loads) the teacher, constructs every arm per seed, trains each
// arm, and writes per-run CSVs plus summary.csv / summary.json under
// outdir. An aborting run poisons only its own arm entry.
ExperimentSummary run_experiment(const ExperimentSpec& spec,
                                 const std::string& outdir);

// Loads the dataset named by an experiment/CLI data string.
Dataset load_dataset(const std::string& data, std::size_t classes,
                     std::size_t n_train, std::size_t n_eval,
                     const std::vector<std::size_t>& input_shape);

}  // namespace n2n

#endif  // N2N_EXPERIMENT_HPP_
