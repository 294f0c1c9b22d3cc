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

#ifndef N2N_TRAIN_HPP_
#define N2N_TRAIN_HPP_

#include <functional>
#include <optional>
#include <ostream>
#include <variant>

#include "n2n/graph.hpp"
#include "n2n/model_io.hpp"

namespace n2n {

struct SgdMomentum {
  double lr = 0.01;
  double momentum = 0.9;
};

struct RmsProp {
  double lr = 0.001;
  double decay = 0.9;
  double epsilon = 1e-8;
};

using Optimizer = std::variant<SgdMomentum, RmsProp>;

struct StepDecay {
  double factor = 0.1;
  std::size_t every = 1000;
};

struct TrainConfig {
  Optimizer optimizer = RmsProp{};
  std::size_t batch_size = 16;
  std::size_t max_steps = 1000;
  std::optional<StepDecay> lr_schedule;  // nullopt = constant
  uint64_t seed = 0;
  std::size_t eval_every = 50;

  void validate() const;
  double base_lr() const;
  double lr_at(std::size_t step) const;
};

// Student runs reuse the teacher's hyperparameters with a tenth of the
// initial learning rate.
TrainConfig student_config(const TrainConfig& teacher_cfg);

struct MetricsRow {
  std::size_t step = 0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double loss = 0.0;
  int64_t wall_ms = 0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

// Writes `step,train_acc,eval_acc,loss,wall_ms` rows to the stream.
// Header is written immediately.
MetricsSink csv_sink(std::ostream& out);

// One optimizer step; state slots live under "<param>.velocity" / "<param>.ms".
void sgd_momentum_step(ParamSet& p, const ParamSet& grads, ParamSet& state,
                       const SgdMomentum& hyper, double lr);
void rmsprop_step(ParamSet& p, const ParamSet& grads, ParamSet& state,
                  const RmsProp& hyper, double lr);

// Deterministic minibatch training: epoch order is reshuffled from the run
// seed, dropout masks are seeded per step, batch-norm running statistics
// follow an exponential moving average (momentum 0.9). Metrics are emitted
// at step 0, every eval_every steps, and at the final step. Throws
// TrainingError on a non-finite loss. If `state` is given, training resumes
// from state->step with the stored optimizer slots and leaves the final
// slots/step in it.
ParamSet train(const Graph& g, ParamSet params, const Dataset& data,
               const TrainConfig& cfg, const MetricsSink& sink,
               TrainState* state = nullptr);

const char* optimizer_name(const Optimizer& opt);

}  // namespace n2n

#endif  // N2N_TRAIN_HPP_
