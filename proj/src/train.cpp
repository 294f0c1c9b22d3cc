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

#include "n2n/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace n2n {

namespace {

// Substream tags so the epoch shuffle, per-step dropout and any future
// consumer never collide on the same generator state.
constexpr uint64_t kShuffleTag = uint64_t(1) << 32;
constexpr uint64_t kDropoutTag = uint64_t(2) << 32;

}  // namespace

void TrainConfig::validate() const {
  if (base_lr() < 0.0) throw ValueError("learning rate must be >= 0");
  if (batch_size < 1) throw ValueError("batch size must be >= 1");
  if (max_steps < 1) throw ValueError("max_steps must be >= 1");
  if (eval_every < 1) throw ValueError("eval_every must be >= 1");
  if (const auto* r = std::get_if<RmsProp>(&optimizer)) {
    if (r->epsilon <= 0.0) throw ValueError("rmsprop epsilon must be > 0");
    if (r->decay < 0.0 || r->decay >= 1.0) {
      throw ValueError("rmsprop decay must be in [0,1)");
    }
  }
  if (lr_schedule && lr_schedule->every < 1) {
    throw ValueError("step decay interval must be >= 1");
  }
}

double TrainConfig::base_lr() const {
  if (const auto* s = std::get_if<SgdMomentum>(&optimizer)) return s->lr;
  return std::get<RmsProp>(optimizer).lr;
}

double TrainConfig::lr_at(std::size_t step) const {
  double lr = base_lr();
  if (lr_schedule) {
    const std::size_t drops = step / lr_schedule->every;
    for (std::size_t i = 0; i < drops; ++i) lr *= lr_schedule->factor;
  }
  return lr;
}

TrainConfig student_config(const TrainConfig& teacher_cfg) {
  TrainConfig cfg = teacher_cfg;
  if (auto* s = std::get_if<SgdMomentum>(&cfg.optimizer)) {
    s->lr /= 10.0;
  } else {
    std::get<RmsProp>(cfg.optimizer).lr /= 10.0;
  }
  return cfg;
}

const char* optimizer_name(const Optimizer& opt) {
  return std::holds_alternative<SgdMomentum>(opt) ? "sgd" : "rmsprop";
}

MetricsSink csv_sink(std::ostream& out) {
  out << "step,train_acc,eval_acc,loss,wall_ms\n";
  return [&out](const MetricsRow& row) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%lld\n", row.step,
                  row.train_accuracy, row.eval_accuracy, row.loss,
                  static_cast<long long>(row.wall_ms));
    out << buf;
  };
}

namespace {

template <typename T>
void sgd_update(Tensor& p, const Tensor& g, Tensor& v, T momentum, T lr) {
  auto pp = p.data<T>();
  auto pg = g.data<T>();
  auto pv = v.data<T>();
  for (std::size_t i = 0; i < pp.size(); ++i) {
    pv[i] = momentum * pv[i] + pg[i];
    pp[i] -= lr * pv[i];
  }
}

template <typename T>
void rms_update(Tensor& p, const Tensor& g, Tensor& ms, T decay, T eps, T lr) {
  auto pp = p.data<T>();
  auto pg = g.data<T>();
  auto pm = ms.data<T>();
  for (std::size_t i = 0; i < pp.size(); ++i) {
    pm[i] = decay * pm[i] + (T(1) - decay) * pg[i] * pg[i];
    pp[i] -= lr * pg[i] / (std::sqrt(pm[i]) + eps);
  }
}

Tensor& state_slot(ParamSet& state, NodeId id, const std::string& name,
                   const Tensor& like) {
  if (!state.has(id, name)) state.set(id, name, Tensor(like.shape(), like.dtype()));
  Tensor& slot = state.at(id, name);
  if (slot.shape() != like.shape()) {
    throw ShapeError("optimizer state slot shape mismatch for " + name);
  }
  return slot;
}

}  // namespace

void sgd_momentum_step(ParamSet& p, const ParamSet& grads, ParamSet& state,
                       const SgdMomentum& hyper, double lr) {
  for (auto& [id, tensors] : p.all()) {
    for (auto& [name, t] : tensors) {
      const Tensor& g = grads.at(id, name);
      Tensor& v = state_slot(state, id, name + ".velocity", t);
      if (t.dtype() == Dtype::f32) {
        sgd_update<float>(t, g, v, float(hyper.momentum), float(lr));
      } else {
        sgd_update<double>(t, g, v, hyper.momentum, lr);
      }
    }
  }
}

void rmsprop_step(ParamSet& p, const ParamSet& grads, ParamSet& state,
                  const RmsProp& hyper, double lr) {
  for (auto& [id, tensors] : p.all()) {
    for (auto& [name, t] : tensors) {
      const Tensor& g = grads.at(id, name);
      Tensor& ms = state_slot(state, id, name + ".ms", t);
      if (t.dtype() == Dtype::f32) {
        rms_update<float>(t, g, ms, float(hyper.decay), float(hyper.epsilon),
                          float(lr));
      } else {
        rms_update<double>(t, g, ms, hyper.decay, hyper.epsilon, lr);
      }
    }
  }
}

namespace {

struct Batch {
  Tensor x;
  std::vector<int64_t> labels;
};

Batch gather_batch(const Dataset& data, const std::vector<uint32_t>& order,
                   std::size_t first, std::size_t count) {
  std::vector<std::size_t> shape = data.train_x.shape();
  shape[0] = count;
  Batch b;
  b.x = Tensor(shape, data.train_x.dtype());
  b.labels.resize(count);
  const std::size_t per = data.train_x.numel() / data.train_x.extent(0);
  auto src = data.train_x.data<float>();
  auto dst = b.x.data<float>();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t row = order[first + i];
    std::copy(src.begin() + std::ptrdiff_t(row * per),
              src.begin() + std::ptrdiff_t((row + 1) * per),
              dst.begin() + std::ptrdiff_t(i * per));
    b.labels[i] = data.train_labels[row];
  }
  return b;
}

std::vector<uint32_t> epoch_order(std::size_t n, uint64_t seed, std::size_t epoch) {
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng = Rng::stream(seed, kShuffleTag + epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_u32(uint32_t(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void update_running_stats(const Graph& g, ParamSet& params,
                          const ForwardResult& fwd) {
  constexpr double kMomentum = 0.9;
  for (const auto& [id, moments] : fwd.bn_moments) {
    Tensor& rm = params.at(id, "running_mean");
    Tensor& rv = params.at(id, "running_var");
    const Tensor& mean = moments.first;
    const Tensor& var = moments.second;
    if (rm.dtype() == Dtype::f32) {
      auto prm = rm.data<float>();
      auto prv = rv.data<float>();
      auto pm = mean.data<float>();
      auto pv = var.data<float>();
      for (std::size_t i = 0; i < prm.size(); ++i) {
        prm[i] = float(kMomentum) * prm[i] + float(1.0 - kMomentum) * pm[i];
        prv[i] = float(kMomentum) * prv[i] + float(1.0 - kMomentum) * pv[i];
      }
    } else {
      auto prm = rm.data<double>();
      auto prv = rv.data<double>();
      auto pm = mean.data<double>();
      auto pv = var.data<double>();
      for (std::size_t i = 0; i < prm.size(); ++i) {
        prm[i] = kMomentum * prm[i] + (1.0 - kMomentum) * pm[i];
        prv[i] = kMomentum * prv[i] + (1.0 - kMomentum) * pv[i];
      }
    }
  }
  (void)g;
}

double batch_accuracy(const Graph& g, const ForwardResult& fwd,
                      const std::vector<int64_t>& labels) {
  const Tensor& out = fwd.activations[std::size_t(g.outputs().front())];
  const auto pred = argmax_rows(out);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == labels[i]) ++hit;
  }
  return double(hit) / double(pred.size());
}

}  // namespace

ParamSet train(const Graph& g, ParamSet params, const Dataset& data,
               const TrainConfig& cfg, const MetricsSink& sink,
               TrainState* state) {
  cfg.validate();
  g.validate();
  const std::size_t n_train = data.train_x.extent(0);
  if (cfg.batch_size > n_train) {
    throw ValueError("batch size exceeds the training set");
  }
  const std::size_t batches_per_epoch = n_train / cfg.batch_size;

  ParamSet slots;
  std::size_t start_step = 0;
  if (state) {
    slots = state->slots;
    start_step = state->step;
  }

  const auto apply_update = [&](const ParamSet& grads, double lr) {
    if (const auto* s = std::get_if<SgdMomentum>(&cfg.optimizer)) {
      sgd_momentum_step(params, grads, slots, *s, lr);
    } else {
      rmsprop_step(params, grads, slots, std::get<RmsProp>(cfg.optimizer), lr);
    }
  };

  const auto emit = [&](std::size_t completed, double loss, double train_acc) {
    if (!sink) return;
    MetricsRow row;
    row.step = completed;
    row.train_accuracy = train_acc;
    row.eval_accuracy = accuracy(g, params, data.eval_x, data.eval_labels);
    row.loss = loss;
    row.wall_ms = 0;  // kept deterministic so identical runs match byte-for-byte
    sink(row);
  };

  std::vector<uint32_t> order;
  std::size_t order_epoch = std::size_t(-1);
  const auto batch_for_step = [&](std::size_t step) {  // step is 1-based
    const std::size_t epoch = (step - 1) / batches_per_epoch;
    const std::size_t slot = (step - 1) % batches_per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(n_train, cfg.seed, epoch);
      order_epoch = epoch;
    }
    return gather_batch(data, order, slot * cfg.batch_size, cfg.batch_size);
  };

  for (std::size_t step = start_step + 1; step <= cfg.max_steps; ++step) {
    const Batch batch = batch_for_step(step);
    Rng dropout_rng = Rng::stream(cfg.seed, kDropoutTag + step);
    BackwardResult bwd =
        backward(g, params, batch.x, batch.labels, Mode::train, &dropout_rng);
    if (!std::isfinite(bwd.loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
    if ((step - 1) % cfg.eval_every == 0) {
      emit(step - 1, bwd.loss, batch_accuracy(g, bwd.fwd, batch.labels));
    }
    update_running_stats(g, params, bwd.fwd);
    apply_update(bwd.grads, cfg.lr_at(step - 1));
  }

  // Final row: loss/accuracy of the next batch under the final parameters.
  {
    const Batch batch = batch_for_step(cfg.max_steps + 1);
    Rng dropout_rng = Rng::stream(cfg.seed, kDropoutTag + cfg.max_steps + 1);
    Rng* rng = &dropout_rng;
    auto fwd = forward(g, params, batch.x, Mode::train, rng);
    const Tensor& out = fwd.activations[std::size_t(g.outputs().front())];
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      const double pr = std::max(
          out.get(i * out.extent(1) + std::size_t(batch.labels[i])), 1e-30);
      loss -= std::log(pr);
    }
    loss /= double(batch.labels.size());
    emit(cfg.max_steps, loss, batch_accuracy(g, fwd, batch.labels));
  }

  if (state) {
    state->slots = std::move(slots);
    state->step = cfg.max_steps;
    state->optimizer = optimizer_name(cfg.optimizer);
  }
  return params;
}

}  // namespace n2n
