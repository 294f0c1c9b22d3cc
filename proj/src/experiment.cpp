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

#include "n2n/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "n2n/model_io.hpp"
#include "n2n/verify.hpp"

namespace n2n {

// ---------------------------------------------------------------------------
// KvConfig
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

KvConfig KvConfig::parse_text(const std::string& text) {
  KvConfig cfg;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValueError("config line " + std::to_string(lineno) +
                         ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config line " + std::to_string(lineno) +
                       ": expected key = value");
    }
    cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_text(text);
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) != 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  auto kt = it->second.find(key);
  return kt == it->second.end() ? fallback : kt->second;
}

std::string KvConfig::require(const std::string& section,
                              const std::string& key) const {
  if (!has(section, key)) {
    throw ValueError("config is missing '" + key + "'" +
                     (section.empty() ? "" : " in [" + section + "]"));
  }
  return get(section, key, "");
}

double KvConfig::get_double(const std::string& section, const std::string& key,
                            double fallback) const {
  if (!has(section, key)) return fallback;
  return std::stod(get(section, key, ""));
}

std::size_t KvConfig::get_size(const std::string& section, const std::string& key,
                               std::size_t fallback) const {
  if (!has(section, key)) return fallback;
  return std::size_t(std::stoull(get(section, key, "")));
}

// ---------------------------------------------------------------------------
// ExperimentSpec
// ---------------------------------------------------------------------------

const char* arm_name(ArmKind a) {
  switch (a) {
    case ArmKind::net2net: return "net2net";
    case ArmKind::random_pad: return "random_pad";
    default: return "random_init";
  }
}

namespace {

TrainConfig train_config_from(const KvConfig& cfg, const std::string& section,
                              const TrainConfig& base) {
  TrainConfig out = base;
  out.batch_size = cfg.get_size(section, "batch", base.batch_size);
  out.max_steps = cfg.get_size(section, "steps", base.max_steps);
  out.eval_every = cfg.get_size(section, "eval_every", base.eval_every);
  out.seed = cfg.get_size(section, "seed", base.seed);
  const std::string opt = cfg.get(section, "optimizer",
                                  optimizer_name(base.optimizer));
  const double lr = cfg.get_double(section, "lr", base.base_lr());
  if (opt == "sgd") {
    SgdMomentum s;
    s.lr = lr;
    s.momentum = cfg.get_double(section, "momentum", 0.9);
    out.optimizer = s;
  } else if (opt == "rmsprop") {
    RmsProp r;
    r.lr = lr;
    r.decay = cfg.get_double(section, "decay", 0.9);
    r.epsilon = cfg.get_double(section, "epsilon", 1e-8);
    out.optimizer = r;
  } else {
    throw ValueError("unknown optimizer '" + opt + "' in [" + section + "]");
  }
  if (cfg.has(section, "lr_decay_factor")) {
    StepDecay sd;
    sd.factor = cfg.get_double(section, "lr_decay_factor", 0.1);
    sd.every = cfg.get_size(section, "lr_decay_every", 1000);
    out.lr_schedule = sd;
  }
  out.validate();
  return out;
}

}  // namespace

ExperimentSpec ExperimentSpec::from_config(const KvConfig& cfg) {
  ExperimentSpec spec;
  const std::string name = cfg.require("", "name");
  if (name == "wider") {
    spec.kind = ExperimentKind::wider;
  } else if (name == "deeper") {
    spec.kind = ExperimentKind::deeper;
  } else if (name == "explore") {
    spec.kind = ExperimentKind::explore;
  } else {
    throw ValueError("experiment name must be wider, deeper or explore");
  }
  spec.data = cfg.require("", "data");
  spec.data_classes = cfg.get_size("", "classes", spec.data_classes);
  spec.data_n_train = cfg.get_size("", "n_train", spec.data_n_train);
  spec.data_n_eval = cfg.get_size("", "n_eval", spec.data_n_eval);
  if (cfg.has("", "input")) {
    spec.input_shape.clear();
    for (const auto& tok : split(cfg.get("", "input", ""), ',')) {
      spec.input_shape.push_back(std::size_t(std::stoull(tok)));
    }
  }
  for (const auto& tok : split(cfg.require("", "seeds"), ',')) {
    spec.seeds.push_back(std::stoull(tok));
  }
  if (spec.seeds.empty()) throw ValueError("experiment needs >= 1 seed");
  spec.noise = cfg.get_double("", "noise", 0.0);
  if (cfg.has("", "channels")) {
    const auto ch = split(cfg.get("", "channels", ""), ',');
    if (ch.size() != 4) {
      throw ValueError("channels must be stem,branch_a,branch_b,branch_c");
    }
    spec.channels.stem = std::stoull(ch[0]);
    spec.channels.branch_a = std::stoull(ch[1]);
    spec.channels.branch_b = std::stoull(ch[2]);
    spec.channels.branch_c = std::stoull(ch[3]);
  }
  spec.narrow_factor = cfg.get_double("", "narrow_factor", spec.narrow_factor);
  spec.widen_factor = cfg.get_double("", "widen_factor", spec.widen_factor);
  if (cfg.has("", "deepen_at")) {
    spec.deepen_at = split(cfg.get("", "deepen_at", ""), ',');
  }
  if (cfg.has("", "teacher_model")) {
    spec.teacher_model = cfg.get("", "teacher_model", "");
  }
  TrainConfig defaults;
  defaults.optimizer = RmsProp{0.002, 0.9, 1e-8};
  defaults.batch_size = 16;
  defaults.max_steps = 1000;
  defaults.eval_every = 50;
  defaults.seed = 1;
  spec.teacher_train = train_config_from(cfg, "teacher", defaults);
  spec.student_train = train_config_from(cfg, "student", spec.teacher_train);
  for (const char* arm : {"net2net", "random_pad", "random_init"}) {
    const std::string section = std::string("arm:") + arm;
    spec.arm_overrides[arm] = train_config_from(cfg, section, spec.student_train);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Random-pad baseline
// ---------------------------------------------------------------------------

WidenResult random_pad_baseline(const Graph& g, const ParamSet& p,
                                const WidenSpec& spec, Rng& rng) {
  WidenResult wr = widen(g, p, spec, NoiseConfig::off(), rng);
  ParamSet padded;
  for (const Node& n : g.nodes()) {
    if (std::holds_alternative<DenseKind>(n.kind)) {
      const Tensor& old_w = p.at(n.id, "weight");
      const Tensor& new_w = wr.params.at(n.id, "weight");
      Tensor w(new_w.shape(), new_w.dtype());
      const std::size_t old_in = old_w.extent(0), old_out = old_w.extent(1);
      const std::size_t new_in = w.extent(0), new_out = w.extent(1);
      const double std = std::sqrt(2.0 / double(new_in));
      for (std::size_t k = 0; k < new_in; ++k) {
        for (std::size_t j = 0; j < new_out; ++j) {
          if (k < old_in && j < old_out) {
            w.set(k * new_out + j, old_w.get(k * old_out + j));
          } else {
            w.set(k * new_out + j, rng.normal() * std);
          }
        }
      }
      padded.set(n.id, "weight", std::move(w));
      const Tensor& old_b = p.at(n.id, "bias");
      Tensor b({new_out}, old_b.dtype());
      for (std::size_t j = 0; j < old_out; ++j) b.set(j, old_b.get(j));
      padded.set(n.id, "bias", std::move(b));
    } else if (const auto* c = std::get_if<Conv2DKind>(&n.kind)) {
      const Tensor& old_w = p.at(n.id, "kernel");
      const Tensor& new_w = wr.params.at(n.id, "kernel");
      Tensor w(new_w.shape(), new_w.dtype());
      const std::size_t old_k = old_w.extent(0), old_c = old_w.extent(1);
      const std::size_t new_k = w.extent(0), new_c = w.extent(1);
      const std::size_t taps = c->geom.kernel_h * c->geom.kernel_w;
      const double std = std::sqrt(2.0 / double(new_c * taps));
      for (std::size_t ko = 0; ko < new_k; ++ko) {
        for (std::size_t ci = 0; ci < new_c; ++ci) {
          for (std::size_t t = 0; t < taps; ++t) {
            if (ko < old_k && ci < old_c) {
              w.set((ko * new_c + ci) * taps + t,
                    old_w.get((ko * old_c + ci) * taps + t));
            } else {
              w.set((ko * new_c + ci) * taps + t, rng.normal() * std);
            }
          }
        }
      }
      padded.set(n.id, "kernel", std::move(w));
      const Tensor& old_b = p.at(n.id, "bias");
      Tensor b({new_k}, old_b.dtype());
      for (std::size_t j = 0; j < old_k; ++j) b.set(j, old_b.get(j));
      padded.set(n.id, "bias", std::move(b));
    } else if (std::holds_alternative<BatchNormKind>(n.kind)) {
      const std::size_t old_c = p.at(n.id, "gamma").extent(0);
      const std::size_t new_c = wr.params.at(n.id, "gamma").extent(0);
      const Dtype dtype = p.at(n.id, "gamma").dtype();
      Tensor gamma = Tensor::full({new_c}, dtype, 1.0);
      Tensor beta({new_c}, dtype);
      Tensor rmean({new_c}, dtype);
      Tensor rvar = Tensor::full({new_c}, dtype, 1.0);
      for (std::size_t j = 0; j < old_c; ++j) {
        gamma.set(j, p.at(n.id, "gamma").get(j));
        beta.set(j, p.at(n.id, "beta").get(j));
        rmean.set(j, p.at(n.id, "running_mean").get(j));
        rvar.set(j, p.at(n.id, "running_var").get(j));
      }
      padded.set(n.id, "gamma", std::move(gamma));
      padded.set(n.id, "beta", std::move(beta));
      padded.set(n.id, "running_mean", std::move(rmean));
      padded.set(n.id, "running_var", std::move(rvar));
    }
  }
  check_params(wr.graph, padded);
  wr.params = std::move(padded);
  wr.report.affected_nodes.clear();
  wr.report.noise_applied = false;
  return wr;
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

Dataset load_dataset(const std::string& data, std::size_t classes,
                     std::size_t n_train, std::size_t n_eval,
                     const std::vector<std::size_t>& input_shape) {
  if (data.rfind("synth:", 0) == 0) {
    SyntheticSpec spec;
    spec.seed = std::stoull(data.substr(6));
    spec.n_classes = classes;
    spec.n_train = n_train;
    spec.n_eval = n_eval;
    spec.input_shape = input_shape;
    return synthetic(spec);
  }
  if (data.rfind("idx:", 0) == 0) {
    const auto paths = split(data.substr(4), ',');
    if (paths.size() != 2) {
      throw ValueError("idx data source must be idx:IMAGES,LABELS");
    }
    return dataset_from_idx(load_idx(paths[0], paths[1]), n_eval);
  }
  throw ValueError("data source must be synth:SEED or idx:IMAGES,LABELS");
}

namespace {

struct Student {
  Graph graph;
  ParamSet params;
};

std::vector<Tensor> calibration_batches(const Dataset& data, std::size_t count,
                                        std::size_t batch) {
  std::vector<Tensor> out;
  const std::size_t n = data.train_x.extent(0);
  const std::size_t per = data.train_x.numel() / n;
  auto src = data.train_x.data<float>();
  for (std::size_t b = 0; b < count && (b + 1) * batch <= n; ++b) {
    std::vector<std::size_t> shape = data.train_x.shape();
    shape[0] = batch;
    Tensor t(shape, Dtype::f32);
    auto dst = t.data<float>();
    std::copy(src.begin() + std::ptrdiff_t(b * batch * per),
              src.begin() + std::ptrdiff_t((b + 1) * batch * per), dst.begin());
    out.push_back(std::move(t));
  }
  return out;
}

// Inserts a vertical-then-horizontal identity conv pair after each listed
// layer, mirroring the paired rectangular layers of the module recipe.
Student deepen_pairs(const Graph& g, const ParamSet& p,
                     const std::vector<std::string>& at,
                     const std::vector<Tensor>& calib,
                     const NoiseConfig& noise) {
  Student s{g, p};
  for (const std::string& name : at) {
    DeepenResult v = deepen(s.graph, s.params, s.graph.require(name), calib,
                            noise, std::make_pair<std::size_t, std::size_t>(3, 1));
    const std::string v_name = v.graph.node(v.inserted_layer).name;
    s.graph = std::move(v.graph);
    s.params = std::move(v.params);
    DeepenResult h = deepen(s.graph, s.params, s.graph.require(v_name), calib,
                            noise, std::make_pair<std::size_t, std::size_t>(1, 3));
    s.graph = std::move(h.graph);
    s.params = std::move(h.params);
  }
  return s;
}

WidenSpec widen_spec_for(const Graph& g,
                         const std::map<std::string, std::size_t>& widths) {
  WidenSpec spec;
  for (const auto& [name, width] : widths) {
    spec.new_widths[g.require(name)] = width;
  }
  return spec;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const ArmSummary& ExperimentSummary::arm(ArmKind kind) const {
  for (const auto& a : arms) {
    if (a.kind == kind) return a;
  }
  throw ValueError("experiment summary has no such arm");
}

ExperimentSummary run_experiment(const ExperimentSpec& spec,
                                 const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  const Dataset data = load_dataset(spec.data, spec.data_classes,
                                    spec.data_n_train, spec.data_n_eval,
                                    spec.input_shape);

  // Teacher: the narrow model for widening runs, the standard model for
  // deepening runs.
  const ToyInceptionWidths teacher_widths =
      spec.kind == ExperimentKind::wider
          ? scale_widths(spec.channels, spec.narrow_factor)
          : spec.channels;
  Graph teacher_g;
  ParamSet teacher_p;
  if (spec.teacher_model) {
    LoadedModel m = load_model(*spec.teacher_model);
    teacher_g = std::move(m.graph);
    teacher_p = std::move(m.params);
  } else {
    teacher_g = build_toy_inception(spec.input_shape, teacher_widths,
                                    data.n_classes);
    Rng init_rng = Rng::stream(spec.teacher_train.seed, 100);
    teacher_p = init_params(teacher_g, Dtype::f32, init_rng);
    const std::string csv_path = outdir + "/teacher.csv";
    std::ofstream csv(csv_path);
    std::cerr << "[experiment] training teacher (" << spec.teacher_train.max_steps
              << " steps)\n";
    teacher_p = train(teacher_g, std::move(teacher_p), data, spec.teacher_train,
                      csv_sink(csv));
    save_model(teacher_g, teacher_p, std::nullopt, outdir + "/teacher.n2n");
  }
  const double threshold =
      accuracy(teacher_g, teacher_p, data.eval_x, data.eval_labels);
  std::cerr << "[experiment] teacher eval accuracy (threshold): " << threshold
            << "\n";

  std::vector<ArmKind> arms{ArmKind::net2net, ArmKind::random_init};
  if (spec.kind == ExperimentKind::wider) {
    arms.insert(arms.begin() + 1, ArmKind::random_pad);
  }

  const auto student_widths =
      spec.kind == ExperimentKind::explore
          ? scale_widths(spec.channels, spec.widen_factor)
          : spec.channels;
  const auto calib = calibration_batches(data, 10, 16);

  ExperimentSummary summary;
  summary.teacher_eval_accuracy = threshold;

  for (ArmKind arm : arms) {
    ArmSummary arm_summary;
    arm_summary.kind = arm;
    for (uint64_t seed : spec.seeds) {
      ArmSeedResult run;
      run.seed = seed;
      const std::string csv_path = outdir + "/" + arm_name(arm) + "_seed" +
                                   std::to_string(seed) + ".csv";
      run.csv_path = csv_path;
      try {
        Student student;
        Rng arm_rng = Rng::stream(seed, 200 + uint64_t(arm));
        const NoiseConfig noise = spec.noise > 0.0
                                      ? NoiseConfig::gaussian(spec.noise, seed)
                                      : NoiseConfig::off();
        switch (spec.kind) {
          case ExperimentKind::wider: {
            const WidenSpec wspec = widen_spec_for(
                teacher_g, toy_inception_widen_targets(student_widths));
            if (arm == ArmKind::net2net) {
              WidenResult w = widen(teacher_g, teacher_p, wspec, noise, arm_rng);
              student = {std::move(w.graph), std::move(w.params)};
            } else if (arm == ArmKind::random_pad) {
              WidenResult w =
                  random_pad_baseline(teacher_g, teacher_p, wspec, arm_rng);
              student = {std::move(w.graph), std::move(w.params)};
            } else {
              student.graph = build_toy_inception(spec.input_shape,
                                                  student_widths, data.n_classes);
              student.params = init_params(student.graph, Dtype::f32, arm_rng);
            }
            break;
          }
          case ExperimentKind::deeper: {
            if (arm == ArmKind::net2net) {
              student = deepen_pairs(teacher_g, teacher_p, spec.deepen_at, calib,
                                     noise);
            } else {
              Student shape_only = deepen_pairs(teacher_g, teacher_p,
                                                spec.deepen_at, calib,
                                                NoiseConfig::off());
              student.graph = std::move(shape_only.graph);
              student.params = init_params(student.graph, Dtype::f32, arm_rng);
            }
            break;
          }
          case ExperimentKind::explore: {
            const WidenSpec wspec = widen_spec_for(
                teacher_g, toy_inception_widen_targets(student_widths));
            WidenResult w =
                widen(teacher_g, teacher_p, wspec, noise, arm_rng);
            Student wide = deepen_pairs(w.graph, w.params, spec.deepen_at,
                                        calib, noise);
            if (arm == ArmKind::net2net) {
              student = std::move(wide);
            } else {
              student.graph = std::move(wide.graph);
              student.params = init_params(student.graph, Dtype::f32, arm_rng);
            }
            break;
          }
        }

        TrainConfig cfg = spec.arm_overrides.at(arm_name(arm));
        if (arm == ArmKind::net2net) cfg = student_config(cfg);
        cfg.seed = seed;

        std::vector<MetricsRow> rows;
        std::ofstream csv(csv_path);
        MetricsSink file_sink = csv_sink(csv);
        MetricsSink sink = [&](const MetricsRow& row) {
          rows.push_back(row);
          file_sink(row);
        };
        std::cerr << "[experiment] arm " << arm_name(arm) << " seed " << seed
                  << " (" << cfg.max_steps << " steps)\n";
        train(student.graph, std::move(student.params), data, cfg, sink);

        run.step0_eval_accuracy = rows.front().eval_accuracy;
        run.final_eval_accuracy = rows.back().eval_accuracy;
        run.steps_to_threshold = -1;
        for (const MetricsRow& row : rows) {
          if (row.eval_accuracy >= threshold) {
            run.steps_to_threshold = int64_t(row.step);
            break;
          }
        }
      } catch (const Error& e) {
        run.aborted = true;
        run.abort_reason = e.what();
        std::cerr << "[experiment] arm " << arm_name(arm) << " seed " << seed
                  << " aborted: " << e.what() << "\n";
      }
      arm_summary.runs.push_back(std::move(run));
    }

    std::vector<double> steps, finals;
    for (const auto& run : arm_summary.runs) {
      if (run.aborted) {
        ++arm_summary.aborted;
        continue;
      }
      steps.push_back(run.steps_to_threshold < 0
                          ? std::numeric_limits<double>::infinity()
                          : double(run.steps_to_threshold));
      finals.push_back(run.final_eval_accuracy);
    }
    const double med = median(steps);
    arm_summary.median_steps_to_threshold = std::isinf(med) ? -1.0 : med;
    arm_summary.median_final_eval_accuracy = median(finals);
    summary.arms.push_back(std::move(arm_summary));
  }

  // summary.csv: one row per arm, derived only from the emitted CSV rows.
  summary.summary_csv_path = outdir + "/summary.csv";
  {
    std::ofstream out(summary.summary_csv_path);
    out << "arm,median_steps_to_threshold,median_final_eval_acc,seeds,aborted\n";
    for (const auto& arm : summary.arms) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu,%zu\n",
                    arm_name(arm.kind), arm.median_steps_to_threshold,
                    arm.median_final_eval_accuracy, arm.runs.size(),
                    arm.aborted);
      out << buf;
    }
  }

  summary.summary_json_path = outdir + "/summary.json";
  {
    nlohmann::json j;
    j["threshold_eval_accuracy"] = threshold;
    j["notes"]["random_pad_initializer"] =
        "new units drawn from the layer's He initializer (std = sqrt(2/fan_in))";
    for (const auto& arm : summary.arms) {
      nlohmann::json ja;
      ja["median_steps_to_threshold"] = arm.median_steps_to_threshold;
      ja["median_final_eval_acc"] = arm.median_final_eval_accuracy;
      ja["aborted"] = arm.aborted;
      for (const auto& run : arm.runs) {
        nlohmann::json jr;
        jr["seed"] = run.seed;
        jr["aborted"] = run.aborted;
        if (run.aborted) jr["abort_reason"] = run.abort_reason;
        jr["steps_to_threshold"] = run.steps_to_threshold;
        jr["final_eval_acc"] = run.final_eval_accuracy;
        jr["step0_eval_acc"] = run.step0_eval_accuracy;
        jr["csv"] = fs::path(run.csv_path).filename().string();
        ja["runs"].push_back(std::move(jr));
      }
      j["arms"][arm_name(arm.kind)] = std::move(ja);
    }
    std::ofstream out(summary.summary_json_path);
    out << j.dump(2) << "\n";
  }
  return summary;
}

}  // namespace n2n
