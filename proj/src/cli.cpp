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

#include "n2n/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "n2n/experiment.hpp"
#include "n2n/model_io.hpp"
#include "n2n/model_zoo.hpp"
#include "n2n/net2net.hpp"
#include "n2n/train.hpp"
#include "n2n/verify.hpp"

namespace n2n::cli {

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct DataFlags {
  std::string source;
  std::size_t classes = 3;
  std::size_t n_train = 2048;
  std::size_t n_eval = 512;
  std::string input = "1,16,16";

  std::vector<std::size_t> input_shape() const {
    std::vector<std::size_t> shape;
    for (const auto& tok : split_list(input, ',')) {
      shape.push_back(std::size_t(std::stoull(tok)));
    }
    return shape;
  }
  Dataset load() const {
    return load_dataset(source, classes, n_train, n_eval, input_shape());
  }
};

void add_data_flags(CLI::App* cmd, DataFlags& flags, const char* flag_name) {
  cmd->add_option(flag_name, flags.source,
                  "data source: synth:SEED or idx:IMAGES,LABELS")
      ->required();
  cmd->add_option("--classes", flags.classes, "synthetic class count");
  cmd->add_option("--n-train", flags.n_train, "synthetic training examples");
  cmd->add_option("--n-eval", flags.n_eval, "synthetic eval examples");
  cmd->add_option("--input", flags.input, "synthetic input shape, e.g. 1,16,16");
}

WidenSpec parse_widen_spec(const Graph& g, const std::string& text) {
  WidenSpec spec;
  for (const auto& part : split_list(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      throw ValueError("widen spec entries must look like NODE=WIDTH");
    }
    spec.new_widths[g.require(part.substr(0, eq))] =
        std::size_t(std::stoull(part.substr(eq + 1)));
  }
  if (spec.new_widths.empty()) throw ValueError("widen spec is empty");
  return spec;
}

std::string plan_to_json(const Graph& g, const RemapPlan& plan) {
  nlohmann::json j;
  j["interfaces"] = nlohmann::json::array();
  for (NodeId id : plan.widened()) {
    const Mapping& m = plan.at(id);
    nlohmann::json ji;
    ji["node"] = g.node(id).name;
    ji["old_width"] = m.old_width;
    ji["new_width"] = m.new_width;
    ji["mapping"] = m.map;
    ji["counts"] = m.counts;
    j["interfaces"].push_back(std::move(ji));
  }
  return j.dump(2);
}

int cmd_init(const std::string& recipe, const std::string& widths,
             const std::string& channels, std::size_t classes,
             const std::string& input, uint64_t seed, const std::string& dtype,
             const std::string& out) {
  std::vector<std::size_t> input_shape;
  for (const auto& tok : split_list(input, ',')) {
    input_shape.push_back(std::size_t(std::stoull(tok)));
  }
  Graph g;
  if (recipe == "mlp") {
    std::vector<std::size_t> hidden;
    for (const auto& tok : split_list(widths, ',')) {
      hidden.push_back(std::size_t(std::stoull(tok)));
    }
    g = build_mlp(input_shape, hidden, classes);
  } else if (recipe == "toy_inception") {
    const auto ch = split_list(channels, ',');
    if (ch.size() != 4) {
      throw ValueError("--channels must be stem,branch_a,branch_b,branch_c");
    }
    ToyInceptionWidths w;
    w.stem = std::stoull(ch[0]);
    w.branch_a = std::stoull(ch[1]);
    w.branch_b = std::stoull(ch[2]);
    w.branch_c = std::stoull(ch[3]);
    g = build_toy_inception(input_shape, w, classes);
  } else {
    throw ValueError("recipe must be mlp or toy_inception");
  }
  Rng rng(seed);
  ParamSet p = init_params(g, dtype == "f64" ? Dtype::f64 : Dtype::f32, rng);
  save_model(g, p, std::nullopt, out);
  std::cerr << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"function-preserving network transformations"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_model, train_metrics, train_save;
  DataFlags train_data;
  std::size_t train_steps = 1000, train_batch = 16;
  uint64_t train_seed = 0;
  double train_lr = 0.001;
  std::string train_opt = "rmsprop";
  std::size_t train_eval_every = 50;
  train_cmd->add_option("--model", train_model, "model file")->required();
  add_data_flags(train_cmd, train_data, "--data");
  train_cmd->add_option("--steps", train_steps, "optimizer steps")->required();
  train_cmd->add_option("--lr", train_lr, "learning rate")->required();
  train_cmd->add_option("--optimizer", train_opt, "sgd or rmsprop")
      ->check(CLI::IsMember({"sgd", "rmsprop"}));
  train_cmd->add_option("--batch", train_batch, "batch size")->required();
  train_cmd->add_option("--seed", train_seed, "run seed")->required();
  train_cmd->add_option("--metrics", train_metrics, "metrics CSV path")
      ->required();
  train_cmd->add_option("--save", train_save, "save the trained model here");
  train_cmd->add_option("--eval-every", train_eval_every, "metrics interval");

  // ---- widen ----
  auto* widen_cmd = app.add_subcommand("widen", "widen hidden layers");
  std::string widen_model, widen_spec_text, widen_out, widen_plan;
  double widen_noise = 0.01;
  uint64_t widen_seed = 0;
  widen_cmd->add_option("--model", widen_model, "teacher model file")->required();
  widen_cmd->add_option("--spec", widen_spec_text, "NODE=WIDTH[,NODE=WIDTH...]")
      ->required();
  widen_cmd->add_option("--noise", widen_noise,
                        "relative std of symmetry-breaking noise (0 disables)");
  widen_cmd->add_option("--seed", widen_seed, "seed for mapping and noise")
      ->required();
  widen_cmd->add_option("--out", widen_out, "student model path")->required();
  widen_cmd->add_option("--plan", widen_plan, "write the remap plan JSON here");

  // ---- deepen ----
  auto* deepen_cmd = app.add_subcommand("deepen", "insert identity layers");
  std::string deepen_model, deepen_at, deepen_out;
  DataFlags deepen_calib;
  double deepen_noise = 0.0;
  deepen_cmd->add_option("--model", deepen_model, "teacher model file")
      ->required();
  deepen_cmd->add_option("--at", deepen_at, "NODE[,NODE...]")->required();
  add_data_flags(deepen_cmd, deepen_calib, "--calib");
  deepen_cmd->add_option("--noise", deepen_noise,
                         "relative std of symmetry-breaking noise (0 disables)");
  deepen_cmd->add_option("--out", deepen_out, "student model path")->required();

  // ---- verify ----
  auto* verify_cmd = app.add_subcommand("verify", "check function preservation");
  std::string verify_teacher, verify_student;
  std::size_t verify_samples = 256;
  double verify_tol = 1e-5;
  uint64_t verify_seed = 7;
  verify_cmd->add_option("--teacher", verify_teacher, "teacher model")->required();
  verify_cmd->add_option("--student", verify_student, "student model")->required();
  verify_cmd->add_option("--samples", verify_samples, "input samples")->required();
  verify_cmd->add_option("--tol", verify_tol, "max absolute difference")
      ->required();
  verify_cmd->add_option("--seed", verify_seed, "input sampler seed");

  // ---- experiment ----
  auto* exp_cmd = app.add_subcommand("experiment", "run a comparison experiment");
  std::string exp_config, exp_outdir;
  exp_cmd->add_option("--config", exp_config, "experiment config file")
      ->required();
  exp_cmd->add_option("--outdir", exp_outdir, "output directory")->required();

  // ---- init (bootstrap models for the other subcommands) ----
  auto* init_cmd = app.add_subcommand("init", "create a freshly initialized model");
  std::string init_recipe = "mlp", init_widths = "16,16";
  std::string init_channels = "8,4,6,4", init_input = "1,16,16";
  std::string init_dtype = "f32", init_out;
  std::size_t init_classes = 3;
  uint64_t init_seed = 0;
  init_cmd->add_option("--recipe", init_recipe, "mlp or toy_inception");
  init_cmd->add_option("--widths", init_widths, "mlp hidden widths");
  init_cmd->add_option("--channels", init_channels,
                       "toy_inception stem,a,b,c channels");
  init_cmd->add_option("--classes", init_classes, "output classes");
  init_cmd->add_option("--input", init_input, "input shape");
  init_cmd->add_option("--seed", init_seed, "init seed");
  init_cmd->add_option("--dtype", init_dtype, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  init_cmd->add_option("--out", init_out, "output model path")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (*train_cmd) {
      LoadedModel model = load_model(train_model);
      const Dataset data = train_data.load();
      TrainConfig cfg;
      cfg.batch_size = train_batch;
      cfg.max_steps = train_steps;
      cfg.seed = train_seed;
      cfg.eval_every = train_eval_every;
      if (train_opt == "sgd") {
        cfg.optimizer = SgdMomentum{train_lr, 0.9};
      } else {
        cfg.optimizer = RmsProp{train_lr, 0.9, 1e-8};
      }
      std::ofstream csv(train_metrics);
      if (!csv) throw IoError("cannot write " + train_metrics);
      TrainState state;
      if (model.state) state = *model.state;
      ParamSet finals = train(model.graph, std::move(model.params), data, cfg,
                              csv_sink(csv), &state);
      if (!train_save.empty()) {
        save_model(model.graph, finals, state, train_save);
        std::cerr << "saved " << train_save << "\n";
      }
      return 0;
    }

    if (*widen_cmd) {
      LoadedModel model = load_model(widen_model);
      const WidenSpec spec = parse_widen_spec(model.graph, widen_spec_text);
      Rng rng = Rng::stream(widen_seed, 0);
      const NoiseConfig noise =
          widen_noise > 0.0 ? NoiseConfig::gaussian(widen_noise, widen_seed)
                            : NoiseConfig::off();
      WidenResult result = widen(model.graph, model.params, spec, noise, rng);
      const PreservationReport check = check_preserved(
          model.graph, model.params, result.graph, result.params,
          /*sampler_seed=*/widen_seed, /*n=*/16,
          noise.enabled ? 1e-2 : 1e-5);
      result.report.preservation = PreservationSummary{
          check.max_abs_diff, check.tolerance, check.passed};
      save_model(result.graph, result.params, std::nullopt, widen_out);
      if (!widen_plan.empty()) {
        std::ofstream out(widen_plan);
        if (!out) throw IoError("cannot write " + widen_plan);
        out << plan_to_json(model.graph, result.plan) << "\n";
      }
      std::cerr << "widened " << result.plan.widened().size()
                << " interfaces; self-check max |diff| = " << check.max_abs_diff
                << "\n";
      return 0;
    }

    if (*deepen_cmd) {
      LoadedModel model = load_model(deepen_model);
      const Dataset calib_data = deepen_calib.load();
      std::vector<Tensor> calib;
      for (std::size_t b = 0; b + 16 <= calib_data.train_x.extent(0) && b < 160;
           b += 16) {
        std::vector<std::size_t> shape = calib_data.train_x.shape();
        shape[0] = 16;
        Tensor t(shape, Dtype::f32);
        auto src = calib_data.train_x.data<float>();
        auto dst = t.data<float>();
        const std::size_t per =
            calib_data.train_x.numel() / calib_data.train_x.extent(0);
        std::copy(src.begin() + std::ptrdiff_t(b * per),
                  src.begin() + std::ptrdiff_t((b + 16) * per), dst.begin());
        calib.push_back(std::move(t));
      }
      const NoiseConfig noise =
          deepen_noise > 0.0 ? NoiseConfig::gaussian(deepen_noise, 0)
                             : NoiseConfig::off();
      Graph g = model.graph;
      ParamSet p = model.params;
      for (const auto& name : split_list(deepen_at, ',')) {
        DeepenResult d = deepen(g, p, g.require(name), calib, noise);
        g = std::move(d.graph);
        p = std::move(d.params);
        std::cerr << "inserted identity block after " << name << "\n";
      }
      save_model(g, p, std::nullopt, deepen_out);
      return 0;
    }

    if (*verify_cmd) {
      LoadedModel teacher = load_model(verify_teacher);
      LoadedModel student = load_model(verify_student);
      const PreservationReport report =
          check_preserved(teacher.graph, teacher.params, student.graph,
                          student.params, verify_seed, verify_samples,
                          verify_tol);
      std::cout << report.to_json() << "\n";
      return report.passed ? 0 : 3;
    }

    if (*exp_cmd) {
      const ExperimentSpec spec =
          ExperimentSpec::from_config(KvConfig::parse_file(exp_config));
      run_experiment(spec, exp_outdir);
      return 0;
    }

    if (*init_cmd) {
      return cmd_init(init_recipe, init_widths, init_channels, init_classes,
                      init_input, init_seed, init_dtype, init_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace n2n::cli
