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

#include "n2n/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <zlib.h>

#include "n2n/rng.hpp"

namespace n2n {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kMagic = "n2nmodel";

void put_le32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

void put_le64(std::vector<uint8_t>& out, uint64_t v) {
  put_le32(out, uint32_t(v));
  put_le32(out, uint32_t(v >> 32));
}

uint32_t get_le32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

uint64_t get_le64(const uint8_t* p) {
  return uint64_t(get_le32(p)) | uint64_t(get_le32(p + 4)) << 32;
}

void append_tensor(std::vector<uint8_t>& blob, const Tensor& t) {
  if (t.dtype() == Dtype::f32) {
    for (float v : t.data<float>()) put_le32(blob, std::bit_cast<uint32_t>(v));
  } else {
    for (double v : t.data<double>()) put_le64(blob, std::bit_cast<uint64_t>(v));
  }
}

Tensor read_tensor(const uint8_t* p, const std::vector<std::size_t>& shape,
                   Dtype dtype) {
  Tensor t(shape, dtype);
  if (dtype == Dtype::f32) {
    auto d = t.data<float>();
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = std::bit_cast<float>(get_le32(p + i * 4));
    }
  } else {
    auto d = t.data<double>();
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = std::bit_cast<double>(get_le64(p + i * 8));
    }
  }
  return t;
}

nlohmann::json kind_to_json(const NodeKind& kind) {
  nlohmann::json j;
  if (const auto* k = std::get_if<InputKind>(&kind)) {
    j["type"] = "input";
    j["shape"] = k->shape;
  } else if (const auto* k = std::get_if<DenseKind>(&kind)) {
    j["type"] = "dense";
    j["in"] = k->in;
    j["out"] = k->out;
  } else if (const auto* k = std::get_if<Conv2DKind>(&kind)) {
    j["type"] = "conv2d";
    j["kernel_h"] = k->geom.kernel_h;
    j["kernel_w"] = k->geom.kernel_w;
    j["stride_h"] = k->geom.stride_h;
    j["stride_w"] = k->geom.stride_w;
    j["pad_h"] = k->geom.pad_h;
    j["pad_w"] = k->geom.pad_w;
    j["in_channels"] = k->geom.in_channels;
    j["out_channels"] = k->geom.out_channels;
  } else if (std::holds_alternative<ReLUKind>(kind)) {
    j["type"] = "relu";
  } else if (const auto* k = std::get_if<MaxoutKind>(&kind)) {
    j["type"] = "maxout";
    j["pieces"] = k->pieces;
  } else if (const auto* k = std::get_if<BatchNormKind>(&kind)) {
    j["type"] = "batch_norm";
    j["channels"] = k->channels;
    j["epsilon"] = k->epsilon;
  } else if (std::holds_alternative<ConcatKind>(kind)) {
    j["type"] = "concat";
  } else if (const auto* k = std::get_if<DropoutKind>(&kind)) {
    j["type"] = "dropout";
    j["rate"] = k->rate;
  } else {
    j["type"] = "softmax_output";
  }
  return j;
}

NodeKind kind_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "input") {
    return InputKind{j.at("shape").get<std::vector<std::size_t>>()};
  }
  if (type == "dense") {
    return DenseKind{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()};
  }
  if (type == "conv2d") {
    ConvGeometry g;
    g.kernel_h = j.at("kernel_h").get<std::size_t>();
    g.kernel_w = j.at("kernel_w").get<std::size_t>();
    g.stride_h = j.at("stride_h").get<std::size_t>();
    g.stride_w = j.at("stride_w").get<std::size_t>();
    g.pad_h = j.at("pad_h").get<std::size_t>();
    g.pad_w = j.at("pad_w").get<std::size_t>();
    g.in_channels = j.at("in_channels").get<std::size_t>();
    g.out_channels = j.at("out_channels").get<std::size_t>();
    return Conv2DKind{g};
  }
  if (type == "relu") return ReLUKind{};
  if (type == "maxout") return MaxoutKind{j.at("pieces").get<std::size_t>()};
  if (type == "batch_norm") {
    return BatchNormKind{j.at("channels").get<std::size_t>(),
                         j.at("epsilon").get<double>()};
  }
  if (type == "concat") return ConcatKind{};
  if (type == "dropout") return DropoutKind{j.at("rate").get<double>()};
  if (type == "softmax_output") return SoftmaxOutputKind{};
  throw IoError("model file names unknown node kind '" + type + "'");
}

}  // namespace

void save_model(const Graph& g, const ParamSet& p,
                const std::optional<TrainState>& state, const std::string& path) {
  const Dtype dtype = check_params(g, p);

  std::vector<uint8_t> blob;
  nlohmann::json directory = nlohmann::json::array();
  const auto pack = [&](const ParamSet& set, const char* section) {
    for (const auto& [id, tensors] : set.all()) {
      for (const auto& [name, t] : tensors) {
        nlohmann::json entry;
        entry["node"] = id;
        entry["param"] = name;
        entry["section"] = section;
        entry["shape"] = t.shape();
        entry["offset"] = blob.size();
        entry["bytes"] = t.numel() * dtype_size(t.dtype());
        directory.push_back(std::move(entry));
        append_tensor(blob, t);
      }
    }
  };
  pack(p, "params");
  if (state) pack(state->slots, "state");

  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["dtype"] = dtype_name(dtype);
  header["blob_bytes"] = blob.size();
  header["checksum_crc32"] =
      uint32_t(crc32(0L, blob.empty() ? Z_NULL : blob.data(), uInt(blob.size())));
  nlohmann::json nodes = nlohmann::json::array();
  for (const Node& n : g.nodes()) {
    nlohmann::json jn;
    jn["name"] = n.name;
    jn["kind"] = kind_to_json(n.kind);
    jn["preds"] = n.preds;
    nodes.push_back(std::move(jn));
  }
  header["graph"]["nodes"] = std::move(nodes);
  header["graph"]["outputs"] = g.outputs();
  header["tensors"] = std::move(directory);
  if (state) {
    header["state"]["optimizer"] = state->optimizer;
    header["state"]["step"] = state->step;
  }

  const std::string header_text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << kMagic << ' ' << kFormatVersion << '\n';
    out << header_text.size() << '\n';
    out.write(header_text.data(), std::streamsize(header_text.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(blob.data()),
              std::streamsize(blob.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  const auto line_end = bytes.find('\n');
  if (line_end == std::string::npos) throw IoError(path + ": not a model file");
  const std::string magic_line = bytes.substr(0, line_end);
  if (magic_line.rfind(kMagic, 0) != 0 || magic_line.size() < strlen(kMagic) + 2) {
    throw IoError(path + ": bad magic, not a model file");
  }
  const int version = std::atoi(magic_line.c_str() + strlen(kMagic) + 1);
  if (version != kFormatVersion) {
    throw VersionError(path + ": file has format version " +
                       std::to_string(version) + ", this build reads version " +
                       std::to_string(kFormatVersion));
  }

  const auto len_end = bytes.find('\n', line_end + 1);
  if (len_end == std::string::npos) throw TruncatedError(path + ": truncated header");
  const std::size_t header_len =
      std::size_t(std::atoll(bytes.substr(line_end + 1, len_end - line_end - 1).c_str()));
  const std::size_t header_start = len_end + 1;
  if (header_start + header_len + 1 > bytes.size()) {
    throw TruncatedError(path + ": header extends past end of file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_start, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed header: " + e.what());
  }

  const std::size_t blob_start = header_start + header_len + 1;
  const std::size_t blob_bytes = header.at("blob_bytes").get<std::size_t>();
  if (blob_start + blob_bytes > bytes.size()) {
    throw TruncatedError(path + ": blob truncated (" +
                         std::to_string(bytes.size() - blob_start) + " of " +
                         std::to_string(blob_bytes) + " bytes)");
  }
  const uint8_t* blob = reinterpret_cast<const uint8_t*>(bytes.data()) + blob_start;
  const uint32_t crc =
      uint32_t(crc32(0L, blob_bytes == 0 ? Z_NULL : blob, uInt(blob_bytes)));
  if (crc != header.at("checksum_crc32").get<uint32_t>()) {
    throw ChecksumError(path + ": blob checksum mismatch");
  }
  const std::string dts = header.at("dtype").get<std::string>();
  if (dts != "f32" && dts != "f64") throw IoError(path + ": unknown dtype " + dts);
  const Dtype dtype = dts == "f32" ? Dtype::f32 : Dtype::f64;

  LoadedModel model;
  for (const auto& jn : header.at("graph").at("nodes")) {
    model.graph.add(jn.at("name").get<std::string>(), kind_from_json(jn.at("kind")),
                    jn.at("preds").get<std::vector<NodeId>>());
  }
  for (NodeId out : header.at("graph").at("outputs").get<std::vector<NodeId>>()) {
    model.graph.set_output(out);
  }

  if (header.contains("state")) {
    model.state = TrainState{};
    model.state->optimizer = header.at("state").at("optimizer").get<std::string>();
    model.state->step = header.at("state").at("step").get<std::size_t>();
  }

  std::size_t expected_offset = 0;
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t nbytes = entry.at("bytes").get<std::size_t>();
    std::size_t numel = 1;
    for (std::size_t e : shape) numel *= e;
    if (numel * dtype_size(dtype) != nbytes) {
      throw IoError(path + ": tensor directory entry size disagrees with shape");
    }
    if (offset != expected_offset || offset + nbytes > blob_bytes) {
      throw IoError(path + ": tensor directory offsets overlap or leave the blob");
    }
    expected_offset = offset + nbytes;
    Tensor t = read_tensor(blob + offset, shape, dtype);
    const NodeId id = entry.at("node").get<NodeId>();
    const std::string pname = entry.at("param").get<std::string>();
    if (entry.at("section").get<std::string>() == "params") {
      model.params.set(id, pname, std::move(t));
    } else {
      if (!model.state) throw IoError(path + ": state tensors without state header");
      model.state->slots.set(id, pname, std::move(t));
    }
  }
  if (expected_offset != blob_bytes) {
    throw IoError(path + ": blob has trailing bytes not covered by the directory");
  }
  check_params(model.graph, model.params);
  return model;
}

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

namespace {

uint32_t read_be32(std::ifstream& in, const std::string& path) {
  uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw TruncatedError(path + ": unexpected end of file");
  }
  return uint32_t(b[0]) << 24 | uint32_t(b[1]) << 16 | uint32_t(b[2]) << 8 |
         uint32_t(b[3]);
}

}  // namespace

IdxData load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  if (read_be32(imgs, images_path) != 0x00000803u) {
    throw IoError(images_path + ": bad magic for an IDX image file");
  }
  const std::size_t n = read_be32(imgs, images_path);
  const std::size_t h = read_be32(imgs, images_path);
  const std::size_t w = read_be32(imgs, images_path);

  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("cannot open " + labels_path);
  if (read_be32(lbls, labels_path) != 0x00000801u) {
    throw IoError(labels_path + ": bad magic for an IDX label file");
  }
  const std::size_t n_labels = read_be32(lbls, labels_path);
  if (n != n_labels) {
    throw IoError("IDX image count " + std::to_string(n) +
                  " does not match label count " + std::to_string(n_labels));
  }

  IdxData out;
  out.images = Tensor({n, 1, h, w}, Dtype::f32);
  auto px = out.images.data<float>();
  std::vector<uint8_t> row(h * w);
  for (std::size_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()))) {
      throw TruncatedError(images_path + ": pixel data truncated");
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      px[i * row.size() + j] = float(row[j]) / 255.0f;
    }
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    uint8_t v;
    if (!lbls.read(reinterpret_cast<char*>(&v), 1)) {
      throw TruncatedError(labels_path + ": label data truncated");
    }
    out.labels[i] = v;
  }
  return out;
}

Dataset dataset_from_idx(const IdxData& data, std::size_t n_eval) {
  const std::size_t n = data.images.extent(0);
  if (n_eval + 2 > n) throw ValueError("eval split larger than the dataset");
  const std::size_t n_train = n - n_eval;
  const std::size_t per = data.images.numel() / n;
  Dataset d;
  d.train_x = Tensor({n_train, data.images.extent(1), data.images.extent(2),
                      data.images.extent(3)}, Dtype::f32);
  d.eval_x = Tensor({n_eval, data.images.extent(1), data.images.extent(2),
                     data.images.extent(3)}, Dtype::f32);
  auto src = data.images.data<float>();
  auto tr = d.train_x.data<float>();
  auto ev = d.eval_x.data<float>();
  std::copy(src.begin(), src.begin() + std::ptrdiff_t(n_train * per), tr.begin());
  std::copy(src.begin() + std::ptrdiff_t(n_train * per), src.end(), ev.begin());
  d.train_labels.assign(data.labels.begin(), data.labels.begin() + std::ptrdiff_t(n_train));
  d.eval_labels.assign(data.labels.begin() + std::ptrdiff_t(n_train), data.labels.end());
  d.n_classes = std::size_t(*std::max_element(data.labels.begin(), data.labels.end())) + 1;
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kLatentDim = 8;
constexpr std::size_t kLabelerWidth = 32;
constexpr double kMarginTau = 0.4;

struct Labeler {
  std::size_t input_dim = 0, n_classes = 0;
  std::vector<double> w1, b1, w2, b2, w3, b3;  // bias3 doubles as calibration

  std::vector<double> logits(const float* image) const {
    std::vector<double> h1(kLabelerWidth, 0.0), h2(kLabelerWidth, 0.0);
    for (std::size_t j = 0; j < kLabelerWidth; ++j) {
      double acc = b1[j];
      for (std::size_t i = 0; i < input_dim; ++i) {
        acc += double(image[i]) * w1[i * kLabelerWidth + j];
      }
      h1[j] = acc > 0.0 ? acc : 0.0;
    }
    for (std::size_t j = 0; j < kLabelerWidth; ++j) {
      double acc = b2[j];
      for (std::size_t i = 0; i < kLabelerWidth; ++i) {
        acc += h1[i] * w2[i * kLabelerWidth + j];
      }
      h2[j] = acc > 0.0 ? acc : 0.0;
    }
    std::vector<double> out(n_classes, 0.0);
    for (std::size_t j = 0; j < n_classes; ++j) {
      double acc = b3[j];
      for (std::size_t i = 0; i < kLabelerWidth; ++i) {
        acc += h2[i] * w3[i * n_classes + j];
      }
      out[j] = acc;
    }
    return out;
  }
};

Labeler make_labeler(std::size_t input_dim, std::size_t n_classes, Rng& rng) {
  Labeler l;
  l.input_dim = input_dim;
  l.n_classes = n_classes;
  const auto fill = [&](std::vector<double>& v, std::size_t n, double std) {
    v.resize(n);
    for (double& x : v) x = rng.normal() * std;
  };
  fill(l.w1, input_dim * kLabelerWidth, std::sqrt(2.0 / double(input_dim)));
  l.b1.assign(kLabelerWidth, 0.0);
  fill(l.w2, kLabelerWidth * kLabelerWidth, std::sqrt(2.0 / double(kLabelerWidth)));
  l.b2.assign(kLabelerWidth, 0.0);
  fill(l.w3, kLabelerWidth * n_classes, std::sqrt(2.0 / double(kLabelerWidth)));
  l.b3.assign(n_classes, 0.0);
  return l;
}

}  // namespace

Dataset synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ValueError("synthetic data needs >= 2 classes");
  std::size_t input_dim = 1;
  for (std::size_t e : spec.input_shape) input_dim *= e;

  // Smooth low-frequency image basis.
  Rng basis_rng = Rng::stream(spec.seed, 1);
  std::vector<std::vector<float>> basis(kLatentDim,
                                        std::vector<float>(input_dim, 0.0f));
  const std::size_t h = spec.input_shape.size() >= 3
                            ? spec.input_shape[spec.input_shape.size() - 2]
                            : 1;
  const std::size_t w = spec.input_shape.back();
  const std::size_t planes = input_dim / (h * w);
  for (auto& b : basis) {
    for (std::size_t plane = 0; plane < planes; ++plane) {
      const double fy = double(basis_rng.uniform_u32(3));
      const double fx = double(basis_rng.uniform_u32(3));
      const double phase = basis_rng.uniform01() * 2.0 * 3.14159265358979323846;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          b[plane * h * w + y * w + x] = float(
              std::cos(2.0 * 3.14159265358979323846 *
                           (fy * double(y) / double(h) + fx * double(x) / double(w)) +
                       phase));
        }
      }
    }
    double rms = 0.0;
    for (float v : b) rms += double(v) * double(v);
    rms = std::sqrt(rms / double(input_dim));
    if (rms > 0.0) {
      for (float& v : b) v = float(double(v) / rms);
    }
  }

  Rng labeler_rng = Rng::stream(spec.seed, 2);
  Labeler labeler = make_labeler(input_dim, spec.n_classes, labeler_rng);

  const double latent_scale = 1.0 / std::sqrt(double(kLatentDim));
  const auto render = [&](Rng& rng, std::vector<float>& image) {
    std::vector<double> z(kLatentDim);
    for (double& v : z) v = rng.normal();
    std::fill(image.begin(), image.end(), 0.0f);
    for (std::size_t k = 0; k < kLatentDim; ++k) {
      const float zk = float(z[k] * latent_scale);
      const auto& b = basis[k];
      for (std::size_t i = 0; i < input_dim; ++i) image[i] += zk * b[i];
    }
  };

  // Calibrate per-class offsets so argmax labels are close to uniform.
  {
    Rng probe_rng = Rng::stream(spec.seed, 3);
    const std::size_t probes = 1024;
    std::vector<std::vector<double>> probe_logits(probes);
    std::vector<float> image(input_dim);
    for (std::size_t i = 0; i < probes; ++i) {
      render(probe_rng, image);
      probe_logits[i] = labeler.logits(image.data());
    }
    std::vector<double> bias(spec.n_classes, 0.0);
    const double target = double(probes) / double(spec.n_classes);
    for (int round = 0; round < 40; ++round) {
      std::vector<std::size_t> counts(spec.n_classes, 0);
      for (const auto& lg : probe_logits) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < spec.n_classes; ++c) {
          if (lg[c] + bias[c] > lg[best] + bias[best]) best = c;
        }
        counts[best] += 1;
      }
      for (std::size_t c = 0; c < spec.n_classes; ++c) {
        bias[c] -= 0.3 * std::log((double(counts[c]) + 1.0) / (target + 1.0));
      }
    }
    for (std::size_t c = 0; c < spec.n_classes; ++c) labeler.b3[c] += bias[c];
  }

  // Class-balanced, margin-filtered acceptance; samples dealt round-robin
  // across classes so both splits stay balanced.
  const std::size_t total = spec.n_train + spec.n_eval;
  const std::size_t quota = (total + spec.n_classes - 1) / spec.n_classes;
  std::vector<std::vector<std::vector<float>>> per_class(spec.n_classes);
  Rng sample_rng = Rng::stream(spec.seed, 4);
  std::vector<float> image(input_dim);
  std::size_t accepted = 0;
  const std::size_t max_draws = total * 400;
  for (std::size_t draw = 0; accepted < total && draw < max_draws; ++draw) {
    render(sample_rng, image);
    const auto lg = labeler.logits(image.data());
    std::size_t best = 0, second = 1;
    if (lg[second] > lg[best]) std::swap(best, second);
    for (std::size_t c = 2; c < spec.n_classes; ++c) {
      if (lg[c] > lg[best]) {
        second = best;
        best = c;
      } else if (lg[c] > lg[second]) {
        second = c;
      }
    }
    if (lg[best] - lg[second] < kMarginTau) continue;
    if (per_class[best].size() >= quota) continue;
    per_class[best].push_back(image);
    ++accepted;
  }
  if (accepted < total) {
    throw ValueError("synthetic generator could not fill the class quotas; "
                     "lower n_train/n_eval or change the seed");
  }

  std::vector<std::size_t> shape = spec.input_shape;
  shape.insert(shape.begin(), total);
  Tensor all(shape, Dtype::f32);
  auto px = all.data<float>();
  std::vector<int64_t> labels(total);
  std::size_t idx = 0;
  std::vector<std::size_t> cursor(spec.n_classes, 0);
  for (std::size_t round = 0; idx < total; ++round) {
    for (std::size_t c = 0; c < spec.n_classes && idx < total; ++c) {
      if (cursor[c] >= per_class[c].size()) continue;
      const auto& img = per_class[c][cursor[c]++];
      std::copy(img.begin(), img.end(), px.begin() + std::ptrdiff_t(idx * input_dim));
      labels[idx] = int64_t(c);
      ++idx;
    }
  }

  Dataset d;
  d.n_classes = spec.n_classes;
  std::vector<std::size_t> tr_shape = spec.input_shape;
  tr_shape.insert(tr_shape.begin(), spec.n_train);
  std::vector<std::size_t> ev_shape = spec.input_shape;
  ev_shape.insert(ev_shape.begin(), spec.n_eval);
  d.train_x = Tensor(tr_shape, Dtype::f32);
  d.eval_x = Tensor(ev_shape, Dtype::f32);
  auto tr = d.train_x.data<float>();
  auto ev = d.eval_x.data<float>();
  std::copy(px.begin(), px.begin() + std::ptrdiff_t(spec.n_train * input_dim),
            tr.begin());
  std::copy(px.begin() + std::ptrdiff_t(spec.n_train * input_dim), px.end(),
            ev.begin());
  d.train_labels.assign(labels.begin(), labels.begin() + std::ptrdiff_t(spec.n_train));
  d.eval_labels.assign(labels.begin() + std::ptrdiff_t(spec.n_train), labels.end());
  return d;
}

}  // namespace n2n
