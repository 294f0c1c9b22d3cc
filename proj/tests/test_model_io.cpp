// Model container and dataset ingestion tests.

#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "corpus.hpp"
#include "n2n/model_io.hpp"

using namespace n2n;
using n2n::testing::CorpusNet;
using n2n::testing::make_corpus_net;
using n2n::testing::random_tensor;

namespace {

std::string temp_path(const std::string& name) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          ("n2n_test_" + std::to_string(getpid()) + "_" +
           std::to_string(counter++) + "_" + name))
      .string();
}

}  // namespace

TEST_CASE("model round-trip is bit-exact for every corpus family and dtype") {
  for (std::size_t family = 0; family < 3; ++family) {
    for (Dtype dtype : {Dtype::f32, Dtype::f64}) {
      Rng build(family * 10 + (dtype == Dtype::f32 ? 1 : 2));
      CorpusNet net = make_corpus_net(family, build, dtype);
      const std::string path = temp_path("roundtrip.n2n");
      save_model(net.graph, net.params, std::nullopt, path);
      LoadedModel loaded = load_model(path);

      REQUIRE(loaded.graph.size() == net.graph.size());
      for (const Node& n : net.graph.nodes()) {
        CHECK(loaded.graph.node(n.id).name == n.name);
        CHECK(loaded.graph.node(n.id).preds == n.preds);
        CHECK(std::string(kind_name(loaded.graph.node(n.id).kind)) ==
              kind_name(n.kind));
      }
      for (const auto& [id, tensors] : net.params.all()) {
        for (const auto& [name, t] : tensors) {
          const Tensor& o = loaded.params.at(id, name);
          REQUIRE(o.shape() == t.shape());
          REQUIRE(o.dtype() == t.dtype());
          for (std::size_t i = 0; i < t.numel(); ++i) {
            REQUIRE(o.get(i) == t.get(i));
          }
        }
      }
      // Bit-identical forward outputs.
      const auto shape = n2n::testing::input_shape_of(net.graph);
      std::vector<std::size_t> xs{4};
      xs.insert(xs.end(), shape.begin(), shape.end());
      const Tensor x = random_tensor(xs, dtype, 3);
      auto f1 = forward(net.graph, net.params, x, Mode::eval);
      auto f2 = forward(loaded.graph, loaded.params, x, Mode::eval);
      const NodeId out = net.graph.outputs().front();
      for (std::size_t i = 0; i < f1.activations[std::size_t(out)].numel(); ++i) {
        REQUIRE(f1.activations[std::size_t(out)].get(i) ==
                f2.activations[std::size_t(out)].get(i));
      }
      std::filesystem::remove(path);
    }
  }
}

TEST_CASE("optimizer state round-trips") {
  Rng build(5);
  CorpusNet net = make_corpus_net(0, build, Dtype::f32);
  TrainState state;
  state.optimizer = "rmsprop";
  state.step = 123;
  for (const auto& [id, tensors] : net.params.all()) {
    for (const auto& [name, t] : tensors) {
      state.slots.set(id, name + ".ms", random_tensor(t.shape(), t.dtype(),
                                                      uint64_t(id) * 7 + 1));
    }
  }
  const std::string path = temp_path("state.n2n");
  save_model(net.graph, net.params, state, path);
  LoadedModel loaded = load_model(path);
  REQUIRE(loaded.state.has_value());
  CHECK(loaded.state->optimizer == "rmsprop");
  CHECK(loaded.state->step == 123);
  for (const auto& [id, tensors] : state.slots.all()) {
    for (const auto& [name, t] : tensors) {
      const Tensor& o = loaded.state->slots.at(id, name);
      for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(o.get(i) == t.get(i));
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupting one blob byte trips the checksum") {
  Rng build(6);
  CorpusNet net = make_corpus_net(0, build, Dtype::f32);
  const std::string path = temp_path("corrupt.n2n");
  save_model(net.graph, net.params, std::nullopt, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = f.tellg();
    f.seekp(std::streamoff(size) - 5);
    char byte;
    f.seekg(std::streamoff(size) - 5);
    f.read(&byte, 1);
    byte = char(byte ^ 0x40);
    f.seekp(std::streamoff(size) - 5);
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(load_model(path), ChecksumError);
  std::filesystem::remove(path);
}

TEST_CASE("future format versions are rejected, naming both versions") {
  Rng build(7);
  CorpusNet net = make_corpus_net(0, build, Dtype::f32);
  const std::string path = temp_path("version.n2n");
  save_model(net.graph, net.params, std::nullopt, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
  }
  bytes[bytes.find('1')] = '2';  // first '1' is the version in the magic line
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("version 2"),
                       VersionError);
  std::filesystem::remove(path);
}

TEST_CASE("truncated blobs are reported distinctly") {
  Rng build(8);
  CorpusNet net = make_corpus_net(0, build, Dtype::f32);
  const std::string path = temp_path("trunc.n2n");
  save_model(net.graph, net.params, std::nullopt, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 40);
  }
  CHECK_THROWS_AS(load_model(path), TruncatedError);
  std::filesystem::remove(path);
}

namespace {

// Independent IDX writer used to build fixtures.
void write_idx_fixture(const std::string& images, const std::string& labels,
                       const std::vector<std::vector<uint8_t>>& pixel_rows,
                       std::size_t h, std::size_t w,
                       const std::vector<uint8_t>& label_values) {
  const auto be32 = [](std::ofstream& out, uint32_t v) {
    out.put(char(v >> 24));
    out.put(char(v >> 16));
    out.put(char(v >> 8));
    out.put(char(v));
  };
  std::ofstream img(images, std::ios::binary);
  be32(img, 0x00000803u);
  be32(img, uint32_t(pixel_rows.size()));
  be32(img, uint32_t(h));
  be32(img, uint32_t(w));
  for (const auto& row : pixel_rows) {
    img.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size()));
  }
  std::ofstream lbl(labels, std::ios::binary);
  be32(lbl, 0x00000801u);
  be32(lbl, uint32_t(label_values.size()));
  for (uint8_t v : label_values) lbl.put(char(v));
}

}  // namespace

TEST_CASE("IDX fixture loads with known pixel values") {
  const std::string images = temp_path("imgs.idx");
  const std::string labels = temp_path("lbls.idx");
  // Two 2x3 images: a gradient and all zeros.
  write_idx_fixture(images, labels, {{0, 51, 102, 153, 204, 255}, {0, 0, 0, 0, 0, 0}},
                    2, 3, {7, 1});
  IdxData d = load_idx(images, labels);
  CHECK(d.images.shape() == std::vector<std::size_t>{2, 1, 2, 3});
  CHECK(d.images.get(0) == 0.0f);
  CHECK(d.images.get(1) == doctest::Approx(51.0 / 255.0));
  CHECK(d.images.get(5) == 1.0f);
  for (std::size_t i = 6; i < 12; ++i) CHECK(d.images.get(i) == 0.0f);
  CHECK(d.labels == std::vector<int64_t>{7, 1});
  std::filesystem::remove(images);
  std::filesystem::remove(labels);
}

TEST_CASE("IDX loader rejects bad magic and count mismatches") {
  const std::string images = temp_path("bad_imgs.idx");
  const std::string labels = temp_path("bad_lbls.idx");
  write_idx_fixture(images, labels, {{0, 0, 0, 0}}, 2, 2, {1});
  // Swap the files: label magic where an image magic is expected.
  CHECK_THROWS_AS(load_idx(labels, images), IoError);

  const std::string labels2 = temp_path("bad_lbls2.idx");
  write_idx_fixture(temp_path("unused.idx"), labels2, {{0}}, 1, 1, {1, 2});
  CHECK_THROWS_AS(load_idx(images, labels2), IoError);
  std::filesystem::remove(images);
  std::filesystem::remove(labels);
}

TEST_CASE("synthetic data is deterministic") {
  SyntheticSpec spec;
  spec.seed = 42;
  spec.n_train = 120;
  spec.n_eval = 30;
  const Dataset a = synthetic(spec);
  const Dataset b = synthetic(spec);
  REQUIRE(a.train_x.numel() == b.train_x.numel());
  for (std::size_t i = 0; i < a.train_x.numel(); ++i) {
    REQUIRE(a.train_x.get(i) == b.train_x.get(i));
  }
  CHECK(a.train_labels == b.train_labels);
  CHECK(a.eval_labels == b.eval_labels);
}

TEST_CASE("synthetic class histogram is within 20% of uniform") {
  SyntheticSpec spec;
  spec.seed = 7;
  spec.n_classes = 3;
  spec.n_train = 300;
  spec.n_eval = 60;
  const Dataset d = synthetic(spec);
  for (const auto* labels : {&d.train_labels, &d.eval_labels}) {
    std::vector<std::size_t> counts(spec.n_classes, 0);
    for (int64_t v : *labels) counts[std::size_t(v)] += 1;
    const double target = double(labels->size()) / double(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      CHECK(double(counts[c]) >= 0.8 * target);
      CHECK(double(counts[c]) <= 1.2 * target);
    }
  }
}

TEST_CASE("synthetic train and eval splits are disjoint") {
  SyntheticSpec spec;
  spec.seed = 9;
  spec.n_train = 64;
  spec.n_eval = 32;
  const Dataset d = synthetic(spec);
  // Images are distinct draws; no train image equals an eval image.
  const std::size_t per = d.train_x.numel() / d.train_x.extent(0);
  std::set<std::vector<float>> train_set;
  auto tr = d.train_x.data<float>();
  for (std::size_t i = 0; i < d.train_x.extent(0); ++i) {
    train_set.insert(std::vector<float>(tr.begin() + std::ptrdiff_t(i * per),
                                        tr.begin() + std::ptrdiff_t((i + 1) * per)));
  }
  auto ev = d.eval_x.data<float>();
  for (std::size_t i = 0; i < d.eval_x.extent(0); ++i) {
    const std::vector<float> img(ev.begin() + std::ptrdiff_t(i * per),
                                 ev.begin() + std::ptrdiff_t((i + 1) * per));
    CHECK(train_set.count(img) == 0);
  }
}
