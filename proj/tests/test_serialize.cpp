#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gnnlab/graph.hpp"
#include "gnnlab/models.hpp"
#include "gnnlab/serialize.hpp"

using namespace gnnlab;

namespace {

struct TmpDir {
  std::filesystem::path path;
  TmpDir() {
    path = std::filesystem::temp_directory_path() /
           ("gnnlab_ser_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

Graph small_graph(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_nodes = 30;
  spec.num_classes = 3;
  spec.feature_dim = 10;
  spec.avg_degree = 5.0;
  spec.homophily = 0.8;
  spec.seed = seed;
  return generate_synthetic(spec);
}

void check_models_equal(const GnnModel& a, const GnnModel& b) {
  REQUIRE(a.num_layers() == b.num_layers());
  CHECK(a.cfg.kind == b.cfg.kind);
  CHECK(a.cfg.depth == b.cfg.depth);
  CHECK(a.cfg.hidden_dim == b.cfg.hidden_dim);
  CHECK(a.cfg.heads_hidden == b.cfg.heads_hidden);
  CHECK(a.cfg.heads_out == b.cfg.heads_out);
  CHECK(a.cfg.activation == b.cfg.activation);
  CHECK(a.cfg.leaky_slope == doctest::Approx(b.cfg.leaky_slope).epsilon(1e-15));
  CHECK(a.cfg.dropout == doctest::Approx(b.cfg.dropout).epsilon(1e-15));
  CHECK(a.cfg.residual == b.cfg.residual);
  CHECK(a.input_dim == b.input_dim);
  CHECK(a.output_dim == b.output_dim);
  for (int l = 0; l < a.num_layers(); ++l) {
    REQUIRE(a.layers[l].size() == b.layers[l].size());
    for (std::size_t h = 0; h < a.layers[l].size(); ++h) {
      const auto& x = a.layers[l][h];
      const auto& y = b.layers[l][h];
      CHECK(x.leaky_slope == y.leaky_slope);
      REQUIRE(x.W.rows() == y.W.rows());
      REQUIRE(x.W.cols() == y.W.cols());
      CHECK(x.W.value() == y.W.value());  // bitwise: doubles survive the container
      REQUIRE(x.a.defined() == y.a.defined());
      if (x.a.defined()) CHECK(x.a.value() == y.a.value());
    }
  }
}

}  // namespace

TEST_CASE("attention model round-trips bitwise") {
  TmpDir tmp;
  Graph g = small_graph(7);
  ModelConfig cfg;
  cfg.kind = ModelKind::gat;
  cfg.depth = 3;
  cfg.hidden_dim = 16;
  cfg.heads_hidden = 4;
  cfg.heads_out = 2;
  cfg.activation = Activation::elu;
  cfg.dropout = 0.4;
  GnnModel m = init_model(cfg, g.feature_dim(), g.num_classes, 99);
  // Perturb a few values so the file is not a fresh init.
  m.layers[1][2].W.value()[5] = -0.123456789012345;
  m.layers[2][0].a.value()[0] = 3.14159;

  const std::string path = tmp.file("model.bin");
  save_model(m, path);
  GnnModel loaded = load_model(path);
  check_models_equal(m, loaded);

  // The loaded model computes the identical forward pass.
  Mat out_a = eval_forward(g, m);
  Mat out_b = eval_forward(g, loaded);
  REQUIRE(out_a.rows == out_b.rows);
  REQUIRE(out_a.cols == out_b.cols);
  CHECK(out_a.v == out_b.v);
}

TEST_CASE("gcn model round-trips with undefined attention vectors") {
  TmpDir tmp;
  Graph g = small_graph(11);
  ModelConfig cfg;
  cfg.kind = ModelKind::gcn;
  cfg.depth = 2;
  cfg.hidden_dim = 12;
  cfg.heads_hidden = 1;
  cfg.activation = Activation::relu;
  GnnModel m = init_model(cfg, g.feature_dim(), g.num_classes, 5);

  const std::string path = tmp.file("gcn.bin");
  save_model(m, path);
  GnnModel loaded = load_model(path);
  check_models_equal(m, loaded);
  CHECK(eval_forward(g, m).v == eval_forward(g, loaded).v);
}

TEST_CASE("dynamo-gat kind and special values survive") {
  TmpDir tmp;
  ModelConfig cfg;
  cfg.kind = ModelKind::dynamo_gat;
  cfg.depth = 2;
  cfg.hidden_dim = 8;
  cfg.heads_hidden = 2;
  cfg.activation = Activation::tanh;
  cfg.residual = true;
  GnnModel m = init_model(cfg, 6, 2, 1);
  // Values with no short decimal form, plus exact extremes.
  m.layers[0][0].W.value()[0] = 0.1;
  m.layers[0][0].W.value()[1] = -0.0;
  m.layers[0][1].W.value()[0] = 1e-308;

  const std::string path = tmp.file("dg.bin");
  save_model(m, path);
  GnnModel loaded = load_model(path);
  check_models_equal(m, loaded);
  CHECK(std::signbit(loaded.layers[0][0].W.value()[1]));
}

TEST_CASE("malformed files are rejected with clear errors") {
  TmpDir tmp;
  GnnModel m = init_model(ModelConfig{}, 5, 2, 3);
  const std::string path = tmp.file("model.bin");
  save_model(m, path);

  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_model(tmp.file("nope.bin")),
                         doctest::Contains("cannot open"), std::runtime_error);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("bad magic"), std::runtime_error);
  }
  SUBCASE("unsupported version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[4] = {99, 0, 0, 0};
    f.write(v, 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("unsupported version"),
                         std::runtime_error);
  }
  SUBCASE("truncation") {
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 9);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("save into unwritable path") {
    CHECK_THROWS_WITH_AS(save_model(m, (tmp.path / "no_dir" / "x.bin").string()),
                         doctest::Contains("cannot open"), std::runtime_error);
  }
}

TEST_CASE("container is little-endian and layout-stable") {
  TmpDir tmp;
  ModelConfig cfg;
  cfg.kind = ModelKind::gcn;
  cfg.depth = 1;
  cfg.hidden_dim = 4;
  cfg.heads_hidden = 1;
  GnnModel m = init_model(cfg, 2, 2, 0);
  m.layers[0][0].W.value() = {1.0, 2.0, 3.0, 4.0};

  const std::string path = tmp.file("le.bin");
  save_model(m, path);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  REQUIRE(raw.size() > 70);
  // magic
  CHECK(raw[0] == 'G');
  CHECK(raw[1] == 'N');
  CHECK(raw[2] == 'N');
  CHECK(raw[3] == 'M');
  // version 1 little-endian
  CHECK(raw[4] == 1);
  CHECK(raw[5] == 0);
  // kind gcn = 0
  CHECK(raw[8] == 0);
  // Trailing layout: W's 4 doubles, the undefined-a tag (16 zero
  // bytes), then the per-head leaky_slope double.
  const std::size_t n = raw.size();
  // leaky_slope 0.2 = 0x3FC999999999999A little-endian
  CHECK(raw[n - 1] == 0x3f);
  CHECK(raw[n - 2] == 0xc9);
  CHECK(raw[n - 8] == 0x9a);
  for (std::size_t i = n - 24; i < n - 8; ++i) CHECK(raw[i] == 0);  // a: 0 x 0
  // last W entry 4.0 = 0x4010000000000000
  CHECK(raw[n - 25] == 0x40);
  CHECK(raw[n - 26] == 0x10);
  CHECK(raw[n - 32] == 0x00);
  // first W entry 1.0 = 0x3FF0000000000000
  CHECK(raw[n - 49] == 0x3f);
  CHECK(raw[n - 50] == 0xf0);
  CHECK(raw[n - 56] == 0x00);
}
