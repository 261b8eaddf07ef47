#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "gnnlab/flops.hpp"
#include "gnnlab/models.hpp"
#include "gnnlab/prune.hpp"

using namespace gnnlab;

namespace {

Graph make_graph(std::int64_t n, const std::vector<std::pair<int, int>>& edges,
                 std::int64_t fdim, std::uint64_t seed, int classes = 2) {
  Graph g;
  g.n = n;
  g.num_classes = classes;
  std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(n));
  for (auto [u, v] : edges) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }
  g.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    auto& nb = adj[static_cast<std::size_t>(i)];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    g.row_ptr[static_cast<std::size_t>(i) + 1] =
        g.row_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(nb.size());
    for (auto j : nb) g.col_idx.push_back(j);
  }
  g.features = Mat(n, fdim);
  Rng rng(seed);
  for (auto& v : g.features.v) v = rng.uniform(-1.0, 1.0);
  g.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) g.labels[static_cast<std::size_t>(i)] = static_cast<int>(i) % classes;
  return g;
}

double elu_ref(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

Mat matmul_ref(const Mat& a, const Mat& b) {
  REQUIRE(a.cols == b.rows);
  Mat out(a.rows, b.cols);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t k = 0; k < a.cols; ++k)
      for (std::int64_t j = 0; j < b.cols; ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

Mat tensor_mat(const Tensor& t) { return t.to_mat(); }

void set_values(Tensor& t, const std::vector<double>& vals) {
  REQUIRE(t.value().size() == vals.size());
  t.value() = vals;
}

// One full GAT layer by plain scalar loops, reusing only the
// attention coefficients. Heads concatenate unless `average`.
Mat gat_layer_ref(const Mat& X, const Graph& g, const GnnModel& m, int layer, bool average,
                  bool activate) {
  AttentionCoeffs att = gat_attention(X, g, m, layer);
  const auto& heads = m.layers[static_cast<std::size_t>(layer)];
  std::vector<Mat> per_head;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Mat W = tensor_mat(heads[h].W);
    Mat H = matmul_ref(X, W);
    Mat out(g.n, W.cols);
    for (std::int64_t k = 0; k < att.edges.count(); ++k) {
      const double a = att.alpha[h][static_cast<std::size_t>(k)];
      const std::int64_t s = att.edges.src[static_cast<std::size_t>(k)];
      const std::int64_t d = att.edges.dst[static_cast<std::size_t>(k)];
      for (std::int64_t f = 0; f < W.cols; ++f) out.at(d, f) += a * H.at(s, f);
    }
    per_head.push_back(std::move(out));
  }
  Mat combined;
  if (per_head.size() == 1) {
    combined = per_head[0];
  } else if (average) {
    combined = Mat(g.n, per_head[0].cols);
    for (const auto& hm : per_head)
      for (std::int64_t i = 0; i < combined.size(); ++i) combined.v[i] += hm.v[i];
    for (auto& v : combined.v) v /= static_cast<double>(per_head.size());
  } else {
    combined = Mat(g.n, per_head[0].cols * static_cast<std::int64_t>(per_head.size()));
    for (std::size_t h = 0; h < per_head.size(); ++h)
      for (std::int64_t i = 0; i < g.n; ++i)
        for (std::int64_t f = 0; f < per_head[h].cols; ++f)
          combined.at(i, static_cast<std::int64_t>(h) * per_head[h].cols + f) =
              per_head[h].at(i, f);
  }
  if (activate)
    for (auto& v : combined.v) v = elu_ref(v);
  return combined;
}

}  // namespace

TEST_CASE("model kind and config plumbing") {
  CHECK(model_kind_from_string("gcn") == ModelKind::gcn);
  CHECK(model_kind_from_string("gat") == ModelKind::gat);
  CHECK(model_kind_from_string("dynamo_gat") == ModelKind::dynamo_gat);
  CHECK_THROWS(model_kind_from_string("transformer"));
  CHECK(std::string(model_kind_name(ModelKind::dynamo_gat)) == "dynamo_gat");
  CHECK(ModelConfig{.kind = ModelKind::gcn}.is_attention() == false);
  CHECK(ModelConfig{.kind = ModelKind::dynamo_gat}.is_attention() == true);
}

TEST_CASE("init_model shapes") {
  SUBCASE("gcn stack keeps hidden width and adapts ends") {
    ModelConfig cfg;
    cfg.kind = ModelKind::gcn;
    cfg.depth = 3;
    cfg.hidden_dim = 8;
    GnnModel m = init_model(cfg, 5, 4, 7);
    REQUIRE(m.num_layers() == 3);
    REQUIRE(m.layers[0].size() == 1);
    CHECK(m.layers[0][0].W.rows() == 5);
    CHECK(m.layers[0][0].W.cols() == 8);
    CHECK(m.layers[1][0].W.rows() == 8);
    CHECK(m.layers[1][0].W.cols() == 8);
    CHECK(m.layers[2][0].W.rows() == 8);
    CHECK(m.layers[2][0].W.cols() == 4);
    CHECK_FALSE(m.layers[0][0].a.defined());
    CHECK(m.layer_out_dim(0) == 8);
    CHECK(m.layer_out_dim(2) == 4);
  }
  SUBCASE("gat splits hidden width across heads") {
    ModelConfig cfg;
    cfg.kind = ModelKind::gat;
    cfg.depth = 2;
    cfg.hidden_dim = 8;
    cfg.heads_hidden = 4;
    cfg.heads_out = 2;
    GnnModel m = init_model(cfg, 5, 3, 7);
    REQUIRE(m.layers[0].size() == 4);
    CHECK(m.layers[0][0].W.rows() == 5);
    CHECK(m.layers[0][0].W.cols() == 2);  // 8 / 4 per head
    CHECK(m.layers[0][0].a.rows() == 4);  // 2 * d_head
    REQUIRE(m.layers[1].size() == 2);
    CHECK(m.layers[1][0].W.rows() == 8);
    CHECK(m.layers[1][0].W.cols() == 3);
    CHECK(m.layers[1][0].a.rows() == 6);
  }
  SUBCASE("invalid configs are rejected") {
    ModelConfig cfg;
    cfg.depth = 0;
    CHECK_THROWS(init_model(cfg, 4, 2, 1));
    cfg.depth = 2;
    cfg.hidden_dim = 6;
    cfg.heads_hidden = 4;  // 6 % 4 != 0
    CHECK_THROWS(init_model(cfg, 4, 2, 1));
    cfg.kind = ModelKind::gcn;  // divisibility is an attention-only rule
    CHECK_NOTHROW(init_model(cfg, 4, 2, 1));
  }
  SUBCASE("determinism in seed") {
    ModelConfig cfg;
    GnnModel a = init_model(cfg, 6, 3, 42);
    GnnModel b = init_model(cfg, 6, 3, 42);
    GnnModel c = init_model(cfg, 6, 3, 43);
    auto va = a.snapshot_values(), vb = b.snapshot_values(), vc = c.snapshot_values();
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(max_abs_diff(va[i], vb[i]) == 0.0);
    CHECK(max_abs_diff(va[0], vc[0]) > 0.0);
  }
}

TEST_CASE("gcn adjacency normalization") {
  SUBCASE("single node is the 1x1 identity") {
    Graph g = make_graph(1, {}, 2, 1);
    auto a = build_gcn_adjacency(g);
    Mat d = a->to_dense();
    CHECK(d.rows == 1);
    CHECK(d.at(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("two-node edge gives the all-half matrix") {
    Graph g = make_graph(2, {{0, 1}}, 2, 1);
    Mat d = build_gcn_adjacency(g)->to_dense();
    for (std::int64_t i = 0; i < 2; ++i)
      for (std::int64_t j = 0; j < 2; ++j) CHECK(d.at(i, j) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("path graph matches hand normalization") {
    // 0-1-2: degrees+1 are 2,3,2.
    Graph g = make_graph(3, {{0, 1}, {1, 2}}, 2, 1);
    Mat d = build_gcn_adjacency(g)->to_dense();
    CHECK(d.at(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d.at(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
    CHECK(d.at(0, 2) == doctest::Approx(0.0));
    CHECK(d.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(d.at(1, 2) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));
  }
}

TEST_CASE("gcn forward matches hand products") {
  SUBCASE("one isolated node with identity weights is the identity map") {
    Graph g = make_graph(1, {}, 3, 1, 3);
    g.features.v = {0.3, -1.2, 2.0};
    ModelConfig cfg;
    cfg.kind = ModelKind::gcn;
    cfg.depth = 1;
    GnnModel m = init_model(cfg, 3, 3, 1);
    set_values(m.layers[0][0].W, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Mat out = eval_forward(g, m);
    CHECK(max_abs_diff(out, g.features) == 0.0);
  }
  SUBCASE("two-node single-edge layer equals the hand matrix product") {
    Graph g = make_graph(2, {{0, 1}}, 2, 1, 2);
    g.features.v = {1, 2, 3, 4};
    ModelConfig cfg;
    cfg.kind = ModelKind::gcn;
    cfg.depth = 1;
    GnnModel m = init_model(cfg, 2, 2, 1);
    set_values(m.layers[0][0].W, {5, 6, 7, 8});
    // A_hat X = [[2,3],[2,3]]; times W = [[31,36],[31,36]].
    Mat out = eval_forward(g, m);
    CHECK(out.at(0, 0) == doctest::Approx(31.0).epsilon(1e-13));
    CHECK(out.at(0, 1) == doctest::Approx(36.0).epsilon(1e-13));
    CHECK(out.at(1, 0) == doctest::Approx(31.0).epsilon(1e-13));
    CHECK(out.at(1, 1) == doctest::Approx(36.0).epsilon(1e-13));
  }
  SUBCASE("deep gcn equals scalar-loop reference") {
    Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {1, 3}}, 4, 9, 3);
    ModelConfig cfg;
    cfg.kind = ModelKind::gcn;
    cfg.depth = 3;
    cfg.hidden_dim = 6;
    GnnModel m = init_model(cfg, 4, 3, 11);
    Mat a_hat = build_gcn_adjacency(g)->to_dense();
    Mat cur = g.features;
    for (int l = 0; l < 3; ++l) {
      cur = matmul_ref(matmul_ref(a_hat, cur), tensor_mat(m.layers[static_cast<std::size_t>(l)][0].W));
      if (l < 2)
        for (auto& v : cur.v) v = elu_ref(v);
    }
    CHECK(max_abs_diff(eval_forward(g, m), cur) < 1e-12);
  }
}

TEST_CASE("permutation equivariance") {
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5},
                                                  {5, 0}, {1, 4}, {2, 5}};
  Graph g = make_graph(6, edges, 4, 21, 3);
  const std::vector<std::int64_t> perm = {3, 0, 5, 1, 4, 2};  // old i -> new perm[i]
  std::vector<std::pair<int, int>> pedges;
  for (auto [u, v] : edges)
    pedges.push_back({static_cast<int>(perm[static_cast<std::size_t>(u)]),
                      static_cast<int>(perm[static_cast<std::size_t>(v)])});
  Graph pg = make_graph(6, pedges, 4, 21, 3);
  for (std::int64_t i = 0; i < 6; ++i)
    for (std::int64_t f = 0; f < 4; ++f)
      pg.features.at(perm[static_cast<std::size_t>(i)], f) = g.features.at(i, f);

  auto check_equivariant = [&](ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.depth = 2;
    cfg.hidden_dim = 4;
    cfg.heads_hidden = 2;
    GnnModel m = init_model(cfg, 4, 3, 5);
    Mat out = eval_forward(g, m);
    Mat pout = eval_forward(pg, m);
    for (std::int64_t i = 0; i < 6; ++i)
      for (std::int64_t f = 0; f < out.cols; ++f)
        CHECK(pout.at(perm[static_cast<std::size_t>(i)], f) ==
              doctest::Approx(out.at(i, f)).epsilon(1e-9));
  };
  SUBCASE("gcn") { check_equivariant(ModelKind::gcn); }
  SUBCASE("gat") { check_equivariant(ModelKind::gat); }
}

TEST_CASE("gat attention coefficients") {
  SUBCASE("isolated node has alpha_ii = 1") {
    Graph g = make_graph(3, {{0, 1}}, 3, 2);  // node 2 isolated
    ModelConfig cfg;
    cfg.depth = 1;
    cfg.heads_out = 2;
    GnnModel m = init_model(cfg, 3, 2, 3);
    AttentionCoeffs att = gat_attention(g.features, g, m, 0);
    bool found = false;
    for (std::int64_t k = 0; k < att.edges.count(); ++k) {
      if (att.edges.dst[static_cast<std::size_t>(k)] == 2) {
        found = true;
        CHECK(att.edges.src[static_cast<std::size_t>(k)] == 2);
        CHECK(att.edges.slot[static_cast<std::size_t>(k)] == -1);
        for (const auto& head : att.alpha)
          CHECK(head[static_cast<std::size_t>(k)] == doctest::Approx(1.0).epsilon(1e-15));
      }
    }
    CHECK(found);
  }
  SUBCASE("zero scoring vector gives uniform attention") {
    Graph g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}}, 3, 4);
    ModelConfig cfg;
    cfg.depth = 1;
    GnnModel m = init_model(cfg, 3, 2, 3);
    set_values(m.layers[0][0].a, std::vector<double>(4, 0.0));
    AttentionCoeffs att = gat_attention(g.features, g, m, 0);
    for (std::int64_t k = 0; k < att.edges.count(); ++k) {
      const std::int64_t d = att.edges.dst[static_cast<std::size_t>(k)];
      const double expect = 1.0 / static_cast<double>(g.degree(d) + 1);
      CHECK(att.alpha[0][static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  SUBCASE("star graph matches explicit exp/sum recomputation") {
    Graph g = make_graph(3, {{0, 1}, {0, 2}}, 3, 8);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 4;
    cfg.heads_hidden = 2;
    GnnModel m = init_model(cfg, 3, 2, 9);
    AttentionCoeffs att = gat_attention(g.features, g, m, 0);
    const auto& heads = m.layers[0];
    for (std::size_t h = 0; h < heads.size(); ++h) {
      Mat W = tensor_mat(heads[h].W);
      Mat a = tensor_mat(heads[h].a);
      Mat H = matmul_ref(g.features, W);
      // Raw scores per edge, then a softmax per destination by plain
      // exp/sum arithmetic.
      std::vector<double> score(static_cast<std::size_t>(att.edges.count()));
      for (std::int64_t k = 0; k < att.edges.count(); ++k) {
        double s = 0.0;
        for (std::int64_t f = 0; f < W.cols; ++f) {
          s += a.at(f, 0) * H.at(att.edges.dst[static_cast<std::size_t>(k)], f);
          s += a.at(W.cols + f, 0) * H.at(att.edges.src[static_cast<std::size_t>(k)], f);
        }
        score[static_cast<std::size_t>(k)] = s > 0 ? s : 0.2 * s;
      }
      for (std::int64_t i = 0; i < g.n; ++i) {
        double denom = 0.0;
        for (std::int64_t k = 0; k < att.edges.count(); ++k)
          if (att.edges.dst[static_cast<std::size_t>(k)] == i)
            denom += std::exp(score[static_cast<std::size_t>(k)]);
        for (std::int64_t k = 0; k < att.edges.count(); ++k)
          if (att.edges.dst[static_cast<std::size_t>(k)] == i)
            CHECK(att.alpha[h][static_cast<std::size_t>(k)] ==
                  doctest::Approx(std::exp(score[static_cast<std::size_t>(k)]) / denom)
                      .epsilon(1e-12));
      }
    }
  }
  SUBCASE("rows are stochastic on a random graph, every head and layer") {
    Graph g = make_graph(7, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 0}, {1, 5}, {2, 6}},
                         5, 31, 3);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 6;
    cfg.heads_hidden = 3;
    cfg.heads_out = 2;
    GnnModel m = init_model(cfg, 5, 3, 17);
    Mat x1 = eval_layer_input(g, m, 1);
    for (int layer = 0; layer < 2; ++layer) {
      AttentionCoeffs att = gat_attention(layer == 0 ? g.features : x1, g, m, layer);
      for (const auto& head : att.alpha) {
        std::vector<double> row_sum(static_cast<std::size_t>(g.n), 0.0);
        for (std::int64_t k = 0; k < att.edges.count(); ++k)
          row_sum[static_cast<std::size_t>(att.edges.dst[static_cast<std::size_t>(k)])] +=
              head[static_cast<std::size_t>(k)];
        for (double s : row_sum) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("gcn model is rejected") {
    Graph g = make_graph(2, {{0, 1}}, 3, 2);
    ModelConfig cfg;
    cfg.kind = ModelKind::gcn;
    GnnModel m = init_model(cfg, 3, 2, 3);
    CHECK_THROWS(gat_attention(g.features, g, m, 0));
  }
}

TEST_CASE("gat forward") {
  SUBCASE("depth 1 single node reduces to the linear head") {
    // Logits stay raw on the output layer, so the single-node map is
    // exactly x W (alpha_ii = 1).
    Graph g = make_graph(1, {}, 3, 5, 2);
    ModelConfig cfg;
    cfg.depth = 1;
    GnnModel m = init_model(cfg, 3, 2, 6);
    Mat expect = matmul_ref(g.features, tensor_mat(m.layers[0][0].W));
    CHECK(max_abs_diff(eval_forward(g, m), expect) < 1e-14);
  }
  SUBCASE("identical features give identical outputs") {
    Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}}, 3, 7, 2);
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t f = 0; f < 3; ++f) g.features.at(i, f) = g.features.at(0, f);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 4;
    cfg.heads_hidden = 2;
    GnnModel m = init_model(cfg, 3, 2, 8);
    Mat out = eval_forward(g, m);
    for (std::int64_t i = 1; i < 4; ++i)
      for (std::int64_t f = 0; f < out.cols; ++f)
        CHECK(out.at(i, f) == doctest::Approx(out.at(0, f)).epsilon(1e-12));
  }
  SUBCASE("depth 2 equals the stepwise attention + aggregation oracle") {
    Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {0, 2}}, 4, 13, 3);
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.hidden_dim = 6;
    cfg.heads_hidden = 3;
    cfg.heads_out = 2;  // exercises output-head averaging
    GnnModel m = init_model(cfg, 4, 3, 14);
    Mat h1 = gat_layer_ref(g.features, g, m, 0, /*average=*/false, /*activate=*/true);
    Mat logits = gat_layer_ref(h1, g, m, 1, /*average=*/true, /*activate=*/false);
    CHECK(max_abs_diff(eval_forward(g, m), logits) < 1e-11);
  }
  SUBCASE("zero scoring vectors reduce to degree-normalized mean aggregation") {
    Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 3, 19, 2);
    ModelConfig cfg;
    cfg.depth = 1;
    GnnModel m = init_model(cfg, 3, 2, 20);
    set_values(m.layers[0][0].a, std::vector<double>(4, 0.0));
    Mat W = tensor_mat(m.layers[0][0].W);
    Mat H = matmul_ref(g.features, W);
    Mat expect(g.n, W.cols);
    for (std::int64_t i = 0; i < g.n; ++i) {
      const double inv = 1.0 / static_cast<double>(g.degree(i) + 1);
      for (std::int64_t f = 0; f < W.cols; ++f) expect.at(i, f) += inv * H.at(i, f);
      for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k)
        for (std::int64_t f = 0; f < W.cols; ++f)
          expect.at(i, f) += inv * H.at(g.col_idx[static_cast<std::size_t>(k)], f);
    }
    CHECK(max_abs_diff(eval_forward(g, m), expect) < 1e-12);
  }
  SUBCASE("layerwise evaluation composes to the full forward") {
    Graph g = make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {0, 3}}, 4, 23, 3);
    for (ModelKind kind : {ModelKind::gat, ModelKind::gcn}) {
      ModelConfig cfg;
      cfg.kind = kind;
      cfg.depth = 3;
      cfg.hidden_dim = 4;
      cfg.heads_hidden = 2;
      GnnModel m = init_model(cfg, 4, 3, 29);
      Mat cur = g.features;
      for (int l = 0; l < 3; ++l) cur = eval_layer_apply(cur, g, m, l, nullptr);
      CHECK(max_abs_diff(cur, eval_forward(g, m)) == 0.0);
      CHECK(max_abs_diff(eval_layer_input(g, m, 2), eval_layer_apply(eval_layer_input(g, m, 1), g, m, 1)) == 0.0);
    }
  }
  SUBCASE("residual flag adds the input back on width-preserving layers") {
    Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 4, 33, 2);
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.hidden_dim = 4;
    cfg.heads_hidden = 2;
    GnnModel m = init_model(cfg, 4, 2, 34);
    Mat x1 = eval_layer_input(g, m, 1);  // width 4 == hidden, so layer 1 can skip
    Mat plain = eval_layer_apply(x1, g, m, 1);
    m.cfg.residual = true;
    Mat res = eval_layer_apply(x1, g, m, 1);
    CHECK(max_abs_diff(res, plain) > 0.0);
    Mat expect = plain;
    for (std::int64_t i = 0; i < expect.size(); ++i) expect.v[i] += x1.v[i];
    CHECK(max_abs_diff(res, expect) < 1e-14);
    // Layer 0 maps feature_dim -> hidden with equal widths here, but the
    // output layer (width 2) never gets a skip.
    m.cfg.residual = true;
    Mat x2 = eval_layer_input(g, m, 2);
    Mat out_res = eval_layer_apply(x2, g, m, 2);
    m.cfg.residual = false;
    CHECK(max_abs_diff(out_res, eval_layer_apply(x2, g, m, 2)) == 0.0);
  }
}

TEST_CASE("pruned edges are excluded before the softmax") {
  Graph g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}}, 3, 41, 2);
  ModelConfig cfg;
  cfg.kind = ModelKind::dynamo_gat;
  cfg.depth = 2;
  cfg.hidden_dim = 4;
  cfg.heads_hidden = 2;
  GnnModel m = init_model(cfg, 3, 2, 42);

  PruneState st;
  st.init_shape(2, static_cast<std::int64_t>(g.col_idx.size()), g.n);
  st.initialized = true;
  // Prune, at layer 0 only, the directed edge stored in node 0's first
  // CSR slot (0 <- 1).
  st.pruned[0][static_cast<std::size_t>(g.row_ptr[0])] = 1;

  EdgeList full = build_edge_list(g, nullptr, 0);
  EdgeList pruned0 = build_edge_list(g, &st, 0);
  EdgeList pruned1 = build_edge_list(g, &st, 1);
  CHECK(full.count() == g.n + static_cast<std::int64_t>(g.col_idx.size()));
  CHECK(pruned0.count() == full.count() - 1);
  CHECK(pruned1.count() == full.count());
  // Self-loop first in every destination group.
  for (std::int64_t i = 0, k = 0; i < g.n; ++i) {
    CHECK(pruned0.dst[static_cast<std::size_t>(k)] == i);
    CHECK(pruned0.src[static_cast<std::size_t>(k)] == i);
    CHECK(pruned0.slot[static_cast<std::size_t>(k)] == -1);
    k += 1 + (g.degree(i) - (i == 0 ? 1 : 0));
  }

  AttentionCoeffs att = gat_attention(g.features, g, m, 0, &st);
  CHECK(att.edges.count() == pruned0.count());
  for (const auto& head : att.alpha) {
    std::vector<double> row_sum(static_cast<std::size_t>(g.n), 0.0);
    for (std::int64_t k = 0; k < att.edges.count(); ++k)
      row_sum[static_cast<std::size_t>(att.edges.dst[static_cast<std::size_t>(k)])] +=
          head[static_cast<std::size_t>(k)];
    for (double s : row_sum) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Renormalized survivors equal the softmax over the surviving edges:
  // excluding before the softmax is the recalibration of the full set.
  AttentionCoeffs att_full = gat_attention(g.features, g, m, 0, nullptr);
  std::vector<double> recal = recalibrate(att_full.alpha[0], att_full.edges, st, 0, g.n);
  std::size_t kp = 0;
  for (std::int64_t k = 0; k < att_full.edges.count(); ++k) {
    const std::int64_t slot = att_full.edges.slot[static_cast<std::size_t>(k)];
    if (slot >= 0 && !st.alive(0, slot)) {
      CHECK(recal[static_cast<std::size_t>(k)] == 0.0);
      continue;
    }
    CHECK(recal[static_cast<std::size_t>(k)] ==
          doctest::Approx(att.alpha[0][kp]).epsilon(1e-12));
    ++kp;
  }
}

TEST_CASE("snapshot and restore round-trip") {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.hidden_dim = 4;
  cfg.heads_hidden = 2;
  GnnModel m = init_model(cfg, 3, 2, 50);
  auto saved = m.snapshot_values();
  for (auto& p : m.parameters())
    for (auto& v : p.value()) v += 1.0;
  auto bumped = m.snapshot_values();
  CHECK(max_abs_diff(saved[0], bumped[0]) == doctest::Approx(1.0));
  m.restore_values(saved);
  auto back = m.snapshot_values();
  for (std::size_t i = 0; i < saved.size(); ++i) CHECK(max_abs_diff(saved[i], back[i]) == 0.0);
  saved.pop_back();
  CHECK_THROWS(m.restore_values(saved));
}

TEST_CASE("training loop") {
  Graph g = make_graph(12,
                       {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {6, 7}, {7, 8},
                        {8, 9}, {9, 10}, {10, 11}, {11, 6}, {0, 6}, {3, 9}},
                       4, 61, 2);
  // Make the task learnable: class-dependent feature shift.
  for (std::int64_t i = 0; i < g.n; ++i)
    for (std::int64_t f = 0; f < 4; ++f)
      g.features.at(i, f) += g.labels[static_cast<std::size_t>(i)] ? 1.5 : -1.5;
  Masks masks;
  masks.train.assign(12, 0);
  masks.val.assign(12, 0);
  masks.test.assign(12, 0);
  for (int i = 0; i < 12; ++i) (i % 3 == 0 ? masks.train : (i % 3 == 1 ? masks.val : masks.test))[i] = 1;

  SUBCASE("zero learning rate leaves parameters at initialization") {
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gcn;
    mcfg.depth = 2;
    mcfg.hidden_dim = 4;
    TrainConfig tcfg;
    tcfg.lr = 0.0;
    tcfg.max_epochs = 4;
    tcfg.seed = 3;
    TrainResult r = train(g, masks, mcfg, tcfg);
    GnnModel fresh = init_model(mcfg, g.feature_dim(), g.num_classes, tcfg.seed);
    auto a = r.model.snapshot_values(), b = fresh.snapshot_values();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(a[i], b[i]) == 0.0);
  }
  SUBCASE("identical seeds give identical reports, for gcn and gat") {
    for (ModelKind kind : {ModelKind::gcn, ModelKind::gat}) {
      ModelConfig mcfg;
      mcfg.kind = kind;
      mcfg.depth = 2;
      mcfg.hidden_dim = 4;
      mcfg.heads_hidden = 2;
      TrainConfig tcfg;
      tcfg.max_epochs = 8;
      tcfg.patience = 8;
      tcfg.seed = 17;
      TrainResult r1 = train(g, masks, mcfg, tcfg);
      TrainResult r2 = train(g, masks, mcfg, tcfg);
      REQUIRE(r1.report.epochs_run == r2.report.epochs_run);
      for (int e = 0; e < r1.report.epochs_run; ++e) {
        CHECK(r1.report.train_loss[static_cast<std::size_t>(e)] ==
              r2.report.train_loss[static_cast<std::size_t>(e)]);
        CHECK(r1.report.val_acc[static_cast<std::size_t>(e)] ==
              r2.report.val_acc[static_cast<std::size_t>(e)]);
      }
      CHECK(r1.report.test_acc == r2.report.test_acc);
      CHECK(r1.report.best_epoch == r2.report.best_epoch);
    }
  }
  SUBCASE("report bookkeeping and learnability") {
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gcn;
    mcfg.depth = 2;
    mcfg.hidden_dim = 8;
    mcfg.dropout = 0.1;
    TrainConfig tcfg;
    tcfg.max_epochs = 120;
    tcfg.patience = 40;
    tcfg.seed = 5;
    TrainResult r = train(g, masks, mcfg, tcfg);
    CHECK(r.report.epochs_run == static_cast<int>(r.report.train_loss.size()));
    CHECK(r.report.epochs_run == static_cast<int>(r.report.val_acc.size()));
    CHECK(r.report.best_epoch >= 0);
    CHECK(r.report.best_epoch < r.report.epochs_run);
    for (double a : r.report.val_acc) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    // Linearly separated classes: the model should fit the train split.
    CHECK(r.report.best_val_acc >= 0.75);
  }
  SUBCASE("patience stops training early") {
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gcn;
    mcfg.depth = 2;
    mcfg.hidden_dim = 4;
    TrainConfig tcfg;
    tcfg.lr = 0.0;  // val accuracy can never improve after epoch 0
    tcfg.max_epochs = 50;
    tcfg.patience = 5;
    TrainResult r = train(g, masks, mcfg, tcfg);
    CHECK(r.report.epochs_run == 6);  // epoch 0 best + 5 patient epochs
    CHECK(r.report.best_epoch == 0);
  }
  SUBCASE("runaway learning rate surfaces as a diagnostic error") {
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gcn;
    mcfg.depth = 2;
    mcfg.hidden_dim = 4;
    TrainConfig tcfg;
    tcfg.lr = 1e200;
    tcfg.max_epochs = 6;
    CHECK_THROWS(train(g, masks, mcfg, tcfg));
  }
  SUBCASE("the hook fires once per epoch with the live model") {
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gat;
    mcfg.depth = 2;
    mcfg.hidden_dim = 4;
    mcfg.heads_hidden = 2;
    TrainConfig tcfg;
    tcfg.max_epochs = 5;
    tcfg.patience = 5;
    std::vector<int> epochs;
    auto hook = [&](int epoch, const GnnModel& model) {
      epochs.push_back(epoch);
      CHECK(model.num_layers() == 2);
    };
    train(g, masks, mcfg, tcfg, nullptr, hook);
    REQUIRE(epochs.size() == 5);
    for (int e = 0; e < 5; ++e) CHECK(epochs[static_cast<std::size_t>(e)] == e);
  }
  SUBCASE("mask size mismatch is rejected") {
    Masks bad = masks;
    bad.train.pop_back();
    ModelConfig mcfg;
    mcfg.kind = ModelKind::gcn;
    TrainConfig tcfg;
    CHECK_THROWS(train(g, bad, mcfg, tcfg));
  }
}

TEST_CASE("activation lipschitz constants") {
  CHECK(activation_lipschitz(Activation::identity) == 1.0);
  CHECK(activation_lipschitz(Activation::relu) == 1.0);
  CHECK(activation_lipschitz(Activation::elu) == 1.0);
  CHECK(activation_lipschitz(Activation::tanh) == 1.0);
  CHECK(activation_lipschitz(Activation::leaky_relu, 0.2) == 1.0);
  CHECK(activation_lipschitz(Activation::leaky_relu, 3.0) == 3.0);
}
