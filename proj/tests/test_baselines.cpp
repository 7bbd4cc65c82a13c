#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "oracle_helpers.hpp"
#include "tempograd/baselines.hpp"
#include "tempograd/metrics.hpp"
#include "tempograd/rng.hpp"

using namespace tempograd;

namespace {

double dense_entry(const Csr& a, int r, int c) {
  for (int k = a.row_ptr[static_cast<std::size_t>(r)];
       k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
    if (a.col_idx[static_cast<std::size_t>(k)] == c) return a.values[static_cast<std::size_t>(k)];
  return 0.0;
}

TemporalGraph three_node_pair() {
  TemporalGraph g;
  g.num_nodes = 3;
  g.node_dim = 2;
  g.edge_dim = 0;
  g.node_features = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  g.labels = {0, 1, 0};
  g.splits = {Split::train, Split::train, Split::train};
  g.edges.push_back({0, 1, 1.0, {}});
  g.edges.push_back({1, 0, 2.0, {}});
  g.validate();
  return g;
}

// Two feature-separated class blocks with edges only inside each class, so
// neighbor averaging preserves the separation for every baseline kind.
TemporalGraph homophilous_fixture() {
  const int n = 60;
  Rng rng(11);
  TemporalGraph g;
  g.num_nodes = n;
  g.node_dim = 3;
  g.edge_dim = 0;
  for (int i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    g.labels.push_back(label);
    const int rank = i % (n / 2);
    g.splits.push_back(rank < 20 ? Split::train : rank < 25 ? Split::valid : Split::test);
    g.node_features.push_back((label == 1 ? 3.0 : -3.0) + 0.3 * rng.normal());
    g.node_features.push_back(rng.normal());
    g.node_features.push_back(rng.normal());
  }
  double t = 1.0;
  for (int i = 0; i < n; ++i) {
    const int lo = i < n / 2 ? 0 : n / 2;
    const int peer = lo + (i - lo + 1) % (n / 2);
    g.edges.push_back({i, peer, t, {}});
    t += 1.0;
  }
  g.validate();
  return g;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  return perm;
}

TemporalGraph permuted(const TemporalGraph& g, const std::vector<int>& perm) {
  TemporalGraph out;
  out.num_nodes = g.num_nodes;
  out.node_dim = g.node_dim;
  out.edge_dim = g.edge_dim;
  out.node_features.resize(g.node_features.size());
  out.labels.resize(g.labels.size());
  out.splits.resize(g.splits.size());
  for (int i = 0; i < g.num_nodes; ++i) {
    const int to = perm[static_cast<std::size_t>(i)];
    for (int c = 0; c < g.node_dim; ++c)
      out.node_features[static_cast<std::size_t>(to) * g.node_dim + c] =
          g.node_features[static_cast<std::size_t>(i) * g.node_dim + c];
    out.labels[static_cast<std::size_t>(to)] = g.labels[static_cast<std::size_t>(i)];
    out.splits[static_cast<std::size_t>(to)] = g.splits[static_cast<std::size_t>(i)];
  }
  for (const EdgeEvent& ev : g.edges)
    out.edges.push_back({perm[static_cast<std::size_t>(ev.src)],
                         perm[static_cast<std::size_t>(ev.dst)], ev.t, ev.features});
  out.validate();
  return out;
}

}  // namespace

TEST_CASE("collapse folds the event log into one undirected adjacency") {
  const StaticGraph sg = collapse(three_node_pair());
  const Csr& a = *sg.norm_adj;

  // Nodes 0 and 1 each have degree 1: off-diagonal weight 1/2, self 1/2.
  CHECK(a.nnz() == 5);
  CHECK(dense_entry(a, 0, 1) == doctest::Approx(0.5));
  CHECK(dense_entry(a, 1, 0) == doctest::Approx(0.5));
  CHECK(dense_entry(a, 0, 0) == doctest::Approx(0.5));
  CHECK(dense_entry(a, 2, 2) == doctest::Approx(1.0));
  CHECK(dense_entry(a, 2, 0) == 0.0);

  const Csr& m = *sg.neighbor_mean;
  CHECK(dense_entry(m, 0, 1) == doctest::Approx(1.0));
  CHECK(dense_entry(m, 1, 0) == doctest::Approx(1.0));
  CHECK(m.row_ptr[3] == m.row_ptr[2]);  // isolated node: empty mean row

  SUBCASE("self-loop events are dropped") {
    TemporalGraph g = three_node_pair();
    g.edges.push_back({2, 2, 3.0, {}});
    const StaticGraph looped = collapse(g);
    CHECK(dense_entry(*looped.norm_adj, 2, 2) == doctest::Approx(1.0));
    CHECK(looped.neighbor_mean->row_ptr[3] == looped.neighbor_mean->row_ptr[2]);
  }

  SUBCASE("empty log gives the identity adjacency") {
    TemporalGraph g = three_node_pair();
    g.edges.clear();
    const StaticGraph empty = collapse(g);
    CHECK(empty.norm_adj->nnz() == 3);
    for (int i = 0; i < 3; ++i)
      CHECK(dense_entry(*empty.norm_adj, i, i) == doctest::Approx(1.0));
    CHECK(empty.neighbor_mean->nnz() == 0);
  }
}

TEST_CASE("collapsed matrices are symmetric and row-normalized") {
  Rng rng(29);
  TemporalGraph g;
  g.num_nodes = 25;
  g.node_dim = 1;
  g.edge_dim = 0;
  for (int i = 0; i < g.num_nodes; ++i) {
    g.node_features.push_back(rng.normal());
    g.labels.push_back(0);
    g.splits.push_back(Split::train);
  }
  for (int e = 0; e < 80; ++e) {
    const int a = static_cast<int>(rng.randint(0, 24));
    const int b = static_cast<int>(rng.randint(0, 24));
    g.edges.push_back({a, b, static_cast<double>(e), {}});
  }
  g.validate();
  const StaticGraph sg = collapse(g);

  for (int i = 0; i < g.num_nodes; ++i) {
    CHECK(dense_entry(*sg.norm_adj, i, i) > 0.0);
    for (int j = 0; j < g.num_nodes; ++j) {
      CHECK(dense_entry(*sg.norm_adj, i, j) == dense_entry(*sg.norm_adj, j, i));
      CHECK(dense_entry(*sg.neighbor_mean, i, j) == dense_entry(*sg.neighbor_mean_t, j, i));
    }
    double row_sum = 0.0;
    for (int j = 0; j < g.num_nodes; ++j) row_sum += dense_entry(*sg.neighbor_mean, i, j);
    const bool isolated =
        sg.neighbor_mean->row_ptr[static_cast<std::size_t>(i) + 1] ==
        sg.neighbor_mean->row_ptr[static_cast<std::size_t>(i)];
    CHECK(row_sum == doctest::Approx(isolated ? 0.0 : 1.0));
  }
}

TEST_CASE("gcn without edges reduces to a per-node mlp") {
  TemporalGraph g = three_node_pair();
  g.edges.clear();
  const StaticGraph sg = collapse(g);
  const GraphModel model(BaselineKind::gcn, 2, 4, 31);

  const Tensor out = model.logits(sg).value();
  const Tensor w1 = model.parameters()[0].value();
  const Tensor b1 = model.parameters()[1].value();
  const Tensor w2 = model.parameters()[2].value();
  const Tensor b2 = model.parameters()[3].value();
  for (int i = 0; i < 3; ++i) {
    double logit = b2[0];
    for (int h = 0; h < 4; ++h) {
      double pre = b1[static_cast<std::size_t>(h)];
      for (int c = 0; c < 2; ++c) pre += w1.at(h, c) * g.node_row(i)[c];
      logit += w2.at(0, h) * std::max(pre, 0.0);
    }
    CHECK(out.at(i, 0) == doctest::Approx(logit).epsilon(1e-12));
  }
}

TEST_CASE("graph models are permutation-equivariant") {
  const TemporalGraph g = homophilous_fixture();
  Rng rng(43);
  const auto perm = random_permutation(g.num_nodes, rng);
  const StaticGraph sg = collapse(g);
  const StaticGraph sg_perm = collapse(permuted(g, perm));

  for (const BaselineKind kind : {BaselineKind::gcn, BaselineKind::sage}) {
    const GraphModel model(kind, g.node_dim, 8, 17);
    const auto base = graph_model_scores(model, sg);
    const auto moved = graph_model_scores(model, sg_perm);
    for (int i = 0; i < g.num_nodes; ++i)
      CHECK(moved[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] ==
            doctest::Approx(base[static_cast<std::size_t>(i)]).epsilon(1e-9));
  }
}

TEST_CASE("every baseline separates homophilous separable features") {
  const TemporalGraph g = homophilous_fixture();
  const StaticGraph sg = collapse(g);
  DownstreamConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 20;
  cfg.lr = 0.05;
  cfg.hidden_dims = {8};

  for (const BaselineKind kind : {BaselineKind::mlp, BaselineKind::gcn, BaselineKind::sage}) {
    CAPTURE(baseline_kind_to_string(kind));
    const BaselineReport report = train_baseline(kind, sg, g, cfg, 7);
    REQUIRE(report.records.size() == 60);
    REQUIRE(report.scores.size() == static_cast<std::size_t>(g.num_nodes));
    for (const TrainRecord& r : report.records) {
      CHECK(r.phase == "downstream");
      CHECK(std::isfinite(r.loss));
    }
    std::vector<double> train_scores;
    std::vector<int> train_labels;
    for (int i = 0; i < g.num_nodes; ++i) {
      if (g.splits[static_cast<std::size_t>(i)] != Split::train) continue;
      train_scores.push_back(report.scores[static_cast<std::size_t>(i)]);
      train_labels.push_back(g.labels[static_cast<std::size_t>(i)]);
    }
    CHECK(auc(train_scores, train_labels) > 0.99);
    CHECK(*report.records.back().valid_auc > 0.99);
  }
}

TEST_CASE("baseline training is deterministic and validates input") {
  const TemporalGraph g = homophilous_fixture();
  const StaticGraph sg = collapse(g);
  DownstreamConfig cfg;
  cfg.epochs = 3;
  cfg.hidden_dims = {8};

  const BaselineReport a = train_baseline(BaselineKind::gcn, sg, g, cfg, 5);
  const BaselineReport b = train_baseline(BaselineKind::gcn, sg, g, cfg, 5);
  CHECK(a.records == b.records);
  CHECK(a.scores == b.scores);

  CHECK_THROWS_AS(GraphModel(BaselineKind::mlp, 3, 8, 1), ContractError);
  CHECK_THROWS_AS(GraphModel(BaselineKind::gcn, 0, 8, 1), ConfigError);
  CHECK_THROWS_AS(baseline_kind_from_string("tree"), ConfigError);
  CHECK(baseline_kind_from_string("sage") == BaselineKind::sage);

  TemporalGraph small = three_node_pair();
  CHECK_THROWS_AS(train_baseline(BaselineKind::gcn, sg, small, cfg, 1), ShapeError);
  const GraphModel model(BaselineKind::gcn, 7, 4, 1);
  CHECK_THROWS_AS(model.logits(sg), ShapeError);
}

TEST_CASE("gradients flow through both graph model kinds") {
  const TemporalGraph g = homophilous_fixture();
  const StaticGraph sg = collapse(g);
  std::vector<int> nodes;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    nodes.push_back(i * 5);
    labels.push_back(g.labels[static_cast<std::size_t>(i * 5)]);
  }
  for (const BaselineKind kind : {BaselineKind::gcn, BaselineKind::sage}) {
    CAPTURE(baseline_kind_to_string(kind));
    const GraphModel model(kind, g.node_dim, 4, 3);
    const double err = oracle::max_fd_rel_err(
        [&] {
          const Var probs = clamp(sigmoid(flatten(take_rows(model.logits(sg), nodes))),
                                  kProbFloor, 1.0 - kProbFloor);
          return node_loss(probs, labels);
        },
        model.parameters());
    CHECK(err < 1e-4);
  }
}
