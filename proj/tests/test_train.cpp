#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "oracle_helpers.hpp"
#include "tempograd/autodiff.hpp"
#include "tempograd/embedder.hpp"
#include "tempograd/metrics.hpp"
#include "tempograd/rng.hpp"
#include "tempograd/synth.hpp"
#include "tempograd/training.hpp"

using namespace tempograd;

namespace {

SynthConfig tiny_synth() {
  SynthConfig cfg;
  cfg.num_nodes = 100;
  cfg.communities = 4;
  cfg.fraud_rate = 0.1;
  cfg.node_dim = 8;
  cfg.edge_dim = 2;
  cfg.activity_rate = 2.0;
  cfg.burst_size = 6;
  cfg.burst_window = 10.0;
  cfg.horizon = 200.0;
  cfg.name = "tiny";
  return cfg;
}

EmbedConfig tiny_embed(EmbedKind kind) {
  EmbedConfig cfg;
  cfg.kind = kind;
  cfg.time_dim = 8;
  cfg.hidden_dim = 16;
  cfg.num_neighbors = 5;
  return cfg;
}

Var random_vec(Rng& rng, int n) {
  Tensor t({n});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return make_param(std::move(t));
}

// Two interleaved classes separated along the first embedding axis, with the
// tail kept as valid/test so the train slice holds 40 nodes of each class.
struct SeparableFixture {
  TemporalGraph graph;
  Tensor embeddings;
};

SeparableFixture separable_fixture() {
  const int n = 100;
  const int d = 3;
  Rng rng(5);
  SeparableFixture fx;
  fx.graph.num_nodes = n;
  fx.graph.node_dim = 1;
  fx.graph.edge_dim = 0;
  fx.graph.node_features.assign(static_cast<std::size_t>(n), 0.0);
  fx.embeddings = Tensor({n, d});
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    fx.graph.labels.push_back(label);
    fx.graph.splits.push_back(i < 80 ? Split::train : i < 90 ? Split::valid : Split::test);
    fx.embeddings.at(i, 0) = (label == 1 ? 3.0 : -3.0) + 0.3 * rng.normal();
    for (int c = 1; c < d; ++c) fx.embeddings.at(i, c) = rng.normal();
  }
  fx.graph.validate();
  return fx;
}

}  // namespace

TEST_CASE("negative sampling is uniform and deterministic") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(sample_negative(rng, 1) == 0);

  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(sample_negative(a, 50) == sample_negative(b, 50));

  std::vector<int> bins(10, 0);
  Rng wide(3);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++bins[static_cast<std::size_t>(sample_negative(wide, 10))];
  // Binomial: mean 10^4, sigma = sqrt(10^5 * 0.1 * 0.9) ~ 94.9.
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  for (const int count : bins) CHECK(std::abs(count - draws / 10) < 3.0 * sigma);

  CHECK_THROWS_AS(sample_negative(rng, 0), ContractError);
}

TEST_CASE("link loss worked examples and gradient") {
  SUBCASE("orthogonal pairs sit at 2 ln 2") {
    const Var zu = make_param(Tensor({2}, {1.0, 0.0}));
    const Var zi = make_param(Tensor({2}, {0.0, 1.0}));
    const Var zk = make_param(Tensor({2}, {0.0, -1.0}));
    CHECK(link_loss(zu, zi, zk).value()[0] == doctest::Approx(2.0 * std::log(2.0)));
  }
  SUBCASE("saturated pairs stay finite and approach zero") {
    const Var zu = make_param(Tensor({1}, {100.0}));
    const Var zi = make_param(Tensor({1}, {100.0}));
    const Var zk = make_param(Tensor({1}, {-100.0}));
    const double loss = link_loss(zu, zi, zk).value()[0];
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-5);
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(17);
    for (int trial = 0; trial < 3; ++trial) {
      Var zu = random_vec(rng, 6), zi = random_vec(rng, 6), zk = random_vec(rng, 6);
      const double err =
          oracle::max_fd_rel_err([&] { return link_loss(zu, zi, zk); }, {zu, zi, zk});
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("node loss worked examples and gradient") {
  SUBCASE("uninformative predictions cost ln 2") {
    const Var probs = make_const(Tensor::full({4}, 0.5));
    CHECK(node_loss(probs, {0, 1, 1, 0}).value()[0] == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("perfect post-clamp predictions cost under 1e-6") {
    const Var probs = make_const(Tensor({2}, {1e-7, 1.0 - 1e-7}));
    CHECK(node_loss(probs, {0, 1}).value()[0] < 1e-6);
  }
  SUBCASE("stays finite for maximally wrong raw predictions") {
    const Var probs = make_const(Tensor({2}, {1.0, 0.0}));
    const double loss = node_loss(probs, {0, 1}).value()[0];
    CHECK(std::isfinite(loss));
    CHECK(loss > 10.0);
  }
  SUBCASE("rejects bad labels and shapes") {
    const Var probs = make_const(Tensor::full({2}, 0.5));
    CHECK_THROWS_AS(node_loss(probs, {0, 2}), ContractError);
    CHECK_THROWS_AS(node_loss(probs, {0, 1, 0}), ShapeError);
    CHECK_THROWS_AS(node_loss(make_const(Tensor::zeros({2, 2})), {0, 1}), ShapeError);
  }
  SUBCASE("decoder gradient matches finite differences") {
    Rng rng(23);
    Decoder dec(4, {5}, 77);
    Tensor x({6, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    const Var xc = make_const(x);
    const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
    const double err = oracle::max_fd_rel_err(
        [&] { return node_loss(dec.probabilities(xc), labels); }, dec.parameters());
    CHECK(err < 1e-4);
  }
}

TEST_CASE("final-time queries include every last event") {
  TemporalGraph g;
  g.num_nodes = 3;
  g.node_dim = 1;
  g.edge_dim = 0;
  g.node_features = {0.5, -0.5, 2.0};
  g.labels = {0, 1, 0};
  g.splits = {Split::train, Split::train, Split::train};
  g.edges.push_back({0, 1, 1.0, {}});
  g.edges.push_back({0, 1, 7.0, {}});
  g.validate();

  CHECK(final_time_epsilon(g) == 3.0);
  const auto times = final_query_times(g);
  CHECK(times == std::vector<double>{10.0, 10.0, 10.0});

  SUBCASE("degenerate logs fall back to unit epsilon") {
    TemporalGraph flat = g;
    flat.edges[1].t = 1.0;
    CHECK(final_time_epsilon(flat) == 1.0);
    TemporalGraph empty = g;
    empty.edges.clear();
    CHECK(final_time_epsilon(empty) == 1.0);
    CHECK(final_query_times(empty) == std::vector<double>{1.0, 1.0, 1.0});
  }

  SUBCASE("embeddings match per-node queries bit for bit") {
    const TemporalEmbedder emb(g, tiny_embed(EmbedKind::attn), 4);
    const Tensor all = final_time_embeddings(emb);
    REQUIRE(all.rows() == 3);
    for (int i = 0; i < 3; ++i) {
      const Tensor one = emb.embed(i, times[static_cast<std::size_t>(i)]).value();
      for (int c = 0; c < all.cols(); ++c) CHECK(all.at(i, c) == one[static_cast<std::size_t>(c)]);
    }
    // The event-free node's embedding carries no time dependence at all.
    const Tensor anytime = emb.embed(2, 0.25).value();
    for (int c = 0; c < all.cols(); ++c) CHECK(all.at(2, c) == anytime[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("pretraining reduces the link loss and is reproducible") {
  const Dataset ds = generate_synth(tiny_synth(), 21);
  PretrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  cfg.lr = 1e-3;

  SUBCASE("zero epochs leave parameters untouched") {
    TemporalEmbedder emb(ds.graph, tiny_embed(EmbedKind::sum), 9);
    std::vector<Tensor> before;
    for (const Var& p : emb.parameters()) before.push_back(p.value());
    PretrainConfig noop = cfg;
    noop.epochs = 0;
    CHECK(pretrain_link_prediction(emb, noop, 1).empty());
    const auto params = emb.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < before[i].size(); ++k)
        CHECK(params[i].value()[k] == before[i][k]);
  }

  SUBCASE("loss trace drops and reproduces bitwise") {
    TemporalEmbedder emb_a(ds.graph, tiny_embed(EmbedKind::sum), 9);
    const auto records_a = pretrain_link_prediction(emb_a, cfg, 31);
    REQUIRE(records_a.size() == 5);
    for (std::size_t e = 0; e < records_a.size(); ++e) {
      CHECK(records_a[e].phase == "pretrain");
      CHECK(records_a[e].epoch == static_cast<int>(e) + 1);
      CHECK(std::isfinite(records_a[e].loss));
      CHECK(!records_a[e].valid_auc.has_value());
    }
    CHECK(records_a.back().loss < records_a.front().loss);

    TemporalEmbedder emb_b(ds.graph, tiny_embed(EmbedKind::sum), 9);
    const auto records_b = pretrain_link_prediction(emb_b, cfg, 31);
    CHECK(records_a == records_b);
    const auto pa = emb_a.parameters(), pb = emb_b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t k = 0; k < pa[i].value().size(); ++k)
        CHECK(pa[i].value()[k] == pb[i].value()[k]);
  }

  SUBCASE("a poisoned parameter raises a numeric error") {
    TemporalEmbedder emb(ds.graph, tiny_embed(EmbedKind::sum), 9);
    // The combine weight feeds the output with no ReLU behind it, so the NaN
    // reaches the loss instead of being flushed to zero.
    emb.parameters().back().mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(pretrain_link_prediction(emb, cfg, 1), NumericError);
  }

  SUBCASE("adversarial inputs keep the loss finite") {
    TemporalGraph zeros = ds.graph;
    for (double& f : zeros.node_features) f = 0.0;
    for (EdgeEvent& ev : zeros.edges) ev.features.assign(ev.features.size(), 0.0);
    TemporalEmbedder emb(zeros, tiny_embed(EmbedKind::attn), 9);
    PretrainConfig quick = cfg;
    quick.epochs = 2;
    for (const TrainRecord& r : pretrain_link_prediction(emb, quick, 1))
      CHECK(std::isfinite(r.loss));

    TemporalGraph lonely;
    lonely.num_nodes = 1;
    lonely.node_dim = 2;
    lonely.edge_dim = 0;
    lonely.node_features = {0.0, 0.0};
    lonely.labels = {1};
    lonely.splits = {Split::train};
    lonely.edges.push_back({0, 0, 1.0, {}});
    lonely.edges.push_back({0, 0, 2.0, {}});
    lonely.validate();
    TemporalEmbedder solo(lonely, tiny_embed(EmbedKind::sum), 9);
    for (const TrainRecord& r : pretrain_link_prediction(solo, quick, 1))
      CHECK(std::isfinite(r.loss));
  }

  SUBCASE("config validation") {
    CHECK_THROWS_AS([] { PretrainConfig c; c.epochs = -1; c.validate(); }(), ConfigError);
    CHECK_THROWS_AS([] { PretrainConfig c; c.batch_size = 0; c.validate(); }(), ConfigError);
    CHECK_THROWS_AS([] { PretrainConfig c; c.lr = 0.0; c.validate(); }(), ConfigError);
    CHECK_THROWS_AS([] { PretrainConfig c; c.negatives = 0; c.validate(); }(), ConfigError);
  }
}

TEST_CASE("downstream training separates a separable fixture") {
  const SeparableFixture fx = separable_fixture();
  DownstreamConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 20;
  cfg.lr = 0.05;
  cfg.hidden_dims = {8};

  Decoder dec(3, cfg.hidden_dims, 41);
  const auto records = train_downstream(dec, fx.embeddings, fx.graph, cfg, 13);
  REQUIRE(records.size() == 10);
  for (const TrainRecord& r : records) {
    CHECK(r.phase == "downstream");
    CHECK(std::isfinite(r.loss));
    REQUIRE(r.valid_auc.has_value());
  }

  const auto scores = decoder_scores(dec, fx.embeddings);
  std::vector<double> train_scores;
  std::vector<int> train_labels;
  for (int i = 0; i < fx.graph.num_nodes; ++i) {
    if (fx.graph.splits[static_cast<std::size_t>(i)] != Split::train) continue;
    train_scores.push_back(scores[static_cast<std::size_t>(i)]);
    train_labels.push_back(fx.graph.labels[static_cast<std::size_t>(i)]);
  }
  CHECK(auc(train_scores, train_labels) > 0.99);
  CHECK(*records.back().valid_auc > 0.99);

  SUBCASE("valid and test labels never influence the weights") {
    TemporalGraph flipped = fx.graph;
    for (int i = 0; i < flipped.num_nodes; ++i) {
      const auto s = flipped.splits[static_cast<std::size_t>(i)];
      if (s == Split::valid || s == Split::test)
        flipped.labels[static_cast<std::size_t>(i)] ^= 1;
    }
    Decoder dec_a(3, cfg.hidden_dims, 41), dec_b(3, cfg.hidden_dims, 41);
    const auto rec_a = train_downstream(dec_a, fx.embeddings, fx.graph, cfg, 13);
    const auto rec_b = train_downstream(dec_b, fx.embeddings, flipped, cfg, 13);
    const auto pa = dec_a.parameters(), pb = dec_b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t k = 0; k < pa[i].value().size(); ++k)
        CHECK(pa[i].value()[k] == pb[i].value()[k]);
    for (std::size_t e = 0; e < rec_a.size(); ++e) {
      CHECK(rec_a[e].loss == rec_b[e].loss);
      CHECK(*rec_a[e].valid_auc == doctest::Approx(1.0 - *rec_b[e].valid_auc));
    }
  }

  SUBCASE("zero epochs are a no-op") {
    Decoder frozen(3, cfg.hidden_dims, 41);
    std::vector<Tensor> before;
    for (const Var& p : frozen.parameters()) before.push_back(p.value());
    DownstreamConfig noop = cfg;
    noop.epochs = 0;
    CHECK(train_downstream(frozen, fx.embeddings, fx.graph, noop, 13).empty());
    const auto params = frozen.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < before[i].size(); ++k)
        CHECK(params[i].value()[k] == before[i][k]);
  }

  SUBCASE("shape and config errors") {
    Decoder bad(3, cfg.hidden_dims, 41);
    CHECK_THROWS_AS(train_downstream(bad, Tensor::zeros({5, 3}), fx.graph, cfg, 1), ShapeError);
    CHECK_THROWS_AS(train_downstream(bad, Tensor::zeros({100, 2}), fx.graph, cfg, 1), ShapeError);
    CHECK_THROWS_AS([] { DownstreamConfig c; c.hidden_dims = {}; c.validate(); }(), ConfigError);
    CHECK_THROWS_AS([] { DownstreamConfig c; c.hidden_dims = {0}; c.validate(); }(), ConfigError);
    CHECK_THROWS_AS([] { DownstreamConfig c; c.lr = -1.0; c.validate(); }(), ConfigError);
  }
}

TEST_CASE("decoder names its parameters") {
  Decoder dec(6, {8, 4}, 3);
  const auto named = dec.named_parameters();
  REQUIRE(named.size() == 6);
  CHECK(named[0].first == "decoder.layer0.weight");
  CHECK(named[1].first == "decoder.layer0.bias");
  CHECK(named[4].first == "decoder.layer2.weight");
  CHECK(named[0].second.value().rows() == 8);
  CHECK(named[0].second.value().cols() == 6);
  CHECK(named[4].second.value().rows() == 1);
  CHECK(named[4].second.value().cols() == 4);
  CHECK_THROWS_AS(Decoder(0, {4}, 1), ConfigError);
  CHECK_THROWS_AS(Decoder(3, {0}, 1), ConfigError);
}
