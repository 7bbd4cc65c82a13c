#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "tempograd/dataset_io.hpp"
#include "tempograd/errors.hpp"
#include "tempograd/synth.hpp"

using namespace tempograd;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.num_nodes = 200;
  cfg.communities = 5;
  cfg.fraud_rate = 0.1;
  cfg.node_dim = 4;
  cfg.edge_dim = 2;
  cfg.activity_rate = 2.0;
  cfg.burst_size = 6;
  cfg.burst_victims = 2;
  cfg.burst_window = 10.0;
  cfg.horizon = 500.0;
  cfg.name = "synthtest";
  return cfg;
}

int community_of(int node, const SynthConfig& cfg) {
  for (int c = 0; c < cfg.communities; ++c) {
    const auto lo = static_cast<long long>(c) * cfg.num_nodes / cfg.communities;
    const auto hi = static_cast<long long>(c + 1) * cfg.num_nodes / cfg.communities;
    if (node >= lo && node < hi) return c;
  }
  return -1;
}

}  // namespace

TEST_CASE("generator is deterministic in the seed") {
  const SynthConfig cfg = small_config();
  const Dataset a = generate_synth(cfg, 7);
  const Dataset b = generate_synth(cfg, 7);
  CHECK(a == b);

  const Dataset c = generate_synth(cfg, 8);
  CHECK(c.graph.edges.size() > 0);
  CHECK(!(a == c));
}

TEST_CASE("generated structure matches the configuration") {
  const SynthConfig cfg = small_config();
  const Dataset ds = generate_synth(cfg, 3);
  const TemporalGraph& g = ds.graph;

  CHECK(g.num_nodes == cfg.num_nodes);
  CHECK(g.node_dim == cfg.node_dim);
  CHECK(g.edge_dim == cfg.edge_dim);
  CHECK(ds.name == cfg.name);
  CHECK(ds.seed == 3);

  SUBCASE("fraud count and labels") {
    const auto expected = static_cast<int>(std::llround(cfg.fraud_rate * cfg.num_nodes));
    int fraud = 0;
    for (const int label : g.labels) {
      CHECK((label == 0 || label == 1));
      fraud += label;
    }
    CHECK(fraud == expected);
  }

  SUBCASE("background edges stay inside their community") {
    for (const EdgeEvent& ev : g.edges) {
      if (g.labels[static_cast<std::size_t>(ev.src)] == 0) {
        CHECK(community_of(ev.src, cfg) == community_of(ev.dst, cfg));
      }
      CHECK(ev.src != ev.dst);
      CHECK(ev.t >= 0.0);
      CHECK(ev.t <= cfg.horizon);
      CHECK(static_cast<int>(ev.features.size()) == cfg.edge_dim);
    }
  }

  SUBCASE("every fraud node fires a burst inside one window") {
    for (int i = 0; i < g.num_nodes; ++i) {
      if (g.labels[static_cast<std::size_t>(i)] != 1) continue;
      std::vector<double> out_times;
      for (const EdgeEvent& ev : g.edges)
        if (ev.src == i) out_times.push_back(ev.t);
      REQUIRE(static_cast<int>(out_times.size()) >= cfg.burst_size);
      std::sort(out_times.begin(), out_times.end());
      int densest = 0;
      for (std::size_t lo = 0, hi = 0; hi < out_times.size(); ++hi) {
        while (out_times[hi] - out_times[lo] > cfg.burst_window) ++lo;
        densest = std::max(densest, static_cast<int>(hi - lo + 1));
      }
      CHECK(densest >= cfg.burst_size);
    }
  }

  SUBCASE("burst edges concentrate on at most burst_victims targets") {
    for (int i = 0; i < g.num_nodes; ++i) {
      if (g.labels[static_cast<std::size_t>(i)] != 1) continue;
      std::map<int, int> multiplicity;
      for (const EdgeEvent& ev : g.edges)
        if (ev.src == i) ++multiplicity[ev.dst];
      std::vector<int> counts;
      for (const auto& [dst, count] : multiplicity) counts.push_back(count);
      std::sort(counts.begin(), counts.end(), std::greater<>());
      int top = 0;
      for (int k = 0; k < cfg.burst_victims && k < static_cast<int>(counts.size()); ++k)
        top += counts[static_cast<std::size_t>(k)];
      CHECK(top >= cfg.burst_size);
    }
  }

  SUBCASE("splits are stratified per class") {
    for (const int label : {0, 1}) {
      int total = 0, train = 0, valid = 0, test = 0;
      for (int i = 0; i < g.num_nodes; ++i) {
        if (g.labels[static_cast<std::size_t>(i)] != label) continue;
        ++total;
        const Split s = g.splits[static_cast<std::size_t>(i)];
        train += s == Split::train;
        valid += s == Split::valid;
        test += s == Split::test;
      }
      CHECK(train == static_cast<int>(std::llround(cfg.train_frac * total)));
      CHECK(valid == static_cast<int>(std::llround(cfg.valid_frac * total)));
      CHECK(test == total - train - valid);
      CHECK(test > 0);
    }
  }

  SUBCASE("edge volume is in the expected range") {
    const double expected = cfg.activity_rate * cfg.num_nodes +
                            static_cast<double>(cfg.burst_size) *
                                std::llround(cfg.fraud_rate * cfg.num_nodes);
    const auto count = static_cast<double>(g.edges.size());
    CHECK(count > 0.5 * expected);
    CHECK(count < 1.5 * expected);
  }
}

TEST_CASE("generated dataset survives a save/load cycle bit for bit") {
  const Dataset ds = generate_synth(small_config(), 11);
  const auto dir = std::filesystem::temp_directory_path() / "tempograd_synth_rt";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(ds == back);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator rejects invalid configurations") {
  const auto broken = [](auto mutate) {
    SynthConfig cfg = small_config();
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.num_nodes = 1; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.communities = 0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.communities = 150; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.fraud_rate = 1.5; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.node_dim = 0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.edge_dim = -1; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.activity_rate = -1.0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.burst_victims = 0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.burst_victims = 200; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.horizon = 0.0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.burst_window = 600.0; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.train_frac = 0.9; }), 0), ConfigError);
  CHECK_THROWS_AS(generate_synth(broken([](SynthConfig& c) { c.name = "has space"; }), 0), ConfigError);
}
