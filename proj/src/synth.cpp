#include "tempograd/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <utility>
#include <vector>

#include "tempograd/dataset_io.hpp"
#include "tempograd/errors.hpp"
#include "tempograd/rng.hpp"

namespace tempograd {

namespace {

// Round-trips a value through the on-disk text format so the dataset held in
// memory is identical to what a save/load cycle produces.
double quantize(double v) { return parse_double(format_g9(v), "synth"); }

struct PendingEdge {
  double t = 0.0;
  int src = 0;
  int dst = 0;
  std::vector<double> features;
};

}  // namespace

void SynthConfig::validate() const {
  if (num_nodes < 2) throw ConfigError("synth: num_nodes must be >= 2");
  if (communities < 1 || communities > num_nodes / 2)
    throw ConfigError("synth: communities must be in [1, num_nodes / 2] so every community has at least two members");
  if (!(fraud_rate >= 0.0 && fraud_rate <= 1.0))
    throw ConfigError("synth: fraud_rate must be in [0, 1]");
  if (node_dim < 1) throw ConfigError("synth: node_dim must be >= 1");
  if (edge_dim < 0) throw ConfigError("synth: edge_dim must be >= 0");
  if (!(activity_rate >= 0.0)) throw ConfigError("synth: activity_rate must be >= 0");
  if (burst_size < 0) throw ConfigError("synth: burst_size must be >= 0");
  if (burst_victims < 1 || burst_victims >= num_nodes)
    throw ConfigError("synth: burst_victims must be in [1, num_nodes)");
  if (!(horizon > 0.0)) throw ConfigError("synth: horizon must be > 0");
  if (!(burst_window > 0.0 && burst_window <= horizon))
    throw ConfigError("synth: burst_window must be in (0, horizon]");
  if (!(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0))
    throw ConfigError("synth: train_frac and valid_frac must be positive and sum below 1");
  for (const char c : name)
    if (std::isspace(static_cast<unsigned char>(c)))
      throw ConfigError("synth: name must not contain whitespace");
}

Dataset generate_synth(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  const int n = config.num_nodes;
  const int d_v = config.node_dim;
  const int d_e = config.edge_dim;

  TemporalGraph graph;
  graph.num_nodes = n;
  graph.node_dim = d_v;
  graph.edge_dim = d_e;

  graph.node_features.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d_v));
  for (double& f : graph.node_features) f = quantize(rng.normal());

  const int num_fraud = static_cast<int>(std::llround(config.fraud_rate * n));
  std::vector<int> fraud_nodes = rng.sample_without_replacement(n, num_fraud);
  std::sort(fraud_nodes.begin(), fraud_nodes.end());
  std::vector<char> is_fraud(static_cast<std::size_t>(n), 0);
  for (const int f : fraud_nodes) is_fraud[static_cast<std::size_t>(f)] = 1;

  // Contiguous balanced communities: community c owns [c*n/C, (c+1)*n/C).
  const auto community_lo = [&](int c) {
    return static_cast<int>(static_cast<long long>(c) * n / config.communities);
  };
  std::vector<int> community_of(static_cast<std::size_t>(n));
  for (int c = 0; c < config.communities; ++c)
    for (int i = community_lo(c); i < community_lo(c + 1); ++i)
      community_of[static_cast<std::size_t>(i)] = c;

  std::vector<PendingEdge> pending;
  const auto draw_edge_features = [&] {
    std::vector<double> feats(static_cast<std::size_t>(d_e));
    for (double& f : feats) f = quantize(rng.normal());
    return feats;
  };
  const auto other_than = [&](int self, int lo, int hi) {
    // Uniform over [lo, hi) \ {self}; the validated config keeps hi - lo >= 2.
    int pick = static_cast<int>(rng.randint(lo, hi - 2));
    if (pick >= self) ++pick;
    return pick;
  };

  for (int i = 0; i < n; ++i) {
    const int c = community_of[static_cast<std::size_t>(i)];
    const int events = rng.poisson(config.activity_rate);
    for (int e = 0; e < events; ++e) {
      PendingEdge edge;
      edge.src = i;
      edge.dst = other_than(i, community_lo(c), community_lo(c + 1));
      edge.t = quantize(rng.uniform(0.0, config.horizon));
      edge.features = draw_edge_features();
      pending.push_back(std::move(edge));
    }
  }

  for (const int f : fraud_nodes) {
    const double onset = rng.uniform(0.0, config.horizon - config.burst_window);
    // Victims are distinct nodes other than the sender, uniform over all
    // communities; every burst edge lands on one of them, so the event log
    // holds burst_size events but the deduplicated static view only
    // burst_victims extra edges.
    std::vector<int> victims = rng.sample_without_replacement(n - 1, config.burst_victims);
    for (int& v : victims) v += v >= f ? 1 : 0;
    for (int e = 0; e < config.burst_size; ++e) {
      PendingEdge edge;
      edge.src = f;
      edge.dst = victims[static_cast<std::size_t>(rng.randint(0, config.burst_victims - 1))];
      edge.t = quantize(onset + rng.uniform(0.0, config.burst_window));
      edge.features = draw_edge_features();
      pending.push_back(std::move(edge));
    }
  }

  // Stable on timestamp so equal-t events keep generation order.
  std::stable_sort(pending.begin(), pending.end(),
                   [](const PendingEdge& a, const PendingEdge& b) { return a.t < b.t; });

  graph.edges.reserve(pending.size());
  for (PendingEdge& p : pending) {
    EdgeEvent ev;
    ev.src = p.src;
    ev.dst = p.dst;
    ev.t = p.t;
    ev.features = std::move(p.features);
    graph.edges.push_back(std::move(ev));
  }

  graph.labels.assign(static_cast<std::size_t>(n), 0);
  for (const int f : fraud_nodes) graph.labels[static_cast<std::size_t>(f)] = 1;

  // Stratified split: shuffle each class independently, then slice by the
  // configured fractions so class balance is preserved per split.
  graph.splits.assign(static_cast<std::size_t>(n), Split::train);
  const auto assign_splits = [&](std::vector<int> members) {
    rng.shuffle(members);
    const int total = static_cast<int>(members.size());
    int n_train = static_cast<int>(std::llround(config.train_frac * total));
    int n_valid = static_cast<int>(std::llround(config.valid_frac * total));
    n_train = std::min(n_train, total);
    n_valid = std::min(n_valid, total - n_train);
    for (int idx = 0; idx < total; ++idx) {
      const auto node = static_cast<std::size_t>(members[static_cast<std::size_t>(idx)]);
      graph.splits[node] = idx < n_train           ? Split::train
                           : idx < n_train + n_valid ? Split::valid
                                                     : Split::test;
    }
  };
  std::vector<int> normal_nodes;
  normal_nodes.reserve(static_cast<std::size_t>(n - num_fraud));
  for (int i = 0; i < n; ++i)
    if (!is_fraud[static_cast<std::size_t>(i)]) normal_nodes.push_back(i);
  assign_splits(fraud_nodes);
  assign_splits(std::move(normal_nodes));

  graph.validate();

  Dataset dataset;
  dataset.graph = std::move(graph);
  dataset.name = config.name;
  dataset.seed = seed;
  return dataset;
}

}  // namespace tempograd
