#pragma once

#include <cstdint>
#include <string>

#include "tempograd/temporal_graph.hpp"

namespace tempograd {

// Synthetic fraud graph. Nodes live in equally sized contiguous communities
// and exchange intra-community events at Poisson rate over [0, horizon).
// A random subset of nodes is labeled fraudulent; each of those additionally
// fires a burst of events inside a short window at a random onset, hammering
// a few victims drawn uniformly across communities. Node and edge features
// are standard normal for both classes, so the label signal lives only in
// event timing and structure; repeated burst edges collapse to single static
// edges, keeping the signal invisible to time-discarding models.
struct SynthConfig {
  int num_nodes = 2000;
  int communities = 10;
  double fraud_rate = 0.1;
  int node_dim = 16;
  int edge_dim = 4;
  double activity_rate = 1.5;   // expected background events per node
  int burst_size = 12;
  int burst_victims = 1;        // distinct targets each burst is spread over
  double burst_window = 4.0;
  double horizon = 1000.0;
  double train_frac = 0.7;
  double valid_frac = 0.15;
  std::string name = "synth";

  void validate() const;
};

// Every float the dataset carries is quantized through the on-disk text
// format, so save followed by load reproduces the dataset bit for bit.
Dataset generate_synth(const SynthConfig& config, std::uint64_t seed);

}  // namespace tempograd
