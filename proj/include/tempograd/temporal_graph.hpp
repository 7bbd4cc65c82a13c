#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tempograd/errors.hpp"

namespace tempograd {

enum class Split { train, valid, test, bg };

Split split_from_string(const std::string& s);
const char* split_to_string(Split s);

struct EdgeEvent {
  int src = 0;
  int dst = 0;
  double t = 0.0;
  std::vector<double> features;

  bool operator==(const EdgeEvent&) const = default;
};

// A continuous-time dynamic graph: a fixed node table plus a timestamp-sorted
// edge event log. Node ids are dense in [0, num_nodes). Label -1 marks an
// unlabeled node, which must sit in the bg split.
struct TemporalGraph {
  int num_nodes = 0;
  int node_dim = 0;
  int edge_dim = 0;
  std::vector<double> node_features;  // num_nodes * node_dim, row-major
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<EdgeEvent> edges;       // non-decreasing in t

  const double* node_row(int i) const {
    return node_features.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(node_dim);
  }

  void validate() const;

  bool operator==(const TemporalGraph&) const = default;
};

struct Dataset {
  TemporalGraph graph;
  std::string name;
  std::uint64_t seed = 0;

  bool operator==(const Dataset&) const = default;
};

enum class NeighborMode { undirected, directed_out, directed_in };

NeighborMode neighbor_mode_from_string(const std::string& s);
const char* neighbor_mode_to_string(NeighborMode m);

struct NeighborEntry {
  int neighbor = 0;
  int edge_index = 0;  // position in the edge log
  double t = 0.0;

  bool operator==(const NeighborEntry&) const = default;
};

// Whether retrieval sees events at exactly the query time. at_or_before leaks
// concurrent events and therefore breaks causality; it is a supported switch
// precisely so the causality checks can demonstrate they would catch such a
// bug.
enum class Cutoff { strict_before, at_or_before };

Cutoff cutoff_from_string(const std::string& s);
const char* cutoff_to_string(Cutoff c);

// Per-node adjacency sorted by time, answering "the k most recent events
// before t" in O(log M + k). Under the default strict cutoff, events at
// exactly t are never returned; equal-time events rank later log positions as
// more recent.
class NeighborIndex {
 public:
  NeighborIndex(const TemporalGraph& graph, NeighborMode mode,
                Cutoff cutoff = Cutoff::strict_before);

  std::vector<NeighborEntry> recent(int node, double t, int k) const;
  NeighborMode mode() const { return mode_; }
  Cutoff cutoff() const { return cutoff_; }
  int num_nodes() const { return static_cast<int>(lists_.size()); }

 private:
  NeighborMode mode_;
  Cutoff cutoff_ = Cutoff::strict_before;
  std::vector<std::vector<NeighborEntry>> lists_;  // ascending (t, edge_index)
};

// Splits [0, count) into consecutive [begin, end) ranges of batch_size items
// each, the last one possibly shorter. Order is preserved, so batches taken
// over a sorted edge log stay chronological.
std::vector<std::pair<std::size_t, std::size_t>> chronological_batches(std::size_t count,
                                                                       int batch_size);

}  // namespace tempograd
