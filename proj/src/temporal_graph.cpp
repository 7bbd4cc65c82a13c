#include "tempograd/temporal_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tempograd {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  if (s == "bg") return Split::bg;
  throw ParseError("unknown split '" + s + "'");
}

const char* split_to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::bg: return "bg";
  }
  throw ContractError("invalid split value");
}

NeighborMode neighbor_mode_from_string(const std::string& s) {
  if (s == "undirected") return NeighborMode::undirected;
  if (s == "directed-out") return NeighborMode::directed_out;
  if (s == "directed-in") return NeighborMode::directed_in;
  throw ConfigError("unknown neighbor mode '" + s + "'");
}

const char* neighbor_mode_to_string(NeighborMode m) {
  switch (m) {
    case NeighborMode::undirected: return "undirected";
    case NeighborMode::directed_out: return "directed-out";
    case NeighborMode::directed_in: return "directed-in";
  }
  throw ContractError("invalid neighbor mode value");
}

Cutoff cutoff_from_string(const std::string& s) {
  if (s == "strict-before") return Cutoff::strict_before;
  if (s == "at-or-before") return Cutoff::at_or_before;
  throw ConfigError("unknown cutoff '" + s + "'");
}

const char* cutoff_to_string(Cutoff c) {
  switch (c) {
    case Cutoff::strict_before: return "strict-before";
    case Cutoff::at_or_before: return "at-or-before";
  }
  throw ContractError("invalid cutoff value");
}

void TemporalGraph::validate() const {
  if (num_nodes < 0 || node_dim < 0 || edge_dim < 0)
    throw ContractError("graph dimensions must be non-negative");
  const auto n = static_cast<std::size_t>(num_nodes);
  if (node_features.size() != n * static_cast<std::size_t>(node_dim))
    throw ContractError("node feature table size does not match num_nodes * node_dim");
  if (labels.size() != n || splits.size() != n)
    throw ContractError("labels and splits must have one entry per node");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < -1 || labels[i] > 1)
      throw ContractError("node " + std::to_string(i) + ": label must be -1, 0 or 1");
    if ((labels[i] == -1) != (splits[i] == Split::bg))
      throw ContractError("node " + std::to_string(i) +
                          ": label -1 and split bg must appear together");
  }
  double prev_t = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const EdgeEvent& ev = edges[e];
    if (ev.src < 0 || ev.src >= num_nodes || ev.dst < 0 || ev.dst >= num_nodes)
      throw ContractError("edge " + std::to_string(e) + ": endpoint out of range");
    if (!std::isfinite(ev.t))
      throw ContractError("edge " + std::to_string(e) + ": timestamp must be finite");
    if (ev.t < prev_t)
      throw ContractError("edge " + std::to_string(e) + ": log must be sorted by timestamp");
    if (ev.features.size() != static_cast<std::size_t>(edge_dim))
      throw ContractError("edge " + std::to_string(e) + ": feature width must equal edge_dim");
    prev_t = ev.t;
  }
}

NeighborIndex::NeighborIndex(const TemporalGraph& graph, NeighborMode mode, Cutoff cutoff)
    : mode_(mode), cutoff_(cutoff) {
  graph.validate();
  lists_.resize(static_cast<std::size_t>(graph.num_nodes));
  // The log is time-sorted, so appending keeps each list ascending in
  // (t, edge_index) without a sort.
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const EdgeEvent& ev = graph.edges[e];
    const int idx = static_cast<int>(e);
    const bool see_out = mode != NeighborMode::directed_in;
    const bool see_in = mode != NeighborMode::directed_out;
    if (see_out) lists_[static_cast<std::size_t>(ev.src)].push_back({ev.dst, idx, ev.t});
    // A self-loop already covered by the out push must not appear twice.
    if (see_in && !(see_out && ev.dst == ev.src))
      lists_[static_cast<std::size_t>(ev.dst)].push_back({ev.src, idx, ev.t});
  }
}

std::vector<NeighborEntry> NeighborIndex::recent(int node, double t, int k) const {
  if (node < 0 || node >= num_nodes())
    throw ContractError("recent: node " + std::to_string(node) + " out of range");
  if (k < 0) throw ContractError("recent: k must be non-negative");
  const auto& list = lists_[static_cast<std::size_t>(node)];
  // Everything before this position passes the cutoff: the first entry at or
  // after t when strict, the first entry strictly after t otherwise.
  const auto end =
      cutoff_ == Cutoff::strict_before
          ? std::lower_bound(list.begin(), list.end(), t,
                             [](const NeighborEntry& e, double q) { return e.t < q; })
          : std::upper_bound(list.begin(), list.end(), t,
                             [](double q, const NeighborEntry& e) { return q < e.t; });
  const auto count = std::min<std::ptrdiff_t>(k, end - list.begin());
  std::vector<NeighborEntry> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::ptrdiff_t i = 0; i < count; ++i) out.push_back(*(end - 1 - i));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> chronological_batches(std::size_t count,
                                                                       int batch_size) {
  if (batch_size < 1) throw ContractError("chronological_batches: batch size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < count; begin += step)
    out.emplace_back(begin, std::min(begin + step, count));
  return out;
}

}  // namespace tempograd
