#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tempograd/autodiff.hpp"
#include "tempograd/temporal_graph.hpp"

namespace tempograd {

enum class EmbedKind { sum, mean, conv, attn };

EmbedKind embed_kind_from_string(const std::string& s);
const char* embed_kind_to_string(EmbedKind k);

struct EmbedConfig {
  EmbedKind kind = EmbedKind::attn;
  int layers = 1;
  int heads = 2;
  int time_dim = 32;
  int hidden_dim = 128;
  int num_neighbors = 10;
  NeighborMode mode = NeighborMode::undirected;
  Cutoff cutoff = Cutoff::strict_before;

  void validate() const;
};

// Frequencies are log-spaced from 1 down to 1e-4 so the cosine bank spans
// several time scales; phases start at zero.
Tensor initial_time_frequencies(int time_dim);

struct AttentionHead {
  Var query_proj;
  Var key_proj;
  Var value_proj;
};

struct EmbedLayerParams {
  // sum / mean / conv
  Var neighbor_proj;  // d_h x (d_prev + d_e + d_t)
  Var post_agg;       // conv only, d_h x d_h
  Var combine;        // d_h x (d_prev + d_h)
  // attn
  std::vector<AttentionHead> heads;
  Var out_proj;          // d_h x d_h
  Var combine_hidden_w;  // d_h x (d_prev + d_h)
  Var combine_hidden_b;  // {d_h}
  Var combine_out_w;     // d_h x d_h
  Var combine_out_b;     // {d_h}
};

// Temporal graph encoder. An embedding of node i at time t aggregates the
// K most recent prior events of i, each message carrying the neighbor state,
// the edge features and a learned encoding of the time gap.
//
// Two forward paths produce bit-identical values for single-layer stacks:
// embed() recurses per node, embed_batch() fuses all queries of a batch into
// segment ops over one packed matrix. Training uses the batched path; the
// per-node path serves spot queries and deeper stacks.
class TemporalEmbedder {
 public:
  TemporalEmbedder(const TemporalGraph& graph, EmbedConfig config, std::uint64_t seed);

  const EmbedConfig& config() const { return config_; }
  const TemporalGraph& graph() const { return *graph_; }
  const NeighborIndex& index() const { return index_; }

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;

  Var embed(int node, double t) const;  // {hidden_dim}
  Var embed_batch(const std::vector<std::pair<int, double>>& queries) const;  // B x hidden_dim

 private:
  struct Memo;

  Var embed_recursive(int node, int layer, double t, Memo& memo) const;
  Var aggregate_single(const EmbedLayerParams& lp, const Var& h_prev,
                       const std::vector<Var>& neighbor_states,
                       const Tensor& edge_feat_block,
                       const std::vector<double>& dts) const;
  Var batch_layer_one(const std::vector<std::pair<int, double>>& queries) const;
  std::vector<NeighborEntry> canonical_neighbors(int node, double t) const;

  const TemporalGraph* graph_;
  EmbedConfig config_;
  NeighborIndex index_;
  Var freq_;
  Var phase_;
  std::vector<EmbedLayerParams> layers_;
};

}  // namespace tempograd
