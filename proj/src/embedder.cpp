#include "tempograd/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tempograd/rng.hpp"

namespace tempograd {

EmbedKind embed_kind_from_string(const std::string& s) {
  if (s == "sum") return EmbedKind::sum;
  if (s == "mean") return EmbedKind::mean;
  if (s == "conv") return EmbedKind::conv;
  if (s == "attn") return EmbedKind::attn;
  throw ConfigError("unknown embedding kind '" + s + "'");
}

const char* embed_kind_to_string(EmbedKind k) {
  switch (k) {
    case EmbedKind::sum: return "sum";
    case EmbedKind::mean: return "mean";
    case EmbedKind::conv: return "conv";
    case EmbedKind::attn: return "attn";
  }
  throw ContractError("invalid embedding kind value");
}

void EmbedConfig::validate() const {
  if (layers < 1) throw ConfigError("embed config: layers must be at least 1");
  if (time_dim < 1) throw ConfigError("embed config: time_dim must be at least 1");
  if (hidden_dim < 1) throw ConfigError("embed config: hidden_dim must be at least 1");
  if (num_neighbors < 0) throw ConfigError("embed config: num_neighbors must be non-negative");
  if (kind == EmbedKind::attn) {
    if (heads < 1) throw ConfigError("embed config: heads must be at least 1");
    if (hidden_dim % heads != 0)
      throw ConfigError("embed config: hidden_dim must be divisible by heads");
  }
}

Tensor initial_time_frequencies(int time_dim) {
  if (time_dim < 1) throw ConfigError("time_dim must be at least 1");
  Tensor f({time_dim});
  if (time_dim == 1) {
    f[0] = 1.0;
    return f;
  }
  for (int k = 0; k < time_dim; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(time_dim - 1);
    f[static_cast<std::size_t>(k)] = std::pow(10.0, -4.0 * frac);
  }
  return f;
}

TemporalEmbedder::TemporalEmbedder(const TemporalGraph& graph, EmbedConfig config,
                                   std::uint64_t seed)
    : graph_(&graph), config_(config), index_(graph, config.mode, config.cutoff) {
  config_.validate();
  Rng rng(seed);
  freq_ = make_param(initial_time_frequencies(config_.time_dim));
  phase_ = make_param(Tensor({config_.time_dim}));

  const int dh = config_.hidden_dim;
  for (int l = 0; l < config_.layers; ++l) {
    const int d_prev = l == 0 ? graph.node_dim : dh;
    const int msg_in = d_prev + graph.edge_dim + config_.time_dim;
    EmbedLayerParams lp;
    switch (config_.kind) {
      case EmbedKind::sum:
      case EmbedKind::mean:
        lp.neighbor_proj = make_param(glorot_uniform(dh, msg_in, rng));
        lp.combine = make_param(glorot_uniform(dh, d_prev + dh, rng));
        break;
      case EmbedKind::conv:
        lp.neighbor_proj = make_param(glorot_uniform(dh, msg_in, rng));
        lp.post_agg = make_param(glorot_uniform(dh, dh, rng));
        lp.combine = make_param(glorot_uniform(dh, d_prev + dh, rng));
        break;
      case EmbedKind::attn: {
        const int d_k = dh / config_.heads;
        for (int h = 0; h < config_.heads; ++h) {
          AttentionHead head;
          // Small query projections keep attention near uniform at init, so
          // the softmax does not amplify per-node noise before training has
          // shaped the score landscape.
          Tensor query = glorot_uniform(d_k, d_prev + config_.time_dim, rng);
          for (std::size_t i = 0; i < query.size(); ++i) query[i] *= 0.1;
          head.query_proj = make_param(query);
          head.key_proj = make_param(glorot_uniform(d_k, msg_in, rng));
          head.value_proj = make_param(glorot_uniform(d_k, msg_in, rng));
          lp.heads.push_back(std::move(head));
        }
        lp.out_proj = make_param(glorot_uniform(dh, dh, rng));
        lp.combine_hidden_w = make_param(glorot_uniform(dh, d_prev + dh, rng));
        lp.combine_hidden_b = make_param(Tensor({dh}));
        lp.combine_out_w = make_param(glorot_uniform(dh, dh, rng));
        lp.combine_out_b = make_param(Tensor({dh}));
        break;
      }
    }
    layers_.push_back(std::move(lp));
  }
}

std::vector<std::pair<std::string, Var>> TemporalEmbedder::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  out.emplace_back("time.freq", freq_);
  out.emplace_back("time.phase", phase_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const EmbedLayerParams& lp = layers_[l];
    switch (config_.kind) {
      case EmbedKind::sum:
      case EmbedKind::mean:
        out.emplace_back(prefix + "neighbor_proj", lp.neighbor_proj);
        out.emplace_back(prefix + "combine", lp.combine);
        break;
      case EmbedKind::conv:
        out.emplace_back(prefix + "neighbor_proj", lp.neighbor_proj);
        out.emplace_back(prefix + "post_agg", lp.post_agg);
        out.emplace_back(prefix + "combine", lp.combine);
        break;
      case EmbedKind::attn:
        for (std::size_t h = 0; h < lp.heads.size(); ++h) {
          const std::string hp = prefix + "head" + std::to_string(h) + ".";
          out.emplace_back(hp + "query_proj", lp.heads[h].query_proj);
          out.emplace_back(hp + "key_proj", lp.heads[h].key_proj);
          out.emplace_back(hp + "value_proj", lp.heads[h].value_proj);
        }
        out.emplace_back(prefix + "out_proj", lp.out_proj);
        out.emplace_back(prefix + "combine_hidden_w", lp.combine_hidden_w);
        out.emplace_back(prefix + "combine_hidden_b", lp.combine_hidden_b);
        out.emplace_back(prefix + "combine_out_w", lp.combine_out_w);
        out.emplace_back(prefix + "combine_out_b", lp.combine_out_b);
        break;
    }
  }
  return out;
}

std::vector<Var> TemporalEmbedder::parameters() const {
  std::vector<Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

std::vector<NeighborEntry> TemporalEmbedder::canonical_neighbors(int node, double t) const {
  auto nb = index_.recent(node, t, config_.num_neighbors);
  // Retrieval order is recency with log-position tie-breaks; summation order
  // must not depend on how equal-time events happen to be logged, so re-sort
  // into a canonical order before aggregating.
  std::sort(nb.begin(), nb.end(), [this](const NeighborEntry& a, const NeighborEntry& b) {
    if (a.t != b.t) return a.t > b.t;
    if (a.neighbor != b.neighbor) return a.neighbor < b.neighbor;
    const auto& fa = graph_->edges[static_cast<std::size_t>(a.edge_index)].features;
    const auto& fb = graph_->edges[static_cast<std::size_t>(b.edge_index)].features;
    if (fa != fb) return fa < fb;
    return a.edge_index < b.edge_index;
  });
  return nb;
}

struct TemporalEmbedder::Memo {
  std::map<std::pair<int, int>, Var> cache;
};

Var TemporalEmbedder::embed(int node, double t) const {
  if (node < 0 || node >= graph_->num_nodes)
    throw ContractError("embed: node " + std::to_string(node) + " out of range");
  if (!std::isfinite(t)) throw ContractError("embed: query time must be finite");
  Memo memo;
  return embed_recursive(node, config_.layers, t, memo);
}

Var TemporalEmbedder::embed_recursive(int node, int layer, double t, Memo& memo) const {
  if (layer == 0) {
    Tensor feat({graph_->node_dim});
    const double* row = graph_->node_row(node);
    for (int j = 0; j < graph_->node_dim; ++j) feat[static_cast<std::size_t>(j)] = row[j];
    return make_const(std::move(feat));
  }
  const auto key = std::make_pair(node, layer);
  if (auto it = memo.cache.find(key); it != memo.cache.end()) return it->second;

  const EmbedLayerParams& lp = layers_[static_cast<std::size_t>(layer - 1)];
  Var h_prev = embed_recursive(node, layer - 1, t, memo);

  const auto nbrs = canonical_neighbors(node, t);
  std::vector<Var> neighbor_states;
  neighbor_states.reserve(nbrs.size());
  Tensor edge_block({static_cast<int>(nbrs.size()), graph_->edge_dim});
  std::vector<double> dts;
  dts.reserve(nbrs.size());
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    neighbor_states.push_back(embed_recursive(nbrs[i].neighbor, layer - 1, t, memo));
    const auto& feats = graph_->edges[static_cast<std::size_t>(nbrs[i].edge_index)].features;
    for (int j = 0; j < graph_->edge_dim; ++j)
      edge_block.at(static_cast<int>(i), j) = feats[static_cast<std::size_t>(j)];
    dts.push_back(t - nbrs[i].t);
  }

  Var h = aggregate_single(lp, h_prev, neighbor_states, edge_block, dts);
  memo.cache.emplace(key, h);
  return h;
}

Var TemporalEmbedder::aggregate_single(const EmbedLayerParams& lp, const Var& h_prev,
                                       const std::vector<Var>& neighbor_states,
                                       const Tensor& edge_feat_block,
                                       const std::vector<double>& dts) const {
  const int dh = config_.hidden_dim;
  Var h_tilde;
  if (neighbor_states.empty()) {
    h_tilde = make_const(Tensor({dh}));
  } else {
    const int n = static_cast<int>(neighbor_states.size());
    Var rows = concat_cols(concat_cols(stack_rows(neighbor_states), make_const(edge_feat_block)),
                           time_encode(freq_, phase_, dts));
    switch (config_.kind) {
      case EmbedKind::sum:
        h_tilde = relu(sum_rows(linear(rows, lp.neighbor_proj)));
        break;
      case EmbedKind::mean:
        h_tilde = relu(scale(sum_rows(linear(rows, lp.neighbor_proj)),
                             1.0 / static_cast<double>(n)));
        break;
      case EmbedKind::conv:
        h_tilde = relu(matvec(lp.post_agg, sum_rows(linear(rows, lp.neighbor_proj))));
        break;
      case EmbedKind::attn: {
        const int d_k = dh / config_.heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));
        const Var q_in =
            concat_cols(h_prev, flatten(time_encode(freq_, phase_, {0.0})));
        Var ctx;
        for (const AttentionHead& head : lp.heads) {
          const Var qh = matvec(head.query_proj, q_in);
          const Var keys = linear(rows, head.key_proj);
          const Var values = linear(rows, head.value_proj);
          const Var alpha = softmax(scale(matvec(keys, qh), inv_sqrt));
          const Var head_out = vecmat(alpha, values);
          ctx = ctx.defined() ? concat_cols(ctx, head_out) : head_out;
        }
        h_tilde = matvec(lp.out_proj, ctx);
        break;
      }
    }
  }

  const Var cat = concat_cols(h_prev, h_tilde);
  if (config_.kind == EmbedKind::attn) {
    const Var hidden = relu(add(matvec(lp.combine_hidden_w, cat), lp.combine_hidden_b));
    return add(matvec(lp.combine_out_w, hidden), lp.combine_out_b);
  }
  return matvec(lp.combine, cat);
}

Var TemporalEmbedder::embed_batch(const std::vector<std::pair<int, double>>& queries) const {
  if (queries.empty()) throw ContractError("embed_batch: empty query list");
  if (config_.layers == 1) return batch_layer_one(queries);
  std::vector<Var> rows;
  rows.reserve(queries.size());
  for (const auto& [node, t] : queries) rows.push_back(embed(node, t));
  return stack_rows(rows);
}

// Single fused forward over all queries of a batch. Neighbor rows of every
// query are packed into one matrix; per-query reductions become segment ops.
// Element for element this performs the same arithmetic, in the same order,
// as the per-node path, so the two agree bitwise at one layer.
Var TemporalEmbedder::batch_layer_one(const std::vector<std::pair<int, double>>& queries) const {
  const int dv = graph_->node_dim;
  const int de = graph_->edge_dim;
  const int dh = config_.hidden_dim;
  const int b = static_cast<int>(queries.size());

  Tensor h_prev_block({b, dv});
  std::vector<double> packed;
  std::vector<double> dts;
  std::vector<int> offsets{0};
  for (int qi = 0; qi < b; ++qi) {
    const auto& [node, t] = queries[static_cast<std::size_t>(qi)];
    if (node < 0 || node >= graph_->num_nodes)
      throw ContractError("embed_batch: node " + std::to_string(node) + " out of range");
    if (!std::isfinite(t)) throw ContractError("embed_batch: query time must be finite");
    const double* row = graph_->node_row(node);
    for (int j = 0; j < dv; ++j) h_prev_block.at(qi, j) = row[j];
    for (const NeighborEntry& e : canonical_neighbors(node, t)) {
      const double* nrow = graph_->node_row(e.neighbor);
      for (int j = 0; j < dv; ++j) packed.push_back(nrow[j]);
      const auto& feats = graph_->edges[static_cast<std::size_t>(e.edge_index)].features;
      for (int j = 0; j < de; ++j) packed.push_back(feats[static_cast<std::size_t>(j)]);
      dts.push_back(t - e.t);
    }
    offsets.push_back(static_cast<int>(dts.size()));
  }
  const int n_tot = static_cast<int>(dts.size());

  const Var h_prev = make_const(std::move(h_prev_block));
  const Var rows = concat_cols(make_const(Tensor({n_tot, dv + de}, std::move(packed))),
                               time_encode(freq_, phase_, dts));

  const EmbedLayerParams& lp = layers_.front();
  Var agg;
  switch (config_.kind) {
    case EmbedKind::sum:
      agg = relu(segment_sum(linear(rows, lp.neighbor_proj), offsets));
      break;
    case EmbedKind::mean:
      agg = relu(segment_mean(linear(rows, lp.neighbor_proj), offsets));
      break;
    case EmbedKind::conv:
      agg = relu(linear(segment_sum(linear(rows, lp.neighbor_proj), offsets), lp.post_agg));
      break;
    case EmbedKind::attn: {
      const int d_k = dh / config_.heads;
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));
      const Var q_in =
          concat_cols(h_prev, time_encode(freq_, phase_, std::vector<double>(queries.size(), 0.0)));
      Var ctx;
      for (const AttentionHead& head : lp.heads) {
        const Var qh = linear(q_in, head.query_proj);
        const Var keys = linear(rows, head.key_proj);
        const Var values = linear(rows, head.value_proj);
        const Var alpha =
            segment_softmax(scale(segment_rowdot(keys, qh, offsets), inv_sqrt), offsets);
        const Var head_out = segment_weighted_rows(values, alpha, offsets);
        ctx = ctx.defined() ? concat_cols(ctx, head_out) : head_out;
      }
      agg = linear(ctx, lp.out_proj);
      break;
    }
  }

  const Var cat = concat_cols(h_prev, agg);
  if (config_.kind == EmbedKind::attn) {
    const Var hidden = relu(add_bias(linear(cat, lp.combine_hidden_w), lp.combine_hidden_b));
    return add_bias(linear(hidden, lp.combine_out_w), lp.combine_out_b);
  }
  return linear(cat, lp.combine);
}

}  // namespace tempograd
