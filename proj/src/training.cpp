#include "tempograd/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tempograd/adam.hpp"
#include "tempograd/metrics.hpp"
#include "tempograd/tensor.hpp"

namespace tempograd {

namespace {

Var clamped_probability(const Var& raw) {
  return clamp(sigmoid(raw), kProbFloor, 1.0 - kProbFloor);
}

void ensure_finite(double loss, const char* phase, int epoch) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch));
}

}  // namespace

void PretrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("pretrain: lr must be > 0");
  if (negatives < 1) throw ConfigError("pretrain: negatives must be >= 1");
}

void DownstreamConfig::validate() const {
  if (epochs < 0) throw ConfigError("downstream: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("downstream: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("downstream: lr must be > 0");
  if (hidden_dims.empty()) throw ConfigError("downstream: hidden_dims must not be empty");
  for (const int h : hidden_dims)
    if (h < 1) throw ConfigError("downstream: hidden dims must be >= 1");
}

int sample_negative(Rng& rng, int num_nodes) {
  if (num_nodes < 1) throw ContractError("sample_negative: need at least one node");
  return static_cast<int>(rng.randint(0, num_nodes - 1));
}

Var link_loss(const Var& z_u, const Var& z_i, const Var& z_k) {
  const Var p_pos = clamped_probability(dot(z_u, z_i));
  const Var p_neg = clamped_probability(dot(z_u, z_k));
  const Var one = make_const(Tensor::scalar(1.0));
  return scale(add(log(p_pos), log(sub(one, p_neg))), -1.0);
}

Var node_loss(const Var& probs, const std::vector<int>& labels) {
  const Tensor& p = probs.value();
  if (p.ndim() != 1)
    throw ShapeError("node_loss: probabilities must be rank 1, got " + p.shape_str());
  const auto n = static_cast<std::size_t>(p.dim(0));
  if (labels.size() != n)
    throw ShapeError("node_loss: " + std::to_string(n) + " probabilities vs " +
                     std::to_string(labels.size()) + " labels");
  Tensor pos({static_cast<int>(n)});
  Tensor neg({static_cast<int>(n)});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("node_loss: label must be 0 or 1, got " + std::to_string(labels[i]));
    pos[i] = static_cast<double>(labels[i]);
    neg[i] = 1.0 - static_cast<double>(labels[i]);
  }
  const Var clamped = clamp(probs, kProbFloor, 1.0 - kProbFloor);
  const Var ones = make_const(Tensor::full({static_cast<int>(n)}, 1.0));
  const Var per_node = add(mul(make_const(std::move(pos)), log(clamped)),
                           mul(make_const(std::move(neg)), log(sub(ones, clamped))));
  return scale(mean_all(per_node), -1.0);
}

std::vector<TrainRecord> pretrain_link_prediction(TemporalEmbedder& embedder,
                                                  const PretrainConfig& config,
                                                  std::uint64_t seed) {
  config.validate();
  const TemporalGraph& graph = embedder.graph();
  std::vector<TrainRecord> records;
  if (config.epochs == 0) return records;

  AdamConfig adam_config;
  adam_config.lr = config.lr;
  Adam optimizer(embedder.parameters(), adam_config);
  Rng rng(seed);
  const auto batches = chronological_batches(graph.edges.size(), config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t positives = 0;
    for (const auto& [begin, end] : batches) {
      const auto b = static_cast<int>(end - begin);
      // One fused embedding call: B sources, B destinations, then the
      // negative groups, all queried at their event's timestamp.
      std::vector<std::pair<int, double>> queries;
      queries.reserve(static_cast<std::size_t>(b) * static_cast<std::size_t>(2 + config.negatives));
      for (std::size_t e = begin; e < end; ++e)
        queries.emplace_back(graph.edges[e].src, graph.edges[e].t);
      for (std::size_t e = begin; e < end; ++e)
        queries.emplace_back(graph.edges[e].dst, graph.edges[e].t);
      for (int g = 0; g < config.negatives; ++g)
        for (std::size_t e = begin; e < end; ++e)
          queries.emplace_back(sample_negative(rng, graph.num_nodes), graph.edges[e].t);

      const Var z = embedder.embed_batch(queries);
      const auto group_rows = [&](int group) {
        std::vector<int> idx(static_cast<std::size_t>(b));
        std::iota(idx.begin(), idx.end(), group * b);
        return idx;
      };
      const Var z_u = take_rows(z, group_rows(0));
      const Var z_i = take_rows(z, group_rows(1));
      const Var ones = make_const(Tensor::full({b}, 1.0));
      Var terms = log(clamped_probability(row_sums(mul(z_u, z_i))));
      for (int g = 0; g < config.negatives; ++g) {
        const Var z_k = take_rows(z, group_rows(2 + g));
        const Var p_neg = clamped_probability(row_sums(mul(z_u, z_k)));
        terms = add(terms, log(sub(ones, p_neg)));
      }
      const Var loss = scale(mean_all(terms), -1.0);
      const double loss_value = loss.value()[0];
      ensure_finite(loss_value, "pretrain", epoch);

      optimizer.zero_grad();
      backward(loss);
      optimizer.step();

      loss_sum += loss_value * b;
      positives += static_cast<std::size_t>(b);
    }
    TrainRecord record;
    record.phase = "pretrain";
    record.epoch = epoch;
    record.loss = positives > 0 ? loss_sum / static_cast<double>(positives) : 0.0;
    records.push_back(std::move(record));
  }
  return records;
}

double final_time_epsilon(const TemporalGraph& graph) {
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t e = 1; e < graph.edges.size(); ++e) {
    const double gap = graph.edges[e].t - graph.edges[e - 1].t;
    if (gap > 0.0) smallest = std::min(smallest, gap);
  }
  return std::isfinite(smallest) ? smallest / 2.0 : 1.0;
}

std::vector<double> final_query_times(const TemporalGraph& graph) {
  const double eps = final_time_epsilon(graph);
  const double global_last = graph.edges.empty() ? 0.0 : graph.edges.back().t;
  std::vector<double> last(static_cast<std::size_t>(graph.num_nodes),
                           -std::numeric_limits<double>::infinity());
  for (const EdgeEvent& ev : graph.edges) {
    auto& s = last[static_cast<std::size_t>(ev.src)];
    auto& d = last[static_cast<std::size_t>(ev.dst)];
    s = std::max(s, ev.t);
    d = std::max(d, ev.t);
  }
  std::vector<double> times(last.size());
  for (std::size_t i = 0; i < last.size(); ++i)
    times[i] = (std::isfinite(last[i]) ? last[i] : global_last) + eps;
  return times;
}

Tensor final_time_embeddings(const TemporalEmbedder& embedder) {
  const TemporalGraph& graph = embedder.graph();
  const auto times = final_query_times(graph);
  std::vector<std::pair<int, double>> queries;
  queries.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    queries.emplace_back(static_cast<int>(i), times[i]);
  return embedder.embed_batch(queries).value();
}

Decoder::Decoder(int in_dim, const std::vector<int>& hidden_dims, std::uint64_t seed)
    : in_dim_(in_dim) {
  if (in_dim < 1) throw ConfigError("decoder: input dim must be >= 1");
  for (const int h : hidden_dims)
    if (h < 1) throw ConfigError("decoder: hidden dims must be >= 1");
  Rng rng(seed);
  int prev = in_dim;
  for (const int h : hidden_dims) {
    weights_.push_back(make_param(glorot_uniform(h, prev, rng)));
    biases_.push_back(make_param(Tensor::zeros({h})));
    prev = h;
  }
  // The output layer starts near zero so the few low-rate Adam steps of the
  // default schedule set its direction instead of unwinding a random one.
  // Adam's per-coordinate normalization makes the scale itself immaterial.
  Tensor head = glorot_uniform(1, prev, rng);
  for (std::size_t i = 0; i < head.size(); ++i) head[i] *= 0.05;
  weights_.push_back(make_param(head));
  biases_.push_back(make_param(Tensor::zeros({1})));
}

void Decoder::set_output_bias(double logit) {
  biases_.back().mutable_value()[0] = logit;
}

Var Decoder::logits(const Var& x) const {
  const Tensor& v = x.value();
  if (v.ndim() != 2 || v.cols() != in_dim_)
    throw ShapeError("decoder: expected rows of width " + std::to_string(in_dim_) + ", got " +
                     v.shape_str());
  Var h = x;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l)
    h = relu(add_bias(linear(h, weights_[l]), biases_[l]));
  return flatten(add_bias(linear(h, weights_.back()), biases_.back()));
}

Var Decoder::probabilities(const Var& x) const { return clamped_probability(logits(x)); }

std::vector<std::pair<std::string, Var>> Decoder::named_parameters() const {
  std::vector<std::pair<std::string, Var>> named;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    named.emplace_back("decoder.layer" + std::to_string(l) + ".weight", weights_[l]);
    named.emplace_back("decoder.layer" + std::to_string(l) + ".bias", biases_[l]);
  }
  return named;
}

std::vector<Var> Decoder::parameters() const {
  std::vector<Var> params;
  for (const auto& [name, var] : named_parameters()) params.push_back(var);
  return params;
}

std::vector<TrainRecord> train_downstream(Decoder& decoder,
                                          const Tensor& embeddings,
                                          const TemporalGraph& graph,
                                          const DownstreamConfig& config,
                                          std::uint64_t seed) {
  config.validate();
  if (embeddings.ndim() != 2 || embeddings.rows() != graph.num_nodes ||
      embeddings.cols() != decoder.in_dim())
    throw ShapeError("downstream: embeddings " + embeddings.shape_str() + " do not match " +
                     std::to_string(graph.num_nodes) + " nodes of width " +
                     std::to_string(decoder.in_dim()));

  std::vector<int> train_nodes;
  std::vector<int> valid_nodes;
  for (int i = 0; i < graph.num_nodes; ++i) {
    const int label = graph.labels[static_cast<std::size_t>(i)];
    if (label == -1) continue;
    const Split split = graph.splits[static_cast<std::size_t>(i)];
    if (split == Split::train) train_nodes.push_back(i);
    if (split == Split::valid) valid_nodes.push_back(i);
  }
  if (train_nodes.empty()) throw ContractError("downstream: no labeled train nodes");

  std::vector<TrainRecord> records;
  if (config.epochs == 0) return records;

  double positives = 0.0;
  for (const int i : train_nodes)
    if (graph.labels[static_cast<std::size_t>(i)] == 1) positives += 1.0;
  const double prior = std::clamp(positives / static_cast<double>(train_nodes.size()),
                                  kProbFloor, 1.0 - kProbFloor);
  decoder.set_output_bias(std::log(prior / (1.0 - prior)));

  AdamConfig adam_config;
  adam_config.lr = config.lr;
  Adam optimizer(decoder.parameters(), adam_config);
  Rng rng(seed);
  const Var all_rows = make_const(embeddings);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(train_nodes);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& [begin, end] : chronological_batches(train_nodes.size(), config.batch_size)) {
      std::vector<int> batch(train_nodes.begin() + static_cast<std::ptrdiff_t>(begin),
                             train_nodes.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (const int node : batch) labels.push_back(graph.labels[static_cast<std::size_t>(node)]);

      const Var probs = decoder.probabilities(take_rows(all_rows, std::move(batch)));
      const Var loss = node_loss(probs, labels);
      const double loss_value = loss.value()[0];
      ensure_finite(loss_value, "downstream", epoch);

      optimizer.zero_grad();
      backward(loss);
      optimizer.step();

      loss_sum += loss_value * static_cast<double>(labels.size());
      seen += labels.size();
    }

    TrainRecord record;
    record.phase = "downstream";
    record.epoch = epoch;
    record.loss = loss_sum / static_cast<double>(seen);
    if (!valid_nodes.empty()) {
      const Var probs = decoder.probabilities(take_rows(all_rows, valid_nodes));
      std::vector<int> labels;
      labels.reserve(valid_nodes.size());
      for (const int node : valid_nodes)
        labels.push_back(graph.labels[static_cast<std::size_t>(node)]);
      const Tensor& pv = probs.value();
      // A valid split holding a single class has no defined AUC; the record
      // then simply carries no value.
      try {
        record.valid_auc = auc(std::vector<double>(pv.data(), pv.data() + pv.size()), labels);
      } catch (const MetricError&) {
        record.valid_auc = std::nullopt;
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<double> decoder_scores(const Decoder& decoder, const Tensor& embeddings) {
  const Var probs = decoder.probabilities(make_const(embeddings));
  const Tensor& pv = probs.value();
  return std::vector<double>(pv.data(), pv.data() + pv.size());
}

}  // namespace tempograd
