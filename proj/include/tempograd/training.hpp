#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tempograd/autodiff.hpp"
#include "tempograd/embedder.hpp"
#include "tempograd/rng.hpp"
#include "tempograd/temporal_graph.hpp"

namespace tempograd {

// Probabilities inside either loss are clamped to [kProbFloor, 1 - kProbFloor]
// so the log stays finite for arbitrarily confident predictions.
inline constexpr double kProbFloor = 1e-7;

// One metrics line; the pipeline serializes these as JSON-lines records.
struct TrainRecord {
  std::string phase;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> valid_auc;

  bool operator==(const TrainRecord&) const = default;
};

struct PretrainConfig {
  int epochs = 10;
  int batch_size = 200;
  double lr = 1e-4;
  int negatives = 1;  // negative pairs drawn per positive edge

  void validate() const;
};

struct DownstreamConfig {
  int epochs = 10;
  int batch_size = 100;
  double lr = 3e-4;
  std::vector<int> hidden_dims = {64};

  void validate() const;
};

// Uniform over [0, num_nodes).
int sample_negative(Rng& rng, int num_nodes);

// -[log p(z_u, z_i) + log(1 - p(z_u, z_k))] with p = clamped sigmoid of the
// dot product. Scalar autodiff expression over three equal-length vectors.
Var link_loss(const Var& z_u, const Var& z_i, const Var& z_k);

// Mean binary cross entropy of probabilities against 0/1 labels.
Var node_loss(const Var& probs, const std::vector<int>& labels);

// Optimizes the embedder in place on contrastive link prediction: events in
// chronological batches, each positive (u, i, t) paired with fresh uniform
// negatives, one Adam step per batch. Returns one record per epoch carrying
// the mean per-positive loss. Throws NumericError if a loss turns non-finite.
std::vector<TrainRecord> pretrain_link_prediction(TemporalEmbedder& embedder,
                                                  const PretrainConfig& config,
                                                  std::uint64_t seed);

// Half the smallest positive gap between consecutive log timestamps; 1.0 when
// the log has no two distinct timestamps.
double final_time_epsilon(const TemporalGraph& graph);

// Per-node query times for downstream classification: a node's last incident
// event time (global max for event-free nodes) plus final_time_epsilon, so the
// strict cutoff still sees the last event.
std::vector<double> final_query_times(const TemporalGraph& graph);

// Embeds every node at its final query time with gradients discarded.
Tensor final_time_embeddings(const TemporalEmbedder& embedder);

// Sigmoid-output MLP head mapping an embedding to a fraud probability.
class Decoder {
 public:
  Decoder(int in_dim, const std::vector<int>& hidden_dims, std::uint64_t seed);

  Var logits(const Var& x) const;         // B x in_dim -> {B}
  Var probabilities(const Var& x) const;  // clamped sigmoid of logits

  // Presets the output bias, typically to the log-odds of the class prior so
  // that training starts calibrated instead of spending steps on the base rate.
  void set_output_bias(double logit);

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;
  int in_dim() const { return in_dim_; }

 private:
  int in_dim_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

// Trains the decoder on frozen embeddings with mini-batch Adam over the train
// split only; valid and test nodes never contribute to the loss. Returns one
// record per epoch with the mean train loss and the valid-split AUC.
std::vector<TrainRecord> train_downstream(Decoder& decoder,
                                          const Tensor& embeddings,
                                          const TemporalGraph& graph,
                                          const DownstreamConfig& config,
                                          std::uint64_t seed);

// Fraud probability per node from frozen embeddings.
std::vector<double> decoder_scores(const Decoder& decoder, const Tensor& embeddings);

}  // namespace tempograd
