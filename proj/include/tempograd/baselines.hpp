#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tempograd/autodiff.hpp"
#include "tempograd/temporal_graph.hpp"
#include "tempograd/training.hpp"

namespace tempograd {

enum class BaselineKind { mlp, gcn, sage };

BaselineKind baseline_kind_from_string(const std::string& s);
const char* baseline_kind_to_string(BaselineKind k);

// Time-collapsed view of the event log: timestamps and directions dropped,
// multi-edges deduplicated, self-loop events discarded (the normalized
// adjacency re-adds an explicit self-loop per node).
struct StaticGraph {
  int num_nodes = 0;
  int feature_dim = 0;
  Tensor features;  // num_nodes x feature_dim

  // D^-1/2 (A + I) D^-1/2; symmetric, so it serves as its own transpose.
  std::shared_ptr<const Csr> norm_adj;
  // Row-normalized A without self-loops; rows of isolated nodes are empty.
  std::shared_ptr<const Csr> neighbor_mean;
  std::shared_ptr<const Csr> neighbor_mean_t;
};

StaticGraph collapse(const TemporalGraph& graph);

// Two-layer graph convolution head producing one fraud logit per node:
// gcn stacks normalized-adjacency mixing, sage concatenates each node's state
// with its neighbor mean before the linear map. Full-graph forward only.
class GraphModel {
 public:
  GraphModel(BaselineKind kind, int feature_dim, int hidden_dim, std::uint64_t seed);

  Var logits(const StaticGraph& graph) const;  // num_nodes x 1
  BaselineKind kind() const { return kind_; }

  // Presets the logit bias, typically to the log-odds of the class prior so
  // that training starts calibrated instead of spending steps on the base rate.
  void set_output_bias(double logit);

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;

 private:
  BaselineKind kind_;
  int feature_dim_;
  Var w1_;
  Var b1_;
  Var w2_;
  Var b2_;
};

std::vector<double> graph_model_scores(const GraphModel& model, const StaticGraph& graph);

struct BaselineReport {
  std::vector<TrainRecord> records;
  std::vector<double> scores;  // fraud probability per node
};

// Trains one static baseline against the labels and splits of the original
// bundle: the feature-only MLP mirrors the downstream decoder loop, gcn and
// sage take one full-batch Adam step per epoch.
BaselineReport train_baseline(BaselineKind kind,
                              const StaticGraph& static_graph,
                              const TemporalGraph& graph,
                              const DownstreamConfig& config,
                              std::uint64_t seed);

}  // namespace tempograd
