#include "tempograd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tempograd/adam.hpp"
#include "tempograd/metrics.hpp"
#include "tempograd/tensor.hpp"

namespace tempograd {

namespace {

Csr transpose(const Csr& a) {
  Csr t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.row_ptr.assign(static_cast<std::size_t>(t.rows) + 1, 0);
  for (const int c : a.col_idx) ++t.row_ptr[static_cast<std::size_t>(c) + 1];
  for (std::size_t r = 1; r < t.row_ptr.size(); ++r) t.row_ptr[r] += t.row_ptr[r - 1];
  t.col_idx.resize(a.nnz());
  t.values.resize(a.nnz());
  std::vector<int> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (int r = 0; r < a.rows; ++r) {
    for (int k = a.row_ptr[static_cast<std::size_t>(r)];
         k < a.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      const int c = a.col_idx[static_cast<std::size_t>(k)];
      const auto pos = static_cast<std::size_t>(cursor[static_cast<std::size_t>(c)]++);
      t.col_idx[pos] = r;
      t.values[pos] = a.values[static_cast<std::size_t>(k)];
    }
  }
  t.check();
  return t;
}

std::vector<int> labeled_nodes_in(const TemporalGraph& graph, Split split) {
  std::vector<int> nodes;
  for (int i = 0; i < graph.num_nodes; ++i)
    if (graph.labels[static_cast<std::size_t>(i)] != -1 &&
        graph.splits[static_cast<std::size_t>(i)] == split)
      nodes.push_back(i);
  return nodes;
}

std::vector<int> labels_of(const TemporalGraph& graph, const std::vector<int>& nodes) {
  std::vector<int> labels;
  labels.reserve(nodes.size());
  for (const int node : nodes) labels.push_back(graph.labels[static_cast<std::size_t>(node)]);
  return labels;
}

}  // namespace

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "mlp") return BaselineKind::mlp;
  if (s == "gcn") return BaselineKind::gcn;
  if (s == "sage") return BaselineKind::sage;
  throw ConfigError("unknown baseline kind: " + s);
}

const char* baseline_kind_to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::mlp: return "mlp";
    case BaselineKind::gcn: return "gcn";
    case BaselineKind::sage: return "sage";
  }
  throw ContractError("baseline_kind_to_string: bad enum value");
}

StaticGraph collapse(const TemporalGraph& graph) {
  const int n = graph.num_nodes;
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(n));
  for (const EdgeEvent& ev : graph.edges) {
    if (ev.src == ev.dst) continue;
    adjacency[static_cast<std::size_t>(ev.src)].push_back(ev.dst);
    adjacency[static_cast<std::size_t>(ev.dst)].push_back(ev.src);
  }
  for (auto& list : adjacency) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  Csr norm;
  norm.rows = norm.cols = n;
  norm.row_ptr.push_back(0);
  Csr mean;
  mean.rows = mean.cols = n;
  mean.row_ptr.push_back(0);
  const auto inv_sqrt_deg = [&](int i) {
    return 1.0 / std::sqrt(static_cast<double>(adjacency[static_cast<std::size_t>(i)].size()) + 1.0);
  };
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = adjacency[static_cast<std::size_t>(i)];
    // Merge the self-loop into the ascending neighbor run.
    bool self_done = false;
    const auto push_self = [&] {
      norm.col_idx.push_back(i);
      norm.values.push_back(inv_sqrt_deg(i) * inv_sqrt_deg(i));
      self_done = true;
    };
    for (const int j : nbrs) {
      if (!self_done && j > i) push_self();
      norm.col_idx.push_back(j);
      norm.values.push_back(inv_sqrt_deg(i) * inv_sqrt_deg(j));
      mean.col_idx.push_back(j);
      mean.values.push_back(1.0 / static_cast<double>(nbrs.size()));
    }
    if (!self_done) push_self();
    norm.row_ptr.push_back(static_cast<int>(norm.col_idx.size()));
    mean.row_ptr.push_back(static_cast<int>(mean.col_idx.size()));
  }
  norm.check();
  mean.check();

  StaticGraph sg;
  sg.num_nodes = n;
  sg.feature_dim = graph.node_dim;
  sg.features = Tensor({n, graph.node_dim}, graph.node_features);
  sg.norm_adj = std::make_shared<const Csr>(std::move(norm));
  auto mean_t = std::make_shared<const Csr>(transpose(mean));
  sg.neighbor_mean = std::make_shared<const Csr>(std::move(mean));
  sg.neighbor_mean_t = std::move(mean_t);
  return sg;
}

GraphModel::GraphModel(BaselineKind kind, int feature_dim, int hidden_dim, std::uint64_t seed)
    : kind_(kind), feature_dim_(feature_dim) {
  if (kind == BaselineKind::mlp)
    throw ContractError("GraphModel: the mlp baseline has no graph layers; use Decoder");
  if (feature_dim < 1) throw ConfigError("baseline: feature dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("baseline: hidden dim must be >= 1");
  Rng rng(seed);
  const int in1 = kind == BaselineKind::sage ? 2 * feature_dim : feature_dim;
  const int in2 = kind == BaselineKind::sage ? 2 * hidden_dim : hidden_dim;
  w1_ = make_param(glorot_uniform(hidden_dim, in1, rng));
  b1_ = make_param(Tensor::zeros({hidden_dim}));
  // The logit layer starts near zero so the first optimizer steps pick its
  // direction instead of unwinding a random one; Adam's per-coordinate
  // normalization makes the scale itself immaterial.
  Tensor head = glorot_uniform(1, in2, rng);
  for (std::size_t i = 0; i < head.size(); ++i) head[i] *= 0.05;
  w2_ = make_param(head);
  b2_ = make_param(Tensor::zeros({1}));
}

void GraphModel::set_output_bias(double logit) { b2_.mutable_value()[0] = logit; }

Var GraphModel::logits(const StaticGraph& graph) const {
  if (graph.feature_dim != feature_dim_)
    throw ShapeError("baseline: graph features of width " + std::to_string(graph.feature_dim) +
                     " do not match model width " + std::to_string(feature_dim_));
  const Var x = make_const(graph.features);
  if (kind_ == BaselineKind::gcn) {
    const Var h1 = relu(add_bias(linear(spmm(graph.norm_adj, graph.norm_adj, x), w1_), b1_));
    return add_bias(linear(spmm(graph.norm_adj, graph.norm_adj, h1), w2_), b2_);
  }
  const auto with_neighbor_mean = [&](const Var& h) {
    return concat_cols(h, spmm(graph.neighbor_mean, graph.neighbor_mean_t, h));
  };
  const Var h1 = relu(add_bias(linear(with_neighbor_mean(x), w1_), b1_));
  return add_bias(linear(with_neighbor_mean(h1), w2_), b2_);
}

std::vector<std::pair<std::string, Var>> GraphModel::named_parameters() const {
  const std::string prefix = baseline_kind_to_string(kind_);
  return {{prefix + ".layer0.weight", w1_},
          {prefix + ".layer0.bias", b1_},
          {prefix + ".layer1.weight", w2_},
          {prefix + ".layer1.bias", b2_}};
}

std::vector<Var> GraphModel::parameters() const { return {w1_, b1_, w2_, b2_}; }

std::vector<double> graph_model_scores(const GraphModel& model, const StaticGraph& graph) {
  const Var probs =
      clamp(sigmoid(flatten(model.logits(graph))), kProbFloor, 1.0 - kProbFloor);
  const Tensor& pv = probs.value();
  return std::vector<double>(pv.data(), pv.data() + pv.size());
}

BaselineReport train_baseline(BaselineKind kind,
                              const StaticGraph& static_graph,
                              const TemporalGraph& graph,
                              const DownstreamConfig& config,
                              std::uint64_t seed) {
  config.validate();
  if (static_graph.num_nodes != graph.num_nodes)
    throw ShapeError("baseline: collapsed graph has " + std::to_string(static_graph.num_nodes) +
                     " nodes, bundle has " + std::to_string(graph.num_nodes));

  if (kind == BaselineKind::mlp) {
    Decoder decoder(static_graph.feature_dim, config.hidden_dims, derive_seed(seed, 1));
    BaselineReport report;
    report.records =
        train_downstream(decoder, static_graph.features, graph, config, derive_seed(seed, 2));
    report.scores = decoder_scores(decoder, static_graph.features);
    return report;
  }

  const std::vector<int> train_nodes = labeled_nodes_in(graph, Split::train);
  const std::vector<int> valid_nodes = labeled_nodes_in(graph, Split::valid);
  if (train_nodes.empty()) throw ContractError("baseline: no labeled train nodes");
  const std::vector<int> train_labels = labels_of(graph, train_nodes);
  const std::vector<int> valid_labels = labels_of(graph, valid_nodes);

  GraphModel model(kind, static_graph.feature_dim, config.hidden_dims.front(),
                   derive_seed(seed, 1));
  double positives = 0.0;
  for (const int label : train_labels)
    if (label == 1) positives += 1.0;
  const double prior = std::clamp(positives / static_cast<double>(train_labels.size()),
                                  kProbFloor, 1.0 - kProbFloor);
  model.set_output_bias(std::log(prior / (1.0 - prior)));
  AdamConfig adam_config;
  adam_config.lr = config.lr;
  Adam optimizer(model.parameters(), adam_config);

  BaselineReport report;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const Var probs = clamp(sigmoid(flatten(take_rows(model.logits(static_graph), train_nodes))),
                            kProbFloor, 1.0 - kProbFloor);
    const Var loss = node_loss(probs, train_labels);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value))
      throw NumericError(std::string(baseline_kind_to_string(kind)) +
                         ": non-finite loss at epoch " + std::to_string(epoch));
    optimizer.zero_grad();
    backward(loss);
    optimizer.step();

    TrainRecord record;
    record.phase = "downstream";
    record.epoch = epoch;
    record.loss = loss_value;
    if (!valid_nodes.empty()) {
      const auto scores = graph_model_scores(model, static_graph);
      std::vector<double> valid_scores;
      valid_scores.reserve(valid_nodes.size());
      for (const int node : valid_nodes)
        valid_scores.push_back(scores[static_cast<std::size_t>(node)]);
      try {
        record.valid_auc = auc(valid_scores, valid_labels);
      } catch (const MetricError&) {
        record.valid_auc = std::nullopt;
      }
    }
    report.records.push_back(std::move(record));
  }
  report.scores = graph_model_scores(model, static_graph);
  return report;
}

}  // namespace tempograd
