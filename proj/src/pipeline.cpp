#include "tempograd/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "tempograd/checkpoint.hpp"
#include "tempograd/dataset_io.hpp"
#include "tempograd/metrics.hpp"

namespace tempograd {

namespace {

// Baseline streams sit above the SeedStream values so no phase shares one.
constexpr std::uint64_t kBaselineStreamBase = 16;

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

int parse_bounded_int(const std::string& token, const std::string& context) {
  const long long v = parse_int(token, context);
  if (v < -(1ll << 31) || v > (1ll << 31) - 1)
    throw ParseError(context + ": integer out of range '" + token + "'");
  return static_cast<int>(v);
}

std::vector<int> parse_int_list(const std::string& token, const std::string& context) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(token);
  while (std::getline(in, item, ','))
    out.push_back(parse_bounded_int(trim(item), context));
  if (out.empty()) throw ParseError(context + ": empty list");
  return out;
}

std::string join_int_list(const std::vector<int>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(items[i]);
  }
  return out;
}

// Space-separated key=value tokens, as used in checkpoint config lines.
FlatConfig parse_token_config(const std::string& line, const std::string& context) {
  FlatConfig config;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError(context + ": expected key=value, got '" + token + "'");
    config[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return config;
}

std::string render_flat_line(const FlatConfig& config) {
  std::string line;
  for (const auto& [key, value] : config) {
    if (!line.empty()) line += ' ';
    line += key + "=" + value;
  }
  return line;
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + file.string());
  out << text;
  if (!out.good()) throw ParseError("failed writing " + file.string());
}

std::string records_as_jsonl(const std::vector<TrainRecord>& records) {
  std::string text;
  for (const TrainRecord& r : records) {
    nlohmann::ordered_json j;
    j["phase"] = r.phase;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    if (r.valid_auc.has_value()) j["valid_auc"] = *r.valid_auc;
    text += j.dump();
    text += '\n';
  }
  return text;
}

void write_model_artifacts(const std::filesystem::path& out_dir, const std::string& model,
                           const PipelineResult& result) {
  write_metrics(out_dir / "metrics.jsonl", result.records);
  write_report(out_dir, model, result.auc);
}

}  // namespace

void RunSettings::validate() const {
  synth.validate();
  embed.validate();
  pretrain.validate();
  downstream.validate();
}

FlatConfig parse_flat_text(const std::string& text, const std::string& context) {
  FlatConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = context + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (config.count(key)) throw ParseError(where + ": duplicate key '" + key + "'");
    config[key] = value;
  }
  return config;
}

FlatConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    if (!manifest.contains("config") || !manifest["config"].is_object())
      throw ParseError(path.string() + ": manifest has no \"config\" object");
    FlatConfig config;
    for (const auto& [key, value] : manifest["config"].items()) {
      if (!value.is_string())
        throw ParseError(path.string() + ": config value for '" + key + "' must be a string");
      config[key] = value.get<std::string>();
    }
    return config;
  }
  return parse_flat_text(text, path.string());
}

void apply_flat(RunSettings& settings, const FlatConfig& config) {
  for (const auto& [key, value] : config) {
    const std::string ctx = "config key " + key;
    if (key == "seed") settings.seed = parse_uint(value, ctx);
    else if (key == "dataset") settings.dataset_dir = value;
    else if (key == "synth.num-nodes") settings.synth.num_nodes = parse_bounded_int(value, ctx);
    else if (key == "synth.communities") settings.synth.communities = parse_bounded_int(value, ctx);
    else if (key == "synth.fraud-rate") settings.synth.fraud_rate = parse_double(value, ctx);
    else if (key == "synth.node-dim") settings.synth.node_dim = parse_bounded_int(value, ctx);
    else if (key == "synth.edge-dim") settings.synth.edge_dim = parse_bounded_int(value, ctx);
    else if (key == "synth.activity-rate") settings.synth.activity_rate = parse_double(value, ctx);
    else if (key == "synth.burst-size") settings.synth.burst_size = parse_bounded_int(value, ctx);
    else if (key == "synth.burst-victims") settings.synth.burst_victims = parse_bounded_int(value, ctx);
    else if (key == "synth.burst-window") settings.synth.burst_window = parse_double(value, ctx);
    else if (key == "synth.horizon") settings.synth.horizon = parse_double(value, ctx);
    else if (key == "synth.train-frac") settings.synth.train_frac = parse_double(value, ctx);
    else if (key == "synth.valid-frac") settings.synth.valid_frac = parse_double(value, ctx);
    else if (key == "synth.name") settings.synth.name = value;
    else if (key == "embed.kind") settings.embed.kind = embed_kind_from_string(value);
    else if (key == "embed.layers") settings.embed.layers = parse_bounded_int(value, ctx);
    else if (key == "embed.heads") settings.embed.heads = parse_bounded_int(value, ctx);
    else if (key == "embed.time-dim") settings.embed.time_dim = parse_bounded_int(value, ctx);
    else if (key == "embed.hidden-dim") settings.embed.hidden_dim = parse_bounded_int(value, ctx);
    else if (key == "embed.num-neighbors")
      settings.embed.num_neighbors = parse_bounded_int(value, ctx);
    else if (key == "embed.mode") settings.embed.mode = neighbor_mode_from_string(value);
    else if (key == "embed.cutoff") settings.embed.cutoff = cutoff_from_string(value);
    else if (key == "pretrain.epochs") settings.pretrain.epochs = parse_bounded_int(value, ctx);
    else if (key == "pretrain.batch-size")
      settings.pretrain.batch_size = parse_bounded_int(value, ctx);
    else if (key == "pretrain.lr") settings.pretrain.lr = parse_double(value, ctx);
    else if (key == "pretrain.negatives")
      settings.pretrain.negatives = parse_bounded_int(value, ctx);
    else if (key == "downstream.epochs")
      settings.downstream.epochs = parse_bounded_int(value, ctx);
    else if (key == "downstream.batch-size")
      settings.downstream.batch_size = parse_bounded_int(value, ctx);
    else if (key == "downstream.lr") settings.downstream.lr = parse_double(value, ctx);
    else if (key == "downstream.hidden-dims")
      settings.downstream.hidden_dims = parse_int_list(value, ctx);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

FlatConfig to_flat(const RunSettings& settings) {
  FlatConfig config;
  config["seed"] = std::to_string(settings.seed);
  config["dataset"] = settings.dataset_dir;
  config["synth.num-nodes"] = std::to_string(settings.synth.num_nodes);
  config["synth.communities"] = std::to_string(settings.synth.communities);
  config["synth.fraud-rate"] = format_g9(settings.synth.fraud_rate);
  config["synth.node-dim"] = std::to_string(settings.synth.node_dim);
  config["synth.edge-dim"] = std::to_string(settings.synth.edge_dim);
  config["synth.activity-rate"] = format_g9(settings.synth.activity_rate);
  config["synth.burst-size"] = std::to_string(settings.synth.burst_size);
  config["synth.burst-victims"] = std::to_string(settings.synth.burst_victims);
  config["synth.burst-window"] = format_g9(settings.synth.burst_window);
  config["synth.horizon"] = format_g9(settings.synth.horizon);
  config["synth.train-frac"] = format_g9(settings.synth.train_frac);
  config["synth.valid-frac"] = format_g9(settings.synth.valid_frac);
  config["synth.name"] = settings.synth.name;
  config["embed.kind"] = embed_kind_to_string(settings.embed.kind);
  config["embed.layers"] = std::to_string(settings.embed.layers);
  config["embed.heads"] = std::to_string(settings.embed.heads);
  config["embed.time-dim"] = std::to_string(settings.embed.time_dim);
  config["embed.hidden-dim"] = std::to_string(settings.embed.hidden_dim);
  config["embed.num-neighbors"] = std::to_string(settings.embed.num_neighbors);
  config["embed.mode"] = neighbor_mode_to_string(settings.embed.mode);
  config["embed.cutoff"] = cutoff_to_string(settings.embed.cutoff);
  config["pretrain.epochs"] = std::to_string(settings.pretrain.epochs);
  config["pretrain.batch-size"] = std::to_string(settings.pretrain.batch_size);
  config["pretrain.lr"] = format_g9(settings.pretrain.lr);
  config["pretrain.negatives"] = std::to_string(settings.pretrain.negatives);
  config["downstream.epochs"] = std::to_string(settings.downstream.epochs);
  config["downstream.batch-size"] = std::to_string(settings.downstream.batch_size);
  config["downstream.lr"] = format_g9(settings.downstream.lr);
  config["downstream.hidden-dims"] = join_int_list(settings.downstream.hidden_dims);
  return config;
}

Dataset obtain_dataset(const RunSettings& settings) {
  if (!settings.dataset_dir.empty()) return load_dataset(settings.dataset_dir);
  return generate_synth(settings.synth, stream_seed(settings.seed, SeedStream::synth));
}

std::uint64_t stream_seed(std::uint64_t run_seed, SeedStream stream) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(stream));
}

SplitAuc score_aucs(const std::vector<double>& scores, const TemporalGraph& graph) {
  if (scores.size() != static_cast<std::size_t>(graph.num_nodes))
    throw ShapeError("score_aucs: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(graph.num_nodes) + " nodes");
  SplitAuc out;
  for (const Split split : {Split::valid, Split::test}) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < graph.num_nodes; ++i) {
      if (graph.labels[static_cast<std::size_t>(i)] == -1) continue;
      if (graph.splits[static_cast<std::size_t>(i)] != split) continue;
      s.push_back(scores[static_cast<std::size_t>(i)]);
      y.push_back(graph.labels[static_cast<std::size_t>(i)]);
    }
    (split == Split::valid ? out.valid : out.test) = auc(s, y);
  }
  return out;
}

std::string tgn_model_name(EmbedKind kind) {
  return std::string("tgn-") + embed_kind_to_string(kind);
}

PipelineResult run_tgn_pipeline(const Dataset& dataset, const RunSettings& settings,
                                const std::filesystem::path& out_dir) {
  settings.embed.validate();
  settings.pretrain.validate();
  settings.downstream.validate();

  TemporalEmbedder embedder(dataset.graph, settings.embed,
                            stream_seed(settings.seed, SeedStream::encoder));
  PipelineResult result;
  result.records = pretrain_link_prediction(embedder, settings.pretrain,
                                            stream_seed(settings.seed, SeedStream::pretrain));

  const Tensor embeddings = final_time_embeddings(embedder);
  Decoder decoder(settings.embed.hidden_dim, settings.downstream.hidden_dims,
                  stream_seed(settings.seed, SeedStream::decoder));
  auto downstream = train_downstream(decoder, embeddings, dataset.graph, settings.downstream,
                                     stream_seed(settings.seed, SeedStream::downstream));
  result.records.insert(result.records.end(), downstream.begin(), downstream.end());
  result.auc = score_aucs(decoder_scores(decoder, embeddings), dataset.graph);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_model_artifacts(out_dir, tgn_model_name(settings.embed.kind), result);
    save_encoder_checkpoint(out_dir / "encoder.ckpt", embedder);
    save_decoder_checkpoint(out_dir / "decoder.ckpt", decoder, settings.downstream.hidden_dims);
  }
  return result;
}

PipelineResult run_baseline_pipeline(BaselineKind kind, const Dataset& dataset,
                                     const RunSettings& settings,
                                     const std::filesystem::path& out_dir) {
  const StaticGraph static_graph = collapse(dataset.graph);
  const auto kind_index = static_cast<std::uint64_t>(kind);
  const BaselineReport report =
      train_baseline(kind, static_graph, dataset.graph, settings.downstream,
                     derive_seed(settings.seed, kBaselineStreamBase + kind_index));
  PipelineResult result;
  result.records = report.records;
  result.auc = score_aucs(report.scores, dataset.graph);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_model_artifacts(out_dir, baseline_kind_to_string(kind), result);
  }
  return result;
}

CompareResult run_compare(const Dataset& dataset, const RunSettings& settings,
                          const std::filesystem::path& out_dir) {
  CompareResult result;
  double best_temporal = 0.0;
  double best_static = 0.0;

  for (const EmbedKind kind : {EmbedKind::attn, EmbedKind::sum, EmbedKind::mean, EmbedKind::conv}) {
    RunSettings per_kind = settings;
    per_kind.embed.kind = kind;
    const std::string model = tgn_model_name(kind);
    const auto run = run_tgn_pipeline(dataset, per_kind,
                                      out_dir.empty() ? out_dir : out_dir / model);
    best_temporal = std::max(best_temporal, run.auc.test);
    result.rows.push_back({model, run.auc});
  }
  for (const BaselineKind kind : {BaselineKind::mlp, BaselineKind::gcn, BaselineKind::sage}) {
    const std::string model = baseline_kind_to_string(kind);
    const auto run = run_baseline_pipeline(kind, dataset, settings,
                                           out_dir.empty() ? out_dir : out_dir / model);
    best_static = std::max(best_static, run.auc.test);
    result.rows.push_back({model, run.auc});
  }

  std::sort(result.rows.begin(), result.rows.end(), [](const CompareRow& a, const CompareRow& b) {
    if (a.auc.test != b.auc.test) return a.auc.test > b.auc.test;
    return a.model < b.model;
  });
  result.improv = (best_temporal - best_static) / best_static;

  if (!out_dir.empty()) {
    write_table(out_dir / "table.tsv", result);
    nlohmann::ordered_json j;
    j["improv"] = result.improv;
    j["models"] = nlohmann::ordered_json::array();
    for (const CompareRow& row : result.rows)
      j["models"].push_back({{"model", row.model},
                             {"valid_auc", row.auc.valid},
                             {"test_auc", row.auc.test}});
    write_text_file(out_dir / "report.json", j.dump(2) + "\n");
  }
  return result;
}

void write_metrics(const std::filesystem::path& file, const std::vector<TrainRecord>& records) {
  write_text_file(file, records_as_jsonl(records));
}

void append_metrics(const std::filesystem::path& file, const std::vector<TrainRecord>& records) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::app);
  if (!out) throw ParseError("cannot write " + file.string());
  out << records_as_jsonl(records);
  if (!out.good()) throw ParseError("failed writing " + file.string());
}

void write_manifest(const std::filesystem::path& file, const std::string& command,
                    const RunSettings& settings) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : to_flat(settings)) j["config"][key] = value;
  write_text_file(file, j.dump(2) + "\n");
}

void write_report(const std::filesystem::path& dir, const std::string& model,
                  const SplitAuc& auc) {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["valid_auc"] = auc.valid;
  j["test_auc"] = auc.test;
  write_text_file(dir / "report.json", j.dump(2) + "\n");
  write_text_file(dir / "report.tsv", model + "\t" + format_g9(auc.valid) + "\t" +
                                          format_g9(auc.test) + "\n");
}

void write_table(const std::filesystem::path& file, const CompareResult& result) {
  std::string text = "model\tvalid_auc\ttest_auc\n";
  for (const CompareRow& row : result.rows)
    text += row.model + "\t" + format_g9(row.auc.valid) + "\t" + format_g9(row.auc.test) + "\n";
  text += "improv.\t-\t" + format_g9(result.improv * 100.0) + "%\n";
  write_text_file(file, text);
}

void save_encoder_checkpoint(const std::filesystem::path& file,
                             const TemporalEmbedder& embedder) {
  FlatConfig config;
  const EmbedConfig& c = embedder.config();
  config["embed.kind"] = embed_kind_to_string(c.kind);
  config["embed.layers"] = std::to_string(c.layers);
  config["embed.heads"] = std::to_string(c.heads);
  config["embed.time-dim"] = std::to_string(c.time_dim);
  config["embed.hidden-dim"] = std::to_string(c.hidden_dim);
  config["embed.num-neighbors"] = std::to_string(c.num_neighbors);
  config["embed.mode"] = neighbor_mode_to_string(c.mode);
  config["embed.cutoff"] = cutoff_to_string(c.cutoff);
  save_checkpoint(file, render_flat_line(config), embedder.named_parameters());
}

TemporalEmbedder load_encoder_checkpoint(const std::filesystem::path& file,
                                         const TemporalGraph& graph) {
  const CheckpointData data = load_checkpoint(file);
  RunSettings shell;
  apply_flat(shell, parse_token_config(data.config_line, file.string()));
  TemporalEmbedder embedder(graph, shell.embed, 0);
  restore_parameters(data, embedder.named_parameters());
  return embedder;
}

void save_decoder_checkpoint(const std::filesystem::path& file, const Decoder& decoder,
                             const std::vector<int>& hidden_dims) {
  FlatConfig config;
  config["decoder.in-dim"] = std::to_string(decoder.in_dim());
  config["decoder.hidden-dims"] = join_int_list(hidden_dims);
  save_checkpoint(file, render_flat_line(config), decoder.named_parameters());
}

Decoder load_decoder_checkpoint(const std::filesystem::path& file) {
  const CheckpointData data = load_checkpoint(file);
  const FlatConfig config = parse_token_config(data.config_line, file.string());
  const auto in_it = config.find("decoder.in-dim");
  const auto hidden_it = config.find("decoder.hidden-dims");
  if (in_it == config.end() || hidden_it == config.end())
    throw ParseError(file.string() + ": decoder checkpoint config is incomplete");
  Decoder decoder(parse_bounded_int(in_it->second, "decoder.in-dim"),
                  parse_int_list(hidden_it->second, "decoder.hidden-dims"), 0);
  restore_parameters(data, decoder.named_parameters());
  return decoder;
}

}  // namespace tempograd
