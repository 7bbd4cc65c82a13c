#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tempograd/dataset_io.hpp"
#include "tempograd/errors.hpp"
#include "tempograd/pipeline.hpp"

using namespace tempograd;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

RunSettings tiny_settings() {
  RunSettings s;
  s.seed = 99;
  s.synth.num_nodes = 60;
  s.synth.communities = 3;
  s.synth.fraud_rate = 0.15;
  s.synth.node_dim = 4;
  s.synth.edge_dim = 2;
  s.synth.activity_rate = 1.5;
  s.synth.burst_size = 5;
  s.synth.burst_window = 10.0;
  s.synth.horizon = 150.0;
  s.synth.name = "tinypipe";
  s.embed.kind = EmbedKind::sum;
  s.embed.time_dim = 4;
  s.embed.hidden_dim = 8;
  s.embed.num_neighbors = 4;
  s.pretrain.epochs = 2;
  s.pretrain.batch_size = 64;
  s.pretrain.lr = 1e-3;
  s.downstream.epochs = 3;
  s.downstream.batch_size = 32;
  s.downstream.lr = 0.01;
  s.downstream.hidden_dims = {8};
  return s;
}

}  // namespace

TEST_CASE("flat config text parses and rejects malformed input") {
  const auto config = parse_flat_text(
      "seed = 7\n"
      "# a full-line comment\n"
      "\n"
      "embed.kind = conv   # trailing comment\n"
      "downstream.hidden-dims=64,32\n",
      "inline");
  CHECK(config.size() == 3);
  CHECK(config.at("seed") == "7");
  CHECK(config.at("embed.kind") == "conv");
  CHECK(config.at("downstream.hidden-dims") == "64,32");

  CHECK_THROWS_AS(parse_flat_text("seed = 1\nseed = 2\n", "dup"), ParseError);
  CHECK_THROWS_AS(parse_flat_text("just words\n", "noeq"), ParseError);
  CHECK_THROWS_AS(parse_flat_text("= 3\n", "nokey"), ParseError);

  RunSettings s;
  apply_flat(s, config);
  CHECK(s.seed == 7);
  CHECK(s.embed.kind == EmbedKind::conv);
  CHECK(s.downstream.hidden_dims == std::vector<int>{64, 32});

  CHECK_THROWS_AS(apply_flat(s, {{"no.such.key", "1"}}), ConfigError);
  CHECK_THROWS_AS(apply_flat(s, {{"embed.layers", "two"}}), ParseError);
  CHECK_THROWS_AS(apply_flat(s, {{"synth.horizon", "tall"}}), ParseError);
  CHECK_THROWS_AS(apply_flat(s, {{"embed.kind", "bilstm"}}), ConfigError);
  CHECK_THROWS_AS(apply_flat(s, {{"seed", "-4"}}), ParseError);
  CHECK_THROWS_AS(apply_flat(s, {{"downstream.hidden-dims", ""}}), ParseError);
}

TEST_CASE("settings survive the flat round trip") {
  RunSettings s = tiny_settings();
  s.dataset_dir = "some/dataset";
  s.embed.kind = EmbedKind::attn;
  s.embed.mode = NeighborMode::directed_out;
  s.embed.cutoff = Cutoff::at_or_before;
  s.downstream.hidden_dims = {16, 8};

  const FlatConfig flat = to_flat(s);
  RunSettings rebuilt;
  apply_flat(rebuilt, flat);
  CHECK(to_flat(rebuilt) == flat);
  CHECK(rebuilt.seed == s.seed);
  CHECK(rebuilt.dataset_dir == s.dataset_dir);
  CHECK(rebuilt.embed.cutoff == Cutoff::at_or_before);
  CHECK(rebuilt.downstream.hidden_dims == std::vector<int>{16, 8});
}

TEST_CASE("config files and manifests load interchangeably") {
  const auto dir = scratch_dir("tempograd_pipeline_cfg");
  const RunSettings s = tiny_settings();

  write_manifest(dir / "manifest.json", "pipeline", s);
  CHECK(load_config_file(dir / "manifest.json") == to_flat(s));

  std::ofstream flat(dir / "run.cfg");
  flat << "# tiny run\nseed = 5\nembed.hidden-dim = 16\n";
  flat.close();
  const FlatConfig loaded = load_config_file(dir / "run.cfg");
  RunSettings applied;
  apply_flat(applied, loaded);
  CHECK(applied.seed == 5);
  CHECK(applied.embed.hidden_dim == 16);

  std::ofstream bad_json(dir / "bad.json");
  bad_json << "{ not json";
  bad_json.close();
  CHECK_THROWS_AS(load_config_file(dir / "bad.json"), ParseError);

  std::ofstream no_config(dir / "empty.json");
  no_config << "{\"command\": \"pipeline\"}";
  no_config.close();
  CHECK_THROWS_AS(load_config_file(dir / "empty.json"), ParseError);

  CHECK_THROWS_AS(load_config_file(dir / "missing.cfg"), ParseError);
}

TEST_CASE("split scoring uses only the requested split") {
  TemporalGraph graph;
  graph.num_nodes = 8;
  graph.node_dim = 1;
  graph.node_features.assign(8, 0.0);
  graph.labels = {1, 0, 1, 0, 1, 0, -1, 1};
  graph.splits = {Split::train, Split::train, Split::valid, Split::valid,
                  Split::test,  Split::test,  Split::test,  Split::bg};
  const std::vector<double> scores = {0.5, 0.5, 0.9, 0.1, 0.2, 0.9, 100.0, 100.0};

  const SplitAuc auc = score_aucs(scores, graph);
  CHECK(auc.valid == 1.0);
  CHECK(auc.test == 0.0);

  CHECK_THROWS_AS(score_aucs({0.1, 0.2}, graph), ShapeError);
}

TEST_CASE("temporal pipeline runs deterministically and writes artifacts") {
  const RunSettings s = tiny_settings();
  const Dataset dataset = obtain_dataset(s);
  CHECK(dataset.name == "tinypipe");
  CHECK(dataset.graph.num_nodes == 60);

  const auto dir_a = scratch_dir("tempograd_pipeline_run_a");
  const auto dir_b = scratch_dir("tempograd_pipeline_run_b");
  const PipelineResult a = run_tgn_pipeline(dataset, s, dir_a);
  const PipelineResult b = run_tgn_pipeline(dataset, s, dir_b);

  CHECK(a.records == b.records);
  CHECK(a.auc.valid == b.auc.valid);
  CHECK(a.auc.test == b.auc.test);
  CHECK(read_file(dir_a / "metrics.jsonl") == read_file(dir_b / "metrics.jsonl"));

  REQUIRE(a.records.size() == 5);
  for (int e = 0; e < 2; ++e) {
    CHECK(a.records[static_cast<std::size_t>(e)].phase == "pretrain");
    CHECK(a.records[static_cast<std::size_t>(e)].epoch == e + 1);
    CHECK_FALSE(a.records[static_cast<std::size_t>(e)].valid_auc.has_value());
  }
  for (int e = 0; e < 3; ++e)
    CHECK(a.records[static_cast<std::size_t>(2 + e)].phase == "downstream");

  for (const char* name : {"metrics.jsonl", "encoder.ckpt", "decoder.ckpt", "report.json",
                           "report.tsv"})
    CHECK(std::filesystem::exists(dir_a / name));

  const std::string report = read_file(dir_a / "report.tsv");
  CHECK(report == "tgn-sum\t" + format_g9(a.auc.valid) + "\t" + format_g9(a.auc.test) + "\n");

  const std::string metrics = read_file(dir_a / "metrics.jsonl");
  CHECK(metrics.find("\"phase\":\"pretrain\"") != std::string::npos);
  CHECK(metrics.find("\"phase\":\"downstream\"") != std::string::npos);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);
}

TEST_CASE("checkpoints rebuild the trained models") {
  const RunSettings s = tiny_settings();
  const Dataset dataset = obtain_dataset(s);
  const auto dir = scratch_dir("tempograd_pipeline_ckpt");
  const PipelineResult result = run_tgn_pipeline(dataset, s, dir);

  TemporalEmbedder embedder = load_encoder_checkpoint(dir / "encoder.ckpt", dataset.graph);
  CHECK(embedder.config().kind == s.embed.kind);
  CHECK(embedder.config().hidden_dim == s.embed.hidden_dim);
  CHECK(embedder.config().time_dim == s.embed.time_dim);

  Decoder decoder = load_decoder_checkpoint(dir / "decoder.ckpt");
  CHECK(decoder.in_dim() == s.embed.hidden_dim);

  const Tensor embeddings = final_time_embeddings(embedder);
  const SplitAuc rescored = score_aucs(decoder_scores(decoder, embeddings), dataset.graph);
  CHECK(rescored.valid == result.auc.valid);
  CHECK(rescored.test == result.auc.test);

  save_encoder_checkpoint(dir / "encoder_again.ckpt", embedder);
  CHECK(read_file(dir / "encoder.ckpt") == read_file(dir / "encoder_again.ckpt"));
  save_decoder_checkpoint(dir / "decoder_again.ckpt", decoder, s.downstream.hidden_dims);
  CHECK(read_file(dir / "decoder.ckpt") == read_file(dir / "decoder_again.ckpt"));

  CHECK_THROWS_AS(load_decoder_checkpoint(dir / "nowhere.ckpt"), ParseError);
}

TEST_CASE("comparison ranks all models and reports the improvement") {
  RunSettings s = tiny_settings();
  s.pretrain.epochs = 1;
  s.downstream.epochs = 2;
  const Dataset dataset = obtain_dataset(s);
  const auto dir = scratch_dir("tempograd_pipeline_cmp");

  const CompareResult result = run_compare(dataset, s, dir);
  REQUIRE(result.rows.size() == 7);

  std::set<std::string> models;
  double best_temporal = 0.0;
  double best_static = 0.0;
  for (const CompareRow& row : result.rows) {
    models.insert(row.model);
    if (row.model.rfind("tgn-", 0) == 0)
      best_temporal = std::max(best_temporal, row.auc.test);
    else
      best_static = std::max(best_static, row.auc.test);
  }
  CHECK(models == std::set<std::string>{"tgn-attn", "tgn-sum", "tgn-mean", "tgn-conv", "mlp",
                                        "gcn", "sage"});
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    CHECK(result.rows[i - 1].auc.test >= result.rows[i].auc.test);
  CHECK(result.improv == (best_temporal - best_static) / best_static);

  const std::string table = read_file(dir / "table.tsv");
  std::istringstream lines(table);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 9);
  CHECK(rows[0] == "model\tvalid_auc\ttest_auc");
  CHECK(rows[1].substr(0, rows[1].find('\t')) == result.rows[0].model);
  CHECK(rows[8].rfind("improv.\t-\t", 0) == 0);
  CHECK(rows[8].back() == '%');

  for (const CompareRow& row : result.rows) {
    CHECK(std::filesystem::exists(dir / row.model / "metrics.jsonl"));
    CHECK(std::filesystem::exists(dir / row.model / "report.json"));
    if (row.model.rfind("tgn-", 0) == 0)
      CHECK(std::filesystem::exists(dir / row.model / "encoder.ckpt"));
  }
  CHECK(std::filesystem::exists(dir / "report.json"));
}
