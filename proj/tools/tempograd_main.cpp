#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tempograd/dataset_io.hpp"
#include "tempograd/errors.hpp"
#include "tempograd/pipeline.hpp"

namespace {

using namespace tempograd;

struct CliArgs {
  std::string config;
  std::string out = "out";
  std::string dataset;
  std::string kind;
  std::uint64_t seed = 42;
  bool synth_defaults = false;
};

void add_common_options(CLI::App* sub, CliArgs& args, bool with_data_source, bool with_kind) {
  sub->add_option("--config", args.config,
                  "Flat key = value config file, or a manifest.json to replay");
  sub->add_option("--seed", args.seed, "Run seed (default 42)");
  sub->add_option("--out", args.out, "Output directory (default ./out)");
  if (with_kind)
    sub->add_option("--kind", args.kind, "Temporal embedding kind")
        ->check(CLI::IsMember({"attn", "sum", "mean", "conv"}));
  if (with_data_source) {
    auto* dataset = sub->add_option("--dataset", args.dataset, "Load this dataset directory");
    auto* synth =
        sub->add_flag("--synth-defaults", args.synth_defaults, "Use the synthetic generator");
    dataset->excludes(synth);
    synth->excludes(dataset);
  }
}

bool flag_given(const CLI::App* sub, const std::string& name) {
  const CLI::Option* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Flags override config-file values; the config file overrides the defaults.
RunSettings resolve_settings(const CLI::App* sub, const CliArgs& args) {
  RunSettings settings;
  if (!args.config.empty()) apply_flat(settings, load_config_file(args.config));
  if (flag_given(sub, "--seed")) settings.seed = args.seed;
  if (flag_given(sub, "--kind")) settings.embed.kind = embed_kind_from_string(args.kind);
  if (flag_given(sub, "--dataset")) settings.dataset_dir = args.dataset;
  if (args.synth_defaults) settings.dataset_dir.clear();
  settings.validate();
  return settings;
}

bool has_data_source(const CLI::App* sub, const CliArgs& args) {
  return !args.config.empty() || flag_given(sub, "--dataset") || args.synth_defaults;
}

int run_synth(const RunSettings& base, const std::filesystem::path& out) {
  RunSettings settings = base;
  settings.dataset_dir.clear();
  const Dataset dataset = obtain_dataset(settings);
  save_dataset(dataset, out);
  write_manifest(out / "manifest.json", "synth", settings);
  std::cout << "wrote dataset '" << dataset.name << "' (" << dataset.graph.num_nodes
            << " nodes, " << dataset.graph.edges.size() << " events) to " << out.string() << "\n";
  return 0;
}

int run_pretrain(const RunSettings& settings, const std::filesystem::path& out) {
  const Dataset dataset = obtain_dataset(settings);
  TemporalEmbedder embedder(dataset.graph, settings.embed,
                            stream_seed(settings.seed, SeedStream::encoder));
  const auto records = pretrain_link_prediction(embedder, settings.pretrain,
                                                stream_seed(settings.seed, SeedStream::pretrain));
  std::filesystem::create_directories(out);
  write_metrics(out / "metrics.jsonl", records);
  save_encoder_checkpoint(out / "encoder.ckpt", embedder);
  write_manifest(out / "manifest.json", "pretrain", settings);
  if (!records.empty()) std::cout << "final pretrain loss " << records.back().loss << "\n";
  std::cout << "wrote " << (out / "encoder.ckpt").string() << "\n";
  return 0;
}

int run_train(const RunSettings& settings, const std::filesystem::path& out) {
  const Dataset dataset = obtain_dataset(settings);
  const TemporalEmbedder embedder = load_encoder_checkpoint(out / "encoder.ckpt", dataset.graph);
  const Tensor embeddings = final_time_embeddings(embedder);
  Decoder decoder(embedder.config().hidden_dim, settings.downstream.hidden_dims,
                  stream_seed(settings.seed, SeedStream::decoder));
  const auto records = train_downstream(decoder, embeddings, dataset.graph, settings.downstream,
                                        stream_seed(settings.seed, SeedStream::downstream));
  append_metrics(out / "metrics.jsonl", records);
  save_decoder_checkpoint(out / "decoder.ckpt", decoder, settings.downstream.hidden_dims);
  write_manifest(out / "manifest.json", "train", settings);
  if (!records.empty() && records.back().valid_auc.has_value())
    std::cout << "final valid AUC " << *records.back().valid_auc << "\n";
  std::cout << "wrote " << (out / "decoder.ckpt").string() << "\n";
  return 0;
}

int run_eval(const RunSettings& settings, const std::filesystem::path& out) {
  const Dataset dataset = obtain_dataset(settings);
  const TemporalEmbedder embedder = load_encoder_checkpoint(out / "encoder.ckpt", dataset.graph);
  const Decoder decoder = load_decoder_checkpoint(out / "decoder.ckpt");
  const Tensor embeddings = final_time_embeddings(embedder);
  const SplitAuc auc = score_aucs(decoder_scores(decoder, embeddings), dataset.graph);
  const std::string model = tgn_model_name(embedder.config().kind);
  write_report(out, model, auc);
  write_manifest(out / "manifest.json", "eval", settings);
  std::cout << model << "\tvalid_auc " << format_g9(auc.valid) << "\ttest_auc "
            << format_g9(auc.test) << "\n";
  return 0;
}

int run_pipeline(const RunSettings& settings, const std::filesystem::path& out) {
  const Dataset dataset = obtain_dataset(settings);
  const PipelineResult result = run_tgn_pipeline(dataset, settings, out);
  write_manifest(out / "manifest.json", "pipeline", settings);
  std::cout << tgn_model_name(settings.embed.kind) << "\tvalid_auc "
            << format_g9(result.auc.valid) << "\ttest_auc " << format_g9(result.auc.test) << "\n";
  return 0;
}

int run_compare_cmd(const RunSettings& settings, const std::filesystem::path& out) {
  const Dataset dataset = obtain_dataset(settings);
  const CompareResult result = run_compare(dataset, settings, out);
  write_manifest(out / "manifest.json", "compare", settings);
  std::cout << "model\tvalid_auc\ttest_auc\n";
  for (const CompareRow& row : result.rows)
    std::cout << row.model << "\t" << format_g9(row.auc.valid) << "\t"
              << format_g9(row.auc.test) << "\n";
  std::cout << "improv.\t-\t" << format_g9(result.improv * 100.0) << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tempograd: temporal graph anomaly detection workbench"};
  app.require_subcommand(1);
  CliArgs args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic fraud dataset");
  add_common_options(synth, args, false, false);
  CLI::App* pretrain =
      app.add_subcommand("pretrain", "Pretrain a temporal encoder on link prediction");
  add_common_options(pretrain, args, true, true);
  CLI::App* train =
      app.add_subcommand("train", "Train the node classifier on a frozen encoder");
  add_common_options(train, args, true, true);
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score saved checkpoints on every split");
  add_common_options(eval_cmd, args, true, true);
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "Run generate, pretrain, train and eval for one kind");
  add_common_options(pipeline, args, true, true);
  CLI::App* compare =
      app.add_subcommand("compare", "Run all temporal kinds plus static baselines");
  add_common_options(compare, args, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (sub != synth && !has_data_source(sub, args)) {
      std::cerr << "error: " << sub->get_name()
                << " needs a data source: pass --dataset DIR, --synth-defaults, or --config FILE"
                << "\n";
      return 1;
    }
    const RunSettings settings = resolve_settings(sub, args);
    const std::filesystem::path out = args.out;
    if (sub == synth) return run_synth(settings, out);
    if (sub == pretrain) return run_pretrain(settings, out);
    if (sub == train) return run_train(settings, out);
    if (sub == eval_cmd) return run_eval(settings, out);
    if (sub == pipeline) return run_pipeline(settings, out);
    return run_compare_cmd(settings, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
