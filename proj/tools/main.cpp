// tracelm: batch experiments for perplexity-based novelty detection over
// system-call request traces.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tracelm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tracelm;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string seed_override;
  std::string model_override;
  std::string max_len_override;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "flat key=value config file");
  cmd->add_option("--seed", flags.seed_override, "override the run seed");
  cmd->add_option("--model", flags.model_override,
                  "model architecture: ngram|lstm|transformer|longformer");
  cmd->add_option("--max-len", flags.max_len_override,
                  "truncate requests to this many events before scoring");
}

config::RunConfig resolve_config(const CommonFlags& flags) {
  config::RunConfig cfg = flags.config_path.empty()
                              ? config::default_config()
                              : config::validate_config(flags.config_path);
  if (!flags.seed_override.empty()) config::apply_override(cfg, "seed", flags.seed_override);
  if (!flags.model_override.empty())
    config::apply_override(cfg, "model.arch", flags.model_override);
  if (!flags.max_len_override.empty())
    config::apply_override(cfg, "detect.max_len", flags.max_len_override);
  cfg.train.seed = cfg.seed;
  return cfg;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      if (!current.empty()) items.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) items.push_back(current);
  return items;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-model novelty detection for system-call traces"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string out_dir;
  std::string dataset_dir;
  std::string checkpoint_path;
  std::string split_dir;
  std::string events_file;
  std::string label = "id";
  std::string id_scores, ood_scores, threshold_file, behavior;
  std::vector<std::string> ood_scores_list;
  std::string roc_path;
  std::string run_dir, models_list, behaviors_list;

  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic workload dataset");
  add_common(synth_cmd, flags);
  synth_cmd->add_option("--out", out_dir, "dataset output directory")->required();

  auto* ingest_cmd = app.add_subcommand("ingest", "delimit requests from a raw event file");
  add_common(ingest_cmd, flags);
  ingest_cmd->add_option("--in", events_file, "event JSONL file")->required();
  ingest_cmd->add_option("--out", out_dir, "output requests.jsonl path")->required();
  ingest_cmd->add_option("--label", label, "behavior label for the requests");

  auto* stats_cmd = app.add_subcommand("stats", "per-split request statistics");
  add_common(stats_cmd, flags);
  stats_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  stats_cmd->add_option("--out", out_dir, "output CSV path")->required();

  auto* train_cmd = app.add_subcommand("train", "fit/train a model on train_id");
  add_common(train_cmd, flags);
  train_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train_cmd->add_option("--checkpoint", checkpoint_path, "output checkpoint path")->required();
  train_cmd->add_option("--history", out_dir, "output training-history CSV")->required();

  auto* score_cmd = app.add_subcommand("score", "score one split with a checkpoint");
  add_common(score_cmd, flags);
  score_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  score_cmd->add_option("--split", split_dir, "split directory")->required();
  score_cmd->add_option("--out", out_dir, "output scores CSV")->required();

  auto* calibrate_cmd = app.add_subcommand("calibrate", "pick the F-maximizing threshold");
  add_common(calibrate_cmd, flags);
  calibrate_cmd->add_option("--id-scores", id_scores, "validation ID scores CSV")->required();
  calibrate_cmd
      ->add_option("--ood-scores", ood_scores_list,
                   "validation OOD scores CSV(s); several files pool their scores")
      ->required();
  calibrate_cmd->add_option("--behavior", behavior, "behavior name")->required();
  calibrate_cmd->add_option("--out", out_dir, "output threshold CSV")->required();

  auto* detect_cmd = app.add_subcommand("detect", "apply a threshold to test scores");
  add_common(detect_cmd, flags);
  detect_cmd->add_option("--threshold", threshold_file, "threshold CSV")->required();
  detect_cmd->add_option("--id-scores", id_scores, "test ID scores CSV")->required();
  detect_cmd->add_option("--ood-scores", ood_scores, "test OOD scores CSV")->required();
  detect_cmd->add_option("--metrics", out_dir, "output metrics CSV")->required();
  detect_cmd->add_option("--roc", roc_path, "output ROC points CSV")->required();

  auto* inject_cmd = app.add_subcommand("inject-delay", "delay-sensitivity curve");
  add_common(inject_cmd, flags);
  inject_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  inject_cmd->add_option("--split", split_dir, "split providing the probed request")->required();
  inject_cmd->add_option("--out", out_dir, "output delay-curve CSV")->required();

  auto* report_cmd = app.add_subcommand("report", "merged AuROC/F-score table");
  add_common(report_cmd, flags);
  report_cmd->add_option("--run-dir", run_dir, "run directory with scores/ and thresholds/")
      ->required();
  report_cmd->add_option("--models", models_list, "comma-separated model list")->required();
  report_cmd->add_option("--behaviors", behaviors_list, "comma-separated behavior list")
      ->required();
  report_cmd->add_option("--out", out_dir, "output report CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const config::RunConfig cfg = resolve_config(flags);

    if (synth_cmd->parsed()) {
      pipeline::cmd_synth(cfg, out_dir);
    } else if (ingest_cmd->parsed()) {
      const std::size_t dropped = pipeline::cmd_ingest(events_file, out_dir, label);
      if (dropped > 0)
        std::cerr << "warning: dropped " << dropped << " unmatched request_enter marker(s)\n";
    } else if (stats_cmd->parsed()) {
      pipeline::cmd_stats(dataset_dir, out_dir, cfg.seed);
    } else if (train_cmd->parsed()) {
      const auto artifacts = pipeline::cmd_train(cfg, dataset_dir, checkpoint_path, out_dir);
      std::cerr << "checkpoint written: " << artifacts.checkpoint.string() << "\n";
    } else if (score_cmd->parsed()) {
      pipeline::cmd_score(cfg, checkpoint_path, split_dir, out_dir);
    } else if (calibrate_cmd->parsed()) {
      std::vector<fs::path> ood_paths(ood_scores_list.begin(), ood_scores_list.end());
      const auto tm = pipeline::cmd_calibrate(id_scores, ood_paths, behavior, out_dir, cfg.seed);
      std::cerr << "threshold " << tm.threshold << " (val F " << tm.val_f_score << ")\n";
    } else if (detect_cmd->parsed()) {
      pipeline::cmd_detect(threshold_file, id_scores, ood_scores, out_dir, roc_path, cfg.seed);
    } else if (inject_cmd->parsed()) {
      pipeline::cmd_inject_delay(cfg, checkpoint_path, split_dir, out_dir);
    } else if (report_cmd->parsed()) {
      pipeline::cmd_report(run_dir, split_list(models_list), split_list(behaviors_list), out_dir,
                           cfg.seed);
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
