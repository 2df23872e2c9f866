#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tracelm/config.hpp"
#include "tracelm/detect.hpp"
#include "tracelm/scoring.hpp"

namespace tracelm::pipeline {

namespace fs = std::filesystem;

// Loads <split_dir>/requests.jsonl.
std::vector<trace::Request> load_split(const fs::path& split_dir);

struct TrainArtifacts {
  fs::path checkpoint;
  fs::path history_csv;
  double best_val_ce = 0.0;
};

// synth: writes the dataset directories for the configured workload.
void cmd_synth(const config::RunConfig& config, const fs::path& out_dir);

// ingest: raw event JSONL -> delimited requests JSONL. Returns the number of
// dropped unmatched enters (reported, not fatal).
std::size_t cmd_ingest(const fs::path& events_file, const fs::path& out_file,
                       const std::string& label);

// stats: Table-style per-split request statistics over every split directory
// found under dataset_dir.
void cmd_stats(const fs::path& dataset_dir, const fs::path& out_csv, std::uint64_t seed);

// train: builds the vocabulary from train_id, fits/trains the configured
// model, writes checkpoint + training-history CSV.
TrainArtifacts cmd_train(const config::RunConfig& config, const fs::path& dataset_dir,
                         const fs::path& checkpoint_path, const fs::path& history_csv);

// score: applies the checkpointed model to one split, writing a scores CSV
// (request_id,label,length,log_prob,perplexity). Requests longer than
// max_len are truncated first.
void cmd_score(const config::RunConfig& config, const fs::path& checkpoint_path,
               const fs::path& split_dir, const fs::path& out_csv);

// calibrate: threshold file (behavior,threshold,val_f_score) from the ID
// scores and one or more OOD score CSVs. Several OOD files pool their scores
// into a single deployment-style threshold.
detect::ThresholdModel cmd_calibrate(const fs::path& id_scores_csv,
                                     const std::vector<fs::path>& ood_scores_csvs,
                                     const std::string& behavior, const fs::path& out_csv,
                                     std::uint64_t seed);

// detect: metrics CSV + ROC CSV from a threshold file and two test score CSVs.
detect::MetricsReport cmd_detect(const fs::path& threshold_csv, const fs::path& id_scores_csv,
                                 const fs::path& ood_scores_csv, const fs::path& metrics_csv,
                                 const fs::path& roc_csv, std::uint64_t seed);

// inject-delay: delay curve CSV for the first request of a split.
void cmd_inject_delay(const config::RunConfig& config, const fs::path& checkpoint_path,
                      const fs::path& split_dir, const fs::path& out_csv);

// report: merged Table-III-style CSV across models x behaviors. Expects the
// run-directory convention produced by the pipeline:
//   scores/<model>/test_id.csv, scores/<model>/test_<behavior>.csv,
//   thresholds/<model>/<behavior>.csv
void cmd_report(const fs::path& run_dir, const std::vector<std::string>& models,
                const std::vector<std::string>& behaviors, const fs::path& out_csv,
                std::uint64_t seed);

std::vector<double> scores_from_csv(const fs::path& csv_path);
detect::ThresholdModel threshold_from_csv(const fs::path& csv_path);

}  // namespace tracelm::pipeline
