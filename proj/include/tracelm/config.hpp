#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "tracelm/synth.hpp"
#include "tracelm/train.hpp"

namespace tracelm::config {

// Fully-defaulted run configuration. Every knob comes from a flat key=value
// file; unknown keys are rejected so experiment manifests stay honest.
struct RunConfig {
  std::uint64_t seed = 42;

  // model.*
  lm::Arch arch = lm::Arch::lstm;
  int layers = 2;
  int width = 64;
  int heads = 4;
  int window = 32;
  int globals = 1;
  int ff_mult = 4;
  int embed_dim = 32;
  int encode_dim = 32;
  int ngram_n = 4;
  double ngram_alpha = 0.1;

  // vocab.*
  int min_count = 1;

  // train.*
  lm::TrainConfig train;

  // detect.*
  std::size_t max_len = 2048;
  std::size_t score_workers = 0;  // 0 = hardware concurrency

  // inject.*
  std::size_t inject_delay_count = 100;
  double inject_delay_min_ns = 1000.0;      // 1 us
  double inject_delay_max_ns = 1000000.0;   // 1 ms
  std::size_t inject_position_count = 100;

  // synth.*
  synth::SynthParams synth;
  std::size_t synth_train_count = 5000;
  std::size_t synth_val_count = 500;
  std::size_t synth_test_count = 500;
  std::size_t synth_ood_val_count = 300;
  std::size_t synth_ood_test_count = 300;
  std::string synth_ood = "latency,mixture,length";

  lm::ModelSpec model_spec(const encode::Vocabulary& vocab) const;
  synth::WorkloadConfig workload() const;
};

// Parses a flat key=value file ('#' comments, blank lines allowed) into a
// fully-defaulted RunConfig. Unknown keys, type errors and out-of-range
// values are reported with the offending key name.
RunConfig validate_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);
RunConfig default_config();

// Applies one key=value override (used for CLI flag overrides).
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace tracelm::config
