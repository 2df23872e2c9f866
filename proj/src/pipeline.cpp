#include "tracelm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "tracelm/csv.hpp"

namespace tracelm::pipeline {

std::vector<trace::Request> load_split(const fs::path& split_dir) {
  const fs::path file = split_dir / "requests.jsonl";
  if (!fs::exists(file)) throw std::runtime_error("missing split file: " + file.string());
  return trace::read_request_file(file);
}

void cmd_synth(const config::RunConfig& config, const fs::path& out_dir) {
  synth::generate_dataset(config.workload(), out_dir);
}

std::size_t cmd_ingest(const fs::path& events_file, const fs::path& out_file,
                       const std::string& label) {
  const auto events = trace::read_event_file(events_file);
  const auto result = trace::delimit_requests(events, label);
  trace::write_request_file(out_file, result.requests);
  return result.dropped_unmatched_enters;
}

namespace {

struct SplitStats {
  std::string split;
  std::size_t count = 0;
  double len_min = 0, len_mean = 0, len_std = 0, len_max = 0;
  double dur_min_ms = 0, dur_mean_ms = 0, dur_std_ms = 0, dur_max_ms = 0;
};

SplitStats stats_for(const std::string& name, const std::vector<trace::Request>& requests) {
  SplitStats s;
  s.split = name;
  s.count = requests.size();
  if (requests.empty()) return s;
  double len_sum = 0, len_sq = 0, dur_sum = 0, dur_sq = 0;
  s.len_min = s.dur_min_ms = std::numeric_limits<double>::infinity();
  for (const auto& r : requests) {
    const double len = static_cast<double>(r.events.size());
    const double dur = static_cast<double>(r.duration_ns) / 1e6;
    len_sum += len;
    len_sq += len * len;
    dur_sum += dur;
    dur_sq += dur * dur;
    s.len_min = std::min(s.len_min, len);
    s.len_max = std::max(s.len_max, len);
    s.dur_min_ms = std::min(s.dur_min_ms, dur);
    s.dur_max_ms = std::max(s.dur_max_ms, dur);
  }
  const double n = static_cast<double>(requests.size());
  s.len_mean = len_sum / n;
  s.len_std = std::sqrt(std::max(0.0, len_sq / n - s.len_mean * s.len_mean));
  s.dur_mean_ms = dur_sum / n;
  s.dur_std_ms = std::sqrt(std::max(0.0, dur_sq / n - s.dur_mean_ms * s.dur_mean_ms));
  return s;
}

}  // namespace

void cmd_stats(const fs::path& dataset_dir, const fs::path& out_csv, std::uint64_t seed) {
  std::vector<std::string> splits;
  for (const auto& entry : fs::directory_iterator(dataset_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "requests.jsonl"))
      splits.push_back(entry.path().filename().string());
  if (splits.empty()) throw std::runtime_error("no split directories under " + dataset_dir.string());
  std::sort(splits.begin(), splits.end());

  csv::Writer writer(out_csv, seed,
                     {"split", "count", "len_min", "len_mean", "len_std", "len_max", "dur_min_ms",
                      "dur_mean_ms", "dur_std_ms", "dur_max_ms"});
  for (const auto& split : splits) {
    const SplitStats s = stats_for(split, load_split(dataset_dir / split));
    writer.row({s.split, std::to_string(s.count), csv::format_double(s.len_min),
                csv::format_double(s.len_mean), csv::format_double(s.len_std),
                csv::format_double(s.len_max), csv::format_double(s.dur_min_ms),
                csv::format_double(s.dur_mean_ms), csv::format_double(s.dur_std_ms),
                csv::format_double(s.dur_max_ms)});
  }
  writer.finish();
}

TrainArtifacts cmd_train(const config::RunConfig& config, const fs::path& dataset_dir,
                         const fs::path& checkpoint_path, const fs::path& history_csv) {
  const auto train_requests = load_split(dataset_dir / "train_id");
  const auto val_requests = load_split(dataset_dir / "val_id");
  if (train_requests.empty()) throw std::runtime_error("train_id split is empty");

  const encode::Vocabulary vocab = encode::build_vocab(train_requests, config.min_count);

  TrainArtifacts artifacts;
  artifacts.checkpoint = checkpoint_path;
  artifacts.history_csv = history_csv;

  if (config.arch == lm::Arch::ngram) {
    lm::NgramModel model(config.ngram_n, config.ngram_alpha, vocab.name.size());
    model.fit(train_requests, vocab);
    ckpt::save_checkpoint(checkpoint_path, lm::to_checkpoint(model, vocab, config.seed));
    // The count model has no training trajectory; emit an empty history.
    csv::Writer writer(history_csv, config.seed,
                       {"epoch", "step", "train_ce", "val_ce", "val_acc", "lr"});
    writer.finish();
    return artifacts;
  }

  const lm::ModelSpec spec = config.model_spec(vocab);
  const encode::NumericEncoder encoder(spec.encode_dim);
  auto encode_all = [&](const std::vector<trace::Request>& requests) {
    std::vector<encode::EncodedRequest> encoded;
    encoded.reserve(requests.size());
    for (const auto& r : requests) {
      const trace::Request truncated = trace::truncate_request(r, config.max_len);
      encoded.push_back(encode::encode_request(truncated, vocab, encoder));
    }
    return encoded;
  };
  const auto train_enc = encode_all(train_requests);
  const auto val_enc = encode_all(val_requests);

  const lm::TrainResult result = lm::train(spec, train_enc, val_enc, config.train);
  artifacts.best_val_ce = result.best_val_ce;

  ckpt::save_checkpoint(checkpoint_path, lm::to_checkpoint(spec, result.params, vocab, config.seed));
  csv::Writer writer(history_csv, config.seed,
                     {"epoch", "step", "train_ce", "val_ce", "val_acc", "lr"});
  for (const auto& row : result.history)
    writer.row({std::to_string(row.epoch), std::to_string(row.step),
                csv::format_double(row.train_ce), csv::format_double(row.val_ce),
                csv::format_double(row.val_acc), csv::format_double(row.lr)});
  writer.finish();
  return artifacts;
}

void cmd_score(const config::RunConfig& config, const fs::path& checkpoint_path,
               const fs::path& split_dir, const fs::path& out_csv) {
  const auto checkpoint = ckpt::load_checkpoint(checkpoint_path);
  const auto model = lm::scorer_from_checkpoint(checkpoint);
  auto requests = load_split(split_dir);
  for (auto& r : requests) r = trace::truncate_request(r, config.max_len);
  const auto scores = detect::score_requests(*model, requests, config.score_workers);

  csv::Writer writer(out_csv, config.seed,
                     {"request_id", "label", "length", "log_prob", "perplexity"});
  for (const auto& s : scores)
    writer.row({s.request_id, s.label, std::to_string(s.length), csv::format_double(s.log_prob),
                csv::format_double(s.perplexity)});
  writer.finish();
}

std::vector<double> scores_from_csv(const fs::path& csv_path) {
  const csv::Table table = csv::read_csv(csv_path);
  const std::size_t col = table.column_index("perplexity");
  std::vector<double> scores;
  scores.reserve(table.rows.size());
  for (const auto& row : table.rows) scores.push_back(std::stod(row[col]));
  return scores;
}

detect::ThresholdModel threshold_from_csv(const fs::path& csv_path) {
  const csv::Table table = csv::read_csv(csv_path);
  if (table.rows.size() != 1) throw std::runtime_error("threshold file must have one row");
  detect::ThresholdModel tm;
  tm.behavior = table.rows[0][table.column_index("behavior")];
  tm.threshold = std::stod(table.rows[0][table.column_index("threshold")]);
  tm.val_f_score = std::stod(table.rows[0][table.column_index("val_f_score")]);
  return tm;
}

detect::ThresholdModel cmd_calibrate(const fs::path& id_scores_csv,
                                     const std::vector<fs::path>& ood_scores_csvs,
                                     const std::string& behavior, const fs::path& out_csv,
                                     std::uint64_t seed) {
  const auto id_scores = scores_from_csv(id_scores_csv);
  std::vector<double> ood_scores;
  for (const auto& path : ood_scores_csvs) {
    const auto part = scores_from_csv(path);
    ood_scores.insert(ood_scores.end(), part.begin(), part.end());
  }
  const detect::ThresholdModel tm = detect::calibrate_threshold(id_scores, ood_scores, behavior);
  csv::Writer writer(out_csv, seed, {"behavior", "threshold", "val_f_score"});
  writer.row({tm.behavior, csv::format_double(tm.threshold), csv::format_double(tm.val_f_score)});
  writer.finish();
  return tm;
}

detect::MetricsReport cmd_detect(const fs::path& threshold_csv, const fs::path& id_scores_csv,
                                 const fs::path& ood_scores_csv, const fs::path& metrics_csv,
                                 const fs::path& roc_csv, std::uint64_t seed) {
  const detect::ThresholdModel tm = threshold_from_csv(threshold_csv);
  const auto id_scores = scores_from_csv(id_scores_csv);
  const auto ood_scores = scores_from_csv(ood_scores_csv);
  const detect::MetricsReport report = detect::metrics_from_scores(tm, id_scores, ood_scores);

  csv::Writer metrics(metrics_csv, seed,
                      {"behavior", "threshold", "precision", "recall", "f_score", "auroc", "tp",
                       "fp", "tn", "fn"});
  metrics.row({tm.behavior, csv::format_double(tm.threshold), csv::format_double(report.precision),
               csv::format_double(report.recall), csv::format_double(report.f_score),
               csv::format_double(report.auroc), std::to_string(report.tp),
               std::to_string(report.fp), std::to_string(report.tn), std::to_string(report.fn)});
  metrics.finish();

  csv::Writer roc(roc_csv, seed, {"threshold", "fpr", "tpr"});
  for (const auto& point : report.roc)
    roc.row({csv::format_double(point.threshold), csv::format_double(point.fpr),
             csv::format_double(point.tpr)});
  roc.finish();
  return report;
}

void cmd_inject_delay(const config::RunConfig& config, const fs::path& checkpoint_path,
                      const fs::path& split_dir, const fs::path& out_csv) {
  const auto checkpoint = ckpt::load_checkpoint(checkpoint_path);
  const auto model = lm::scorer_from_checkpoint(checkpoint);
  const auto requests = load_split(split_dir);
  if (requests.empty()) throw std::runtime_error("inject-delay: empty split");
  const trace::Request request = trace::truncate_request(requests.front(), config.max_len);

  const auto delays = detect::log_spaced_delays(config.inject_delay_min_ns,
                                                config.inject_delay_max_ns,
                                                config.inject_delay_count);
  const auto positions = detect::sample_positions(request.events.size(),
                                                  config.inject_position_count,
                                                  Rng::derive(config.seed, "inject.positions"));
  const detect::DelayCurve curve = detect::inject_delays(*model, request, delays, positions);

  csv::Writer writer(out_csv, config.seed, {"delay_ns", "mean_pp", "std_pp", "baseline_pp"});
  for (const auto& point : curve.points)
    writer.row({csv::format_double(point.delay_ns), csv::format_double(point.mean_pp),
                csv::format_double(point.std_pp), csv::format_double(curve.baseline_pp)});
  writer.finish();
}

void cmd_report(const fs::path& run_dir, const std::vector<std::string>& models,
                const std::vector<std::string>& behaviors, const fs::path& out_csv,
                std::uint64_t seed) {
  csv::Writer writer(out_csv, seed,
                     {"model", "behavior", "threshold", "precision", "recall", "f_score", "auroc"});
  for (const auto& model : models) {
    const fs::path id_csv = run_dir / "scores" / model / "test_id.csv";
    const auto id_scores = scores_from_csv(id_csv);
    for (const auto& behavior : behaviors) {
      const auto ood_scores =
          scores_from_csv(run_dir / "scores" / model / ("test_" + behavior + ".csv"));
      const detect::ThresholdModel tm =
          threshold_from_csv(run_dir / "thresholds" / model / (behavior + ".csv"));
      const detect::MetricsReport report = detect::metrics_from_scores(tm, id_scores, ood_scores);
      writer.row({model, behavior, csv::format_double(tm.threshold),
                  csv::format_double(report.precision), csv::format_double(report.recall),
                  csv::format_double(report.f_score), csv::format_double(report.auroc)});
    }
  }
  writer.finish();
}

}  // namespace tracelm::pipeline
