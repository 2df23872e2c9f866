#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tracelm/scoring.hpp"
#include "tracelm/trace.hpp"

namespace tracelm::detect {

struct NoveltyScore {
  std::string request_id;
  std::string label;
  std::size_t length = 0;
  double log_prob = 0.0;    // natural-log joint probability
  double perplexity = 0.0;  // exp(-log_prob / length)
};

// Sum of ln P(w_i | w_<i}); computed in log space throughout. A zero
// conditional (possible only for the unsmoothed n-gram) yields -infinity.
double sequence_log_prob(const lm::LanguageModel& model, const trace::Request& request);

NoveltyScore perplexity(const lm::LanguageModel& model, const trace::Request& request,
                        const std::string& request_id = "");

// Scores a batch; output order matches input order regardless of the worker
// count, so results are deterministic.
std::vector<NoveltyScore> score_requests(const lm::LanguageModel& model,
                                         const std::vector<trace::Request>& requests,
                                         std::size_t workers = 0);

struct ThresholdModel {
  double threshold = 0.0;
  std::string behavior;
  double val_f_score = 0.0;
};

// Candidate thresholds are the midpoints between adjacent values of the
// merged sorted score list plus one below the minimum and one above the
// maximum. Scores >= threshold classify as novelty (the positive class).
// Returns the smallest threshold maximizing the F-score.
ThresholdModel calibrate_threshold(const std::vector<double>& id_scores,
                                   const std::vector<double>& ood_scores,
                                   const std::string& behavior = "");

enum class Decision { in_distribution, novelty };

inline Decision classify(double score, const ThresholdModel& tm) {
  return score >= tm.threshold ? Decision::novelty : Decision::in_distribution;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct AurocResult {
  double auroc = 0.0;  // P(ood > id) + 0.5 P(ood == id)
  std::vector<RocPoint> roc;
};

// Mann-Whitney statistic plus the ROC point list from a threshold sweep;
// the trapezoidal area under the sweep must agree with the rank statistic
// to 1e-9 or the call throws.
AurocResult auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  double auroc = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<RocPoint> roc;
};

double f_score_from_counts(long tp, long fp, long fn);

MetricsReport metrics_from_scores(const ThresholdModel& tm, const std::vector<double>& id_scores,
                                  const std::vector<double>& ood_scores);

// Scores both test splits with the model and applies the validation
// threshold unchanged.
MetricsReport evaluate_detection(const lm::LanguageModel& model, const ThresholdModel& tm,
                                 const std::vector<trace::Request>& id_test,
                                 const std::vector<trace::Request>& ood_test);

struct DelayPoint {
  double delay_ns = 0.0;
  double mean_pp = 0.0;
  double std_pp = 0.0;
};

struct DelayCurve {
  double baseline_pp = 0.0;
  std::vector<DelayPoint> points;
};

// For each delay, re-scores one copy of the request per position with
// deltas_ns[position] += delay and reports mean/stddev perplexity.
DelayCurve inject_delays(const lm::LanguageModel& model, const trace::Request& request,
                         const std::vector<double>& delays_ns,
                         const std::vector<std::size_t>& positions);

std::vector<double> log_spaced_delays(double min_ns, double max_ns, std::size_t count);

// Positions drawn uniformly (with replacement) from [1, N-2]: index 0 must
// keep delta 0 and the last event's representation row is never consumed by
// a next-token prediction.
std::vector<std::size_t> sample_positions(std::size_t request_length, std::size_t count,
                                          std::uint64_t seed);

}  // namespace tracelm::detect
