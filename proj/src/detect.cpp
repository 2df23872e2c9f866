#include "tracelm/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "tracelm/rng.hpp"

namespace tracelm::detect {

double sequence_log_prob(const lm::LanguageModel& model, const trace::Request& request) {
  const std::vector<double> lps = model.target_log_probs(request);
  double total = 0.0;
  for (double lp : lps) total += lp;
  return total;
}

NoveltyScore perplexity(const lm::LanguageModel& model, const trace::Request& request,
                        const std::string& request_id) {
  if (request.events.empty()) throw std::invalid_argument("perplexity: empty request");
  NoveltyScore score;
  score.request_id = request_id;
  score.label = request.label;
  score.length = request.events.size();
  score.log_prob = sequence_log_prob(model, request);
  score.perplexity = std::exp(-score.log_prob / static_cast<double>(score.length));
  return score;
}

std::vector<NoveltyScore> score_requests(const lm::LanguageModel& model,
                                         const std::vector<trace::Request>& requests,
                                         std::size_t workers) {
  if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, requests.size());
  std::vector<NoveltyScore> scores(requests.size());
  auto run = [&](std::size_t worker) {
    for (std::size_t i = worker; i < requests.size(); i += workers)
      scores[i] = perplexity(model, requests[i], std::to_string(i));
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  return scores;
}

double f_score_from_counts(long tp, long fp, long fn) {
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

ThresholdModel calibrate_threshold(const std::vector<double>& id_scores,
                                   const std::vector<double>& ood_scores,
                                   const std::string& behavior) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("calibrate_threshold: empty score list");

  std::vector<double> merged = id_scores;
  merged.insert(merged.end(), ood_scores.begin(), ood_scores.end());
  std::sort(merged.begin(), merged.end());

  std::vector<double> candidates;
  candidates.push_back(merged.front() - 1.0);
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    if (merged[i] != merged[i + 1]) candidates.push_back(0.5 * (merged[i] + merged[i + 1]));
  }
  candidates.push_back(merged.back() + 1.0);

  std::vector<double> id_sorted = id_scores;
  std::vector<double> ood_sorted = ood_scores;
  std::sort(id_sorted.begin(), id_sorted.end());
  std::sort(ood_sorted.begin(), ood_sorted.end());
  const auto count_ge = [](const std::vector<double>& sorted, double threshold) {
    return static_cast<long>(sorted.end() -
                             std::lower_bound(sorted.begin(), sorted.end(), threshold));
  };

  ThresholdModel best;
  best.behavior = behavior;
  best.threshold = candidates.front();
  best.val_f_score = -1.0;
  for (double threshold : candidates) {
    const long tp = count_ge(ood_sorted, threshold);
    const long fp = count_ge(id_sorted, threshold);
    const long fn = static_cast<long>(ood_sorted.size()) - tp;
    const double f = f_score_from_counts(tp, fp, fn);
    if (f > best.val_f_score) {  // ties keep the smallest threshold
      best.val_f_score = f;
      best.threshold = threshold;
    }
  }
  return best;
}

AurocResult auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("auroc: empty score list");

  // Mann-Whitney via average ranks over the pooled sample.
  struct Tagged {
    double score;
    bool ood;
  };
  std::vector<Tagged> pooled;
  pooled.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) pooled.push_back({s, false});
  for (double s : ood_scores) pooled.push_back({s, true});
  std::sort(pooled.begin(), pooled.end(),
            [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  const double n_id = static_cast<double>(id_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  double rank_sum_ood = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].score == pooled[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].ood) rank_sum_ood += avg_rank;
    i = j;
  }
  const double u = rank_sum_ood - n_ood * (n_ood + 1.0) / 2.0;
  const double mann_whitney = u / (n_id * n_ood);

  // Threshold sweep (classify score >= threshold as novelty), descending.
  AurocResult result;
  result.roc.push_back({pooled.back().score + 1.0, 0.0, 0.0});
  long tp = 0, fp = 0;
  std::size_t k = pooled.size();
  while (k > 0) {
    std::size_t j = k;
    const double value = pooled[k - 1].score;
    while (j > 0 && pooled[j - 1].score == value) {
      if (pooled[j - 1].ood) ++tp;
      else ++fp;
      --j;
    }
    result.roc.push_back({value, static_cast<double>(fp) / n_id, static_cast<double>(tp) / n_ood});
    k = j;
  }

  double area = 0.0;
  for (std::size_t p = 1; p < result.roc.size(); ++p) {
    const auto& a = result.roc[p - 1];
    const auto& b = result.roc[p];
    area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  if (std::abs(area - mann_whitney) > 1e-9)
    throw std::logic_error("auroc: sweep area and rank statistic disagree");
  result.auroc = mann_whitney;
  return result;
}

MetricsReport metrics_from_scores(const ThresholdModel& tm, const std::vector<double>& id_scores,
                                  const std::vector<double>& ood_scores) {
  if (id_scores.empty() || ood_scores.empty())
    throw std::invalid_argument("metrics_from_scores: empty score list");
  MetricsReport report;
  for (double s : ood_scores)
    classify(s, tm) == Decision::novelty ? ++report.tp : ++report.fn;
  for (double s : id_scores)
    classify(s, tm) == Decision::novelty ? ++report.fp : ++report.tn;
  report.precision =
      report.tp + report.fp > 0 ? static_cast<double>(report.tp) / (report.tp + report.fp) : 0.0;
  report.recall =
      report.tp + report.fn > 0 ? static_cast<double>(report.tp) / (report.tp + report.fn) : 0.0;
  report.f_score = f_score_from_counts(report.tp, report.fp, report.fn);
  AurocResult roc = auroc(id_scores, ood_scores);
  report.auroc = roc.auroc;
  report.roc = std::move(roc.roc);
  return report;
}

MetricsReport evaluate_detection(const lm::LanguageModel& model, const ThresholdModel& tm,
                                 const std::vector<trace::Request>& id_test,
                                 const std::vector<trace::Request>& ood_test) {
  if (id_test.empty() || ood_test.empty())
    throw std::invalid_argument("evaluate_detection: empty test split");
  std::vector<double> id_scores, ood_scores;
  id_scores.reserve(id_test.size());
  ood_scores.reserve(ood_test.size());
  for (const auto& s : score_requests(model, id_test)) id_scores.push_back(s.perplexity);
  for (const auto& s : score_requests(model, ood_test)) ood_scores.push_back(s.perplexity);
  return metrics_from_scores(tm, id_scores, ood_scores);
}

DelayCurve inject_delays(const lm::LanguageModel& model, const trace::Request& request,
                         const std::vector<double>& delays_ns,
                         const std::vector<std::size_t>& positions) {
  if (positions.empty()) throw std::invalid_argument("inject_delays: no positions");
  for (std::size_t p : positions)
    if (p >= request.events.size()) throw std::invalid_argument("inject_delays: position out of range");
  for (double d : delays_ns)
    if (d < 0.0) throw std::invalid_argument("inject_delays: negative delay");

  DelayCurve curve;
  curve.baseline_pp = perplexity(model, request).perplexity;

  trace::Request copy = request;
  for (double delay : delays_ns) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t position : positions) {
      const std::int64_t original = copy.deltas_ns[position];
      copy.deltas_ns[position] = original + static_cast<std::int64_t>(std::llround(delay));
      const double pp = perplexity(model, copy).perplexity;
      copy.deltas_ns[position] = original;
      sum += pp;
      sum_sq += pp * pp;
    }
    const double n = static_cast<double>(positions.size());
    const double mean = sum / n;
    const double variance = std::max(0.0, sum_sq / n - mean * mean);
    curve.points.push_back({delay, mean, std::sqrt(variance)});
  }
  return curve;
}

std::vector<double> log_spaced_delays(double min_ns, double max_ns, std::size_t count) {
  if (count < 2 || min_ns <= 0.0 || max_ns <= min_ns)
    throw std::invalid_argument("log_spaced_delays: need count >= 2 and 0 < min < max");
  std::vector<double> delays(count);
  const double log_min = std::log(min_ns);
  const double log_max = std::log(max_ns);
  for (std::size_t i = 0; i < count; ++i)
    delays[i] = std::exp(log_min + (log_max - log_min) * static_cast<double>(i) /
                                       static_cast<double>(count - 1));
  return delays;
}

std::vector<std::size_t> sample_positions(std::size_t request_length, std::size_t count,
                                          std::uint64_t seed) {
  if (request_length < 3) throw std::invalid_argument("sample_positions: request too short");
  Rng rng(seed);
  std::vector<std::size_t> positions(count);
  for (auto& p : positions) p = 1 + static_cast<std::size_t>(rng.below(request_length - 2));
  return positions;
}

}  // namespace tracelm::detect
