#include <doctest.h>

#include <cmath>

#include "tracelm/detect.hpp"
#include "tracelm/rng.hpp"

using namespace tracelm;
using detect::ThresholdModel;

namespace {

// Stub model emitting a fixed conditional for every target position.
class ConstantModel : public lm::LanguageModel {
 public:
  ConstantModel(double p, int vocab) : p_(p), vocab_(vocab) {
    std::vector<trace::Request> seed_corpus;
    trace::Request r;
    trace::SyscallEvent e;
    e.name = "x";
    e.procname = "p";
    r.events.push_back(e);
    trace::compute_deltas(r);
    seed_corpus.push_back(r);
    vocab_obj_ = encode::build_vocab(seed_corpus, 1);
  }
  std::string arch_name() const override { return "constant"; }
  int name_vocab_size() const override { return vocab_; }
  const encode::Vocabulary& vocabulary() const override { return vocab_obj_; }
  Eigen::MatrixXd conditionals(const trace::Request& request) const override {
    const auto n = static_cast<Eigen::Index>(request.events.size());
    Eigen::MatrixXd rows(n, vocab_);
    rows.setConstant((1.0 - p_) / (vocab_ - 1));
    rows.col(0).setConstant(p_);
    return rows;
  }
  std::vector<double> target_log_probs(const trace::Request& request) const override {
    return std::vector<double>(request.events.size(), std::log(p_));
  }

 private:
  double p_;
  int vocab_;
  encode::Vocabulary vocab_obj_;
};

trace::Request request_of_length(std::size_t n) {
  trace::Request r;
  for (std::size_t i = 0; i < n; ++i) {
    trace::SyscallEvent e;
    e.name = "x";
    e.ts_ns = static_cast<std::int64_t>(i * 100);
    e.procname = "p";
    r.events.push_back(e);
  }
  trace::compute_deltas(r);
  return r;
}

// O(candidates x scores) reference: every midpoint plus sentinels, full
// confusion matrix per candidate.
ThresholdModel brute_force_calibrate(const std::vector<double>& id_scores,
                                     const std::vector<double>& ood_scores) {
  std::vector<double> merged = id_scores;
  merged.insert(merged.end(), ood_scores.begin(), ood_scores.end());
  std::sort(merged.begin(), merged.end());
  std::vector<double> candidates{merged.front() - 1.0};
  for (std::size_t i = 0; i + 1 < merged.size(); ++i)
    if (merged[i] != merged[i + 1]) candidates.push_back((merged[i] + merged[i + 1]) / 2.0);
  candidates.push_back(merged.back() + 1.0);

  ThresholdModel best;
  best.val_f_score = -1.0;
  for (double threshold : candidates) {
    long tp = 0, fp = 0, fn = 0;
    for (double s : ood_scores) (s >= threshold ? tp : fn)++;
    for (double s : id_scores)
      if (s >= threshold) ++fp;
    const double f = detect::f_score_from_counts(tp, fp, fn);
    if (f > best.val_f_score) {
      best.val_f_score = f;
      best.threshold = threshold;
    }
  }
  return best;
}

double pairwise_auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
  double wins = 0.0;
  for (double o : ood_scores)
    for (double i : id_scores) {
      if (o > i) wins += 1.0;
      else if (o == i) wins += 0.5;
    }
  return wins / (static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size()));
}

}  // namespace

TEST_SUITE("detect") {

TEST_CASE("joint probability follows the chain rule at 0.95 per token") {
  const ConstantModel model(0.95, 10);
  CHECK(std::exp(detect::sequence_log_prob(model, request_of_length(16))) ==
        doctest::Approx(0.44012666865176536).epsilon(1e-9));
  CHECK(std::exp(detect::sequence_log_prob(model, request_of_length(24))) ==
        doctest::Approx(0.2919890243387724).epsilon(1e-9));
  // single token: exactly ln p
  CHECK(detect::sequence_log_prob(model, request_of_length(1)) ==
        doctest::Approx(std::log(0.95)).epsilon(1e-15));
}

TEST_CASE("perplexity is length-normalized") {
  const ConstantModel model(0.95, 10);
  const auto pp16 = detect::perplexity(model, request_of_length(16));
  const auto pp24 = detect::perplexity(model, request_of_length(24));
  CHECK(pp16.perplexity == doctest::Approx(1.0 / 0.95).epsilon(1e-9));
  CHECK(pp24.perplexity == doctest::Approx(1.0 / 0.95).epsilon(1e-9));
  CHECK(std::abs(pp16.perplexity - pp24.perplexity) < 1e-12);
  // invariant: perplexity == exp(-log_prob / N)
  CHECK(pp16.perplexity == doctest::Approx(std::exp(-pp16.log_prob / 16.0)).epsilon(1e-12));
}

TEST_CASE("uniform model has perplexity V; entropy bases agree") {
  const int v_size = 12;
  const ConstantModel model(1.0 / v_size, v_size);
  for (std::size_t n : {1, 5, 32}) {
    const auto score = detect::perplexity(model, request_of_length(n));
    CHECK(score.perplexity == doctest::Approx(static_cast<double>(v_size)).epsilon(1e-12));
    // 2^(-(1/N) log2 P) must equal exp(-(1/N) ln P)
    const double h_bits = -score.log_prob / std::log(2.0) / static_cast<double>(n);
    CHECK(std::pow(2.0, h_bits) == doctest::Approx(score.perplexity).epsilon(1e-9));
  }
}

TEST_CASE("hand-built conditionals give PP = 4") {
  class Half : public ConstantModel {
   public:
    Half() : ConstantModel(0.5, 4) {}
    std::vector<double> target_log_probs(const trace::Request&) const override {
      return {std::log(0.5), std::log(0.25), std::log(0.125)};
    }
  };
  const Half model;
  const auto score = detect::perplexity(model, request_of_length(3));
  CHECK(score.perplexity == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("zero conditional propagates to +inf perplexity") {
  class Zero : public ConstantModel {
   public:
    Zero() : ConstantModel(0.5, 4) {}
    std::vector<double> target_log_probs(const trace::Request& r) const override {
      return std::vector<double>(r.events.size(), -std::numeric_limits<double>::infinity());
    }
  };
  const Zero model;
  const auto score = detect::perplexity(model, request_of_length(3));
  CHECK(std::isinf(score.perplexity));
  CHECK(score.perplexity > 0);
}

TEST_CASE("calibrate_threshold on the separable example") {
  const ThresholdModel tm = detect::calibrate_threshold({1.0, 1.1, 1.2}, {2.0, 2.1}, "b");
  CHECK(tm.threshold == doctest::Approx(1.6));
  CHECK(tm.val_f_score == 1.0);
  CHECK(tm.behavior == "b");
}

TEST_CASE("identical score lists give the degenerate all-positive threshold") {
  const std::vector<double> scores = {1.0, 2.0, 3.0};
  const ThresholdModel tm = detect::calibrate_threshold(scores, scores);
  const double p = 0.5;  // |OOD| / (|OOD| + |ID|)
  CHECK(tm.val_f_score == doctest::Approx(2.0 * p / (1.0 + p)).epsilon(1e-12));
  CHECK(tm.threshold == doctest::Approx(0.0));  // min - 1: everything positive
}

TEST_CASE("interleaved scores: F = 0.8 at a threshold in (1,2]") {
  const ThresholdModel tm = detect::calibrate_threshold({1.0, 3.0}, {2.0, 4.0});
  CHECK(tm.val_f_score == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(tm.threshold > 1.0);
  CHECK(tm.threshold <= 2.0);
}

TEST_CASE("calibration equals the brute-force scan on random score sets") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> id_scores(5 + rng.below(20));
    std::vector<double> ood_scores(5 + rng.below(20));
    for (auto& s : id_scores) s = std::round(rng.uniform(0.0, 10.0) * 4.0) / 4.0;  // force ties
    for (auto& s : ood_scores) s = std::round(rng.uniform(2.0, 12.0) * 4.0) / 4.0;
    const ThresholdModel fast = detect::calibrate_threshold(id_scores, ood_scores);
    const ThresholdModel slow = brute_force_calibrate(id_scores, ood_scores);
    CHECK(fast.threshold == slow.threshold);
    CHECK(fast.val_f_score == slow.val_f_score);
  }
}

TEST_CASE("classification boundary is inclusive and scale-invariant") {
  ThresholdModel tm;
  tm.threshold = 2.5;
  CHECK(detect::classify(2.5, tm) == detect::Decision::novelty);
  CHECK(detect::classify(2.5 - 1e-9, tm) == detect::Decision::in_distribution);
  CHECK(detect::classify(std::numeric_limits<double>::infinity(), tm) ==
        detect::Decision::novelty);

  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    const double score = rng.uniform(0.0, 5.0);
    const double k = rng.uniform(0.1, 10.0);
    ThresholdModel scaled;
    scaled.threshold = tm.threshold * k;
    CHECK(detect::classify(score, tm) == detect::classify(score * k, scaled));
  }
}

TEST_CASE("auroc trivial cases") {
  CHECK(detect::auroc({1, 2}, {3, 4}).auroc == 1.0);
  CHECK(detect::auroc({1, 2, 3}, {1, 2, 3}).auroc == 0.5);
  CHECK(detect::auroc({1, 3}, {2, 4}).auroc == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auroc equals pairwise enumeration on random score sets") {
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> id_scores(3 + rng.below(30));
    std::vector<double> ood_scores(3 + rng.below(30));
    for (auto& s : id_scores) s = std::round(rng.uniform(0.0, 8.0) * 2.0) / 2.0;
    for (auto& s : ood_scores) s = std::round(rng.uniform(1.0, 9.0) * 2.0) / 2.0;
    const auto result = detect::auroc(id_scores, ood_scores);
    CHECK(result.auroc == doctest::Approx(pairwise_auroc(id_scores, ood_scores)).epsilon(1e-9));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(31);
  std::vector<double> id_scores(25), ood_scores(25);
  for (auto& s : id_scores) s = rng.uniform(0.5, 4.0);
  for (auto& s : ood_scores) s = rng.uniform(1.0, 6.0);
  const double base = detect::auroc(id_scores, ood_scores).auroc;
  auto apply = [&](auto f) {
    std::vector<double> a = id_scores, b = ood_scores;
    for (auto& s : a) s = f(s);
    for (auto& s : b) s = f(s);
    return detect::auroc(a, b).auroc;
  };
  CHECK(apply([](double s) { return std::log(s); }) == doctest::Approx(base).epsilon(1e-12));
  CHECK(apply([](double s) { return 3.0 * s + 11.0; }) == doctest::Approx(base).epsilon(1e-12));
  CHECK(apply([](double s) { return s * s * s; }) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("roc points run from (0,0) to (1,1) monotonically") {
  Rng rng(37);
  std::vector<double> id_scores(40), ood_scores(40);
  for (auto& s : id_scores) s = std::round(rng.uniform(0.0, 6.0));
  for (auto& s : ood_scores) s = std::round(rng.uniform(2.0, 8.0));
  const auto result = detect::auroc(id_scores, ood_scores);
  REQUIRE(result.roc.size() >= 2);
  CHECK(result.roc.front().fpr == 0.0);
  CHECK(result.roc.front().tpr == 0.0);
  CHECK(result.roc.back().fpr == 1.0);
  CHECK(result.roc.back().tpr == 1.0);
  for (std::size_t i = 1; i < result.roc.size(); ++i) {
    CHECK(result.roc[i].fpr >= result.roc[i - 1].fpr);
    CHECK(result.roc[i].tpr >= result.roc[i - 1].tpr);
  }
}

TEST_CASE("metrics report: confusion counts partition the test sets") {
  ThresholdModel tm;
  tm.threshold = 2.0;
  const std::vector<double> id_scores = {1.0, 1.5, 2.5};
  const std::vector<double> ood_scores = {1.8, 2.0, 3.0, 4.0};
  const auto report = detect::metrics_from_scores(tm, id_scores, ood_scores);
  CHECK(report.tp == 3);
  CHECK(report.fn == 1);
  CHECK(report.fp == 1);
  CHECK(report.tn == 2);
  CHECK(report.tp + report.fp + report.tn + report.fn == 7);
  CHECK(report.precision == doctest::Approx(0.75));
  CHECK(report.recall == doctest::Approx(0.75));
  CHECK(report.f_score == doctest::Approx(0.75));
}

TEST_CASE("f score is 0 when precision + recall is 0") {
  CHECK(detect::f_score_from_counts(0, 0, 5) == 0.0);
  CHECK(detect::f_score_from_counts(0, 3, 0) == 0.0);
}

TEST_CASE("delay injection: zero delay reproduces the baseline exactly") {
  const ConstantModel model(0.9, 8);
  const auto request = request_of_length(20);
  const auto curve = detect::inject_delays(model, request, {0.0, 0.0}, {1, 5, 9});
  for (const auto& point : curve.points) {
    CHECK(point.mean_pp == curve.baseline_pp);
    CHECK(point.std_pp == 0.0);
  }
}

TEST_CASE("delay grid is log-spaced over [1us, 1ms]") {
  const auto delays = detect::log_spaced_delays(1e3, 1e6, 100);
  REQUIRE(delays.size() == 100);
  CHECK(delays.front() == doctest::Approx(1e3));
  CHECK(delays.back() == doctest::Approx(1e6));
  const double ratio = delays[1] / delays[0];
  for (std::size_t i = 2; i < delays.size(); ++i)
    CHECK(delays[i] / delays[i - 1] == doctest::Approx(ratio).epsilon(1e-9));
}

TEST_CASE("sampled positions stay in the scoring-relevant range") {
  const auto positions = detect::sample_positions(48, 100, 5);
  REQUIRE(positions.size() == 100);
  for (auto p : positions) {
    CHECK(p >= 1);
    CHECK(p <= 46);
  }
  CHECK(detect::sample_positions(48, 100, 5) == positions);  // seeded
}

TEST_CASE("score_requests is order-stable and matches sequential scoring") {
  const ConstantModel model(0.9, 8);
  std::vector<trace::Request> requests;
  for (std::size_t n = 1; n <= 40; ++n) requests.push_back(request_of_length(n));
  const auto parallel = detect::score_requests(model, requests, 4);
  const auto sequential = detect::score_requests(model, requests, 1);
  REQUIRE(parallel.size() == requests.size());
  for (std::size_t i = 0; i < parallel.size(); ++i) {
    CHECK(parallel[i].request_id == std::to_string(i));
    CHECK(parallel[i].perplexity == sequential[i].perplexity);
    CHECK(parallel[i].log_prob == sequential[i].log_prob);
    CHECK(parallel[i].length == requests[i].events.size());
  }
}

}  // TEST_SUITE
