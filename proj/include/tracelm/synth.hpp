#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tracelm/rng.hpp"
#include "tracelm/trace.hpp"

namespace tracelm::synth {

struct Categorical {
  std::vector<std::string> values;
  std::vector<double> probs;
};

struct CategoricalInt {
  std::vector<std::int64_t> values;
  std::vector<double> probs;
};

struct LengthDist {
  double mean = 64.0;
  double stddev = 16.0;
  std::size_t min = 1;
  std::size_t max = 2048;
};

// Ground-truth generating process for one behavior: an order-1 Markov chain
// over synthetic syscall names with per-state lognormal inter-event gaps.
struct BehaviorSpec {
  std::string name;
  std::vector<std::string> alphabet;
  Eigen::MatrixXd transition;  // row-stochastic, row = from-state
  Eigen::VectorXd initial;
  std::vector<std::pair<double, double>> delta_lognormal;  // (mu, sigma) in ln(ns), per state
  LengthDist length;
  Categorical procname_dist;
  CategoricalInt ret_dist;

  std::size_t state_count() const { return alphabet.size(); }
  void validate() const;  // throws std::invalid_argument on violation
};

struct WorkloadConfig {
  BehaviorSpec id_behavior;
  std::vector<BehaviorSpec> ood_behaviors;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  std::size_t test_count = 0;
  std::size_t ood_val_count = 0;
  std::size_t ood_test_count = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Draws one request: length from the clamped normal length distribution, a
// Markov walk for names, cumulative lognormal gaps for timestamps. The gap
// before an event is drawn from the distribution of the state being entered.
trace::Request generate_request(const BehaviorSpec& spec, Rng& rng);

std::vector<trace::Request> generate_requests(const BehaviorSpec& spec, std::size_t count, Rng& rng);

// Writes train_id/, val_id/, test_id/ and val_<b>/, test_<b>/ directories,
// one requests.jsonl per split, plus a manifest.json recording the seed.
// Byte-identical for identical (config, seed).
void generate_dataset(const WorkloadConfig& config, const std::filesystem::path& out_dir);

// Stationary distribution of a row-stochastic matrix via direct linear solve.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

// Entropy rate in bits/token: -sum_s pi_s sum_t T[s,t] log2 T[s,t].
// Throws if the chain is not irreducible.
double analytic_entropy_rate(const BehaviorSpec& spec);

// Knobs for the bundled synthetic workload. The ID chain gets a guaranteed
// strongly-connected structure, per-state gap medians log-spaced over
// [gap_mu_min_ns, gap_mu_max_ns], and each syscall name shared by
// alias_group_size states staggered across the gap scale. Shared names make
// the inter-event time genuinely informative for next-name prediction, so
// latency shifts are detectable by models that read it. alias_group_size 1
// keeps names and states one-to-one (the setting the entropy-rate oracle
// assumes).
struct SynthParams {
  std::size_t alphabet_size = 24;
  std::size_t out_degree = 3;
  std::size_t alias_group_size = 3;
  double fast_bias = 0.93;  // successor-rank weight ~ fast_bias^rank
  double self_loop = 0.05;
  double ring_mass = 0.10;
  double gap_mu_min_ns = 200.0;
  double gap_mu_max_ns = 1500000.0;
  double gap_sigma = 0.35;
  LengthDist length{48.0, 12.0, 8, 256};
  double latency_scale = 10.0;
  double mixture_beta = 0.5;
  double length_scale = 2.0;
};

BehaviorSpec make_id_behavior(const SynthParams& params, std::uint64_t seed);
// Gap distributions scaled by `scale` (mu shifted by ln(scale)); names unchanged.
BehaviorSpec make_latency_variant(const BehaviorSpec& id_spec, double scale);
// Transition rows blended toward the two least-visited names, shifting the
// name mixture the way a logging-storm behavior would.
BehaviorSpec make_mixture_variant(const BehaviorSpec& id_spec, double beta);
// Request lengths scaled; the chain itself is untouched.
BehaviorSpec make_length_variant(const BehaviorSpec& id_spec, double scale);

}  // namespace tracelm::synth
