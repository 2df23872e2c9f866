#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tracelm/synth.hpp"

using namespace tracelm;
using synth::BehaviorSpec;

namespace {

BehaviorSpec tiny_spec(Eigen::MatrixXd transition, Eigen::VectorXd initial) {
  BehaviorSpec spec;
  spec.name = "tiny";
  const auto n = static_cast<std::size_t>(transition.rows());
  for (std::size_t i = 0; i < n; ++i) spec.alphabet.push_back("s" + std::to_string(i));
  spec.transition = std::move(transition);
  spec.initial = std::move(initial);
  spec.delta_lognormal.assign(n, {std::log(1000.0), 0.3});
  spec.length = {16.0, 0.0, 16, 16};
  spec.procname_dist = {{"p"}, {1.0}};
  spec.ret_dist = {{0}, {1.0}};
  return spec;
}

// Independent route for the stationary vector: plain power iteration. The
// generated chains carry self-loops, so they are aperiodic and the iteration
// converges geometrically.
Eigen::VectorXd power_iteration_stationary(const Eigen::MatrixXd& T, int iters = 5000) {
  const Eigen::Index n = T.rows();
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int i = 0; i < iters; ++i) {
    pi = pi * T;
    pi /= pi.sum();
  }
  return pi.transpose();
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("degenerate single-state chain gives identical names and constant gaps") {
  Eigen::MatrixXd t(1, 1);
  t << 1.0;
  Eigen::VectorXd init(1);
  init << 1.0;
  BehaviorSpec spec = tiny_spec(t, init);
  spec.delta_lognormal = {{std::log(500.0), 0.0}};
  spec.length = {4.0, 0.0, 4, 4};
  Rng rng(1);
  const auto request = synth::generate_request(spec, rng);
  REQUIRE(request.events.size() == 4);
  for (const auto& e : request.events) CHECK(e.name == "s0");
  CHECK(request.deltas_ns == std::vector<std::int64_t>{0, 500, 500, 500});
}

TEST_CASE("permutation chain alternates names strictly") {
  Eigen::MatrixXd t(2, 2);
  t << 0, 1, 1, 0;
  Eigen::VectorXd init(2);
  init << 1.0, 0.0;
  BehaviorSpec spec = tiny_spec(t, init);
  spec.length = {10.0, 0.0, 10, 10};
  Rng rng(2);
  const auto request = synth::generate_request(spec, rng);
  for (std::size_t i = 0; i < request.events.size(); ++i)
    CHECK(request.events[i].name == (i % 2 == 0 ? "s0" : "s1"));
}

TEST_CASE("empirical transition frequencies of a 1e6-token corpus match within 0.005") {
  Eigen::MatrixXd t(3, 3);
  t << 0.7, 0.3, 0.0,
       0.2, 0.5, 0.3,
       0.4, 0.1, 0.5;
  Eigen::VectorXd init(3);
  init << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  BehaviorSpec spec = tiny_spec(t, init);
  spec.length = {2000.0, 0.0, 2000, 2000};
  Rng rng(3);
  std::map<std::pair<std::string, std::string>, double> counts;
  std::map<std::string, double> totals;
  for (int r = 0; r < 500; ++r) {  // 1e6 events
    const auto request = synth::generate_request(spec, rng);
    for (std::size_t i = 1; i < request.events.size(); ++i) {
      ++counts[{request.events[i - 1].name, request.events[i].name}];
      ++totals[request.events[i - 1].name];
    }
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const auto key = std::make_pair("s" + std::to_string(a), "s" + std::to_string(b));
      const double freq = counts[key] / totals[key.first];
      CHECK(std::abs(freq - t(a, b)) < 0.005);
    }
}

TEST_CASE("analytic entropy rate") {
  SUBCASE("permutation chain has zero entropy") {
    Eigen::MatrixXd t(2, 2);
    t << 0, 1, 1, 0;
    Eigen::VectorXd init(2);
    init << 0.5, 0.5;
    CHECK(synth::analytic_entropy_rate(tiny_spec(t, init)) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("uniform two-state chain is one bit") {
    Eigen::MatrixXd t(2, 2);
    t << 0.5, 0.5, 0.5, 0.5;
    Eigen::VectorXd init(2);
    init << 0.5, 0.5;
    CHECK(synth::analytic_entropy_rate(tiny_spec(t, init)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("asymmetric chain matches the frozen closed form") {
    Eigen::MatrixXd t(2, 2);
    t << 0.9, 0.1, 0.2, 0.8;
    Eigen::VectorXd init(2);
    init << 0.5, 0.5;
    // pi = (2/3, 1/3); H = 2/3 H(.9,.1) + 1/3 H(.2,.8)
    CHECK(synth::analytic_entropy_rate(tiny_spec(t, init)) ==
          doctest::Approx(0.5533064273553082).epsilon(1e-12));
  }
  SUBCASE("reducible chain is rejected") {
    Eigen::MatrixXd t(2, 2);
    t << 1.0, 0.0, 0.0, 1.0;
    Eigen::VectorXd init(2);
    init << 0.5, 0.5;
    CHECK_THROWS_AS(synth::analytic_entropy_rate(tiny_spec(t, init)), std::invalid_argument);
  }
}

TEST_CASE("linear-solve stationary distribution agrees with power iteration") {
  const synth::SynthParams params;
  const BehaviorSpec spec = synth::make_id_behavior(params, 99);
  const Eigen::VectorXd direct = synth::stationary_distribution(spec.transition);
  const Eigen::VectorXd iterated = power_iteration_stationary(spec.transition);
  CHECK((direct - iterated).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("generated deltas are non-negative and timestamps increase") {
  const synth::SynthParams params;
  const BehaviorSpec spec = synth::make_id_behavior(params, 5);
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto request = synth::generate_request(spec, rng);
    for (std::size_t j = 0; j < request.deltas_ns.size(); ++j) {
      CHECK(request.deltas_ns[j] >= 0);
      if (j > 0) CHECK(request.events[j].ts_ns > request.events[j - 1].ts_ns);
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  Eigen::MatrixXd t(2, 2);
  t << 0.5, 0.5, 0.5, 0.5;
  Eigen::VectorXd init(2);
  init << 0.5, 0.5;
  SUBCASE("row does not sum to one") {
    BehaviorSpec spec = tiny_spec(t, init);
    spec.transition(0, 0) = 0.6;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
  SUBCASE("negative entry") {
    BehaviorSpec spec = tiny_spec(t, init);
    spec.transition(0, 0) = -0.1;
    spec.transition(0, 1) = 1.1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
  SUBCASE("zero-length requests forbidden") {
    BehaviorSpec spec = tiny_spec(t, init);
    spec.length.min = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
}

TEST_CASE("generate_dataset writes the split layout deterministically") {
  const auto base = std::filesystem::temp_directory_path() / "tracelm_synth_test";
  std::filesystem::remove_all(base);

  synth::SynthParams params;
  params.length = {12.0, 3.0, 4, 32};
  synth::WorkloadConfig config;
  config.seed = 123;
  config.id_behavior = synth::make_id_behavior(params, config.seed);
  config.ood_behaviors = {synth::make_latency_variant(config.id_behavior, 10.0),
                          synth::make_mixture_variant(config.id_behavior, 0.5)};
  config.train_count = 20;
  config.val_count = 5;
  config.test_count = 5;
  config.ood_val_count = 4;
  config.ood_test_count = 4;

  synth::generate_dataset(config, base / "a");
  synth::generate_dataset(config, base / "b");

  const std::vector<std::string> splits = {"train_id", "val_id",       "test_id",
                                           "val_latency", "test_latency", "val_mixture",
                                           "test_mixture"};
  for (const auto& split : splits) {
    const auto fa = base / "a" / split / "requests.jsonl";
    const auto fb = base / "b" / split / "requests.jsonl";
    REQUIRE(std::filesystem::exists(fa));
    CHECK(file_bytes(fa) == file_bytes(fb));  // byte-identical reruns
  }

  // A different seed changes the bytes but keeps the counts.
  synth::WorkloadConfig other = config;
  other.seed = 124;
  other.id_behavior = synth::make_id_behavior(params, other.seed);
  other.ood_behaviors = {synth::make_latency_variant(other.id_behavior, 10.0),
                         synth::make_mixture_variant(other.id_behavior, 0.5)};
  synth::generate_dataset(other, base / "c");
  CHECK(file_bytes(base / "a" / "train_id" / "requests.jsonl") !=
        file_bytes(base / "c" / "train_id" / "requests.jsonl"));
  const auto loaded = trace::read_request_file(base / "c" / "train_id" / "requests.jsonl");
  CHECK(loaded.size() == 20);

  std::filesystem::remove_all(base);
}

TEST_CASE("latency variant scales gaps, mixture variant shifts names") {
  const synth::SynthParams params;
  const BehaviorSpec id_spec = synth::make_id_behavior(params, 77);
  const BehaviorSpec lat = synth::make_latency_variant(id_spec, 10.0);
  for (std::size_t s = 0; s < id_spec.state_count(); ++s)
    CHECK(lat.delta_lognormal[s].first ==
          doctest::Approx(id_spec.delta_lognormal[s].first + std::log(10.0)));
  CHECK(lat.transition == id_spec.transition);

  const BehaviorSpec mix = synth::make_mixture_variant(id_spec, 0.5);
  const Eigen::VectorXd pi_id = synth::stationary_distribution(id_spec.transition);
  const Eigen::VectorXd pi_mix = synth::stationary_distribution(mix.transition);
  CHECK((pi_id - pi_mix).cwiseAbs().maxCoeff() > 0.1);  // clearly shifted mixture
  CHECK(mix.delta_lognormal == id_spec.delta_lognormal);
}

}  // TEST_SUITE
