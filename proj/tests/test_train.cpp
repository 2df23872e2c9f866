#include <doctest.h>

#include <cmath>

#include "tracelm/scoring.hpp"
#include "tracelm/synth.hpp"
#include "tracelm/train.hpp"

using namespace tracelm;
using lm::Arch;
using lm::ModelSpec;
using lm::TrainConfig;

namespace {

// Deterministic two-name alternating behavior: the next name is always
// knowable from the previous one.
synth::BehaviorSpec alternating_spec() {
  synth::BehaviorSpec spec;
  spec.name = "alt";
  spec.alphabet = {"ping", "pong"};
  spec.transition = Eigen::MatrixXd(2, 2);
  spec.transition << 0, 1, 1, 0;
  spec.initial = Eigen::VectorXd(2);
  spec.initial << 0.5, 0.5;
  spec.delta_lognormal = {{std::log(800.0), 0.2}, {std::log(3000.0), 0.2}};
  spec.length = {24.0, 4.0, 8, 40};
  spec.procname_dist = {{"p"}, {1.0}};
  spec.ret_dist = {{0}, {1.0}};
  return spec;
}

struct Prepared {
  encode::Vocabulary vocab;
  ModelSpec spec;
  std::vector<encode::EncodedRequest> train_enc;
  std::vector<encode::EncodedRequest> val_enc;
};

Prepared prepare(Arch arch, const synth::BehaviorSpec& behavior, std::size_t n_train,
                 std::size_t n_val, std::uint64_t seed) {
  Rng rng(seed);
  auto train_requests = synth::generate_requests(behavior, n_train, rng);
  auto val_requests = synth::generate_requests(behavior, n_val, rng);

  Prepared p;
  p.vocab = encode::build_vocab(train_requests, 1);
  p.spec.arch = arch;
  p.spec.layers = 1;
  p.spec.width = 16;
  p.spec.heads = 2;
  p.spec.window = 4;
  p.spec.globals = 1;
  p.spec.ff_mult = 2;
  p.spec.embed_dim = 8;
  p.spec.encode_dim = 8;
  p.spec.name_vocab = p.vocab.name.size();
  p.spec.ret_vocab = p.vocab.ret.size();
  p.spec.entry_vocab = p.vocab.entry.size();
  p.spec.proc_vocab = p.vocab.procname.size();

  const encode::NumericEncoder encoder(p.spec.encode_dim);
  for (const auto& r : train_requests) p.train_enc.push_back(encode::encode_request(r, p.vocab, encoder));
  for (const auto& r : val_requests) p.val_enc.push_back(encode::encode_request(r, p.vocab, encoder));
  return p;
}

TrainConfig fast_config() {
  TrainConfig config;
  config.learning_rate = 1e-2;
  config.warmup_steps = 20;
  config.label_smoothing = 0.0;
  config.dropout = 0.0;
  config.batch_size = 8;
  config.max_epochs = 12;
  config.lr_patience = 3;
  config.stop_patience = 6;
  config.seed = 42;
  return config;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("LSTM learns the deterministic alternating behavior to accuracy 1") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 60, 12, 1);
  const lm::TrainResult result = lm::train(p.spec, p.train_enc, p.val_enc, fast_config());
  const lm::EvalResult eval = lm::evaluate(p.spec, result.params, p.val_enc);
  CHECK(eval.top1_accuracy > 0.95);  // only first-token predictions can miss
  CHECK(result.best_val_ce < 0.2);
}

TEST_CASE("transformer learns the alternating behavior") {
  const Prepared p = prepare(Arch::transformer, alternating_spec(), 60, 12, 2);
  const lm::TrainResult result = lm::train(p.spec, p.train_enc, p.val_enc, fast_config());
  const lm::EvalResult eval = lm::evaluate(p.spec, result.params, p.val_enc);
  CHECK(eval.top1_accuracy > 0.95);
}

TEST_CASE("same seed reproduces the exact training trajectory") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 30, 8, 3);
  TrainConfig config = fast_config();
  config.max_epochs = 3;
  const auto a = lm::train(p.spec, p.train_enc, p.val_enc, config);
  const auto b = lm::train(p.spec, p.train_enc, p.val_enc, config);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_ce == b.history[i].train_ce);
    CHECK(a.history[i].val_ce == b.history[i].val_ce);
  }
  CHECK(a.best_val_ce == b.best_val_ce);
  for (std::size_t i = 0; i < a.params.arrays.size(); ++i)
    CHECK(a.params.arrays[i].second == b.params.arrays[i].second);
}

TEST_CASE("history follows warmup then plateau decays") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 30, 8, 4);
  TrainConfig config = fast_config();
  config.warmup_steps = 1000;  // never finishes warming up
  config.max_epochs = 2;
  const auto result = lm::train(p.spec, p.train_enc, p.val_enc, config);
  REQUIRE(result.history.size() == 2);
  CHECK(result.history[0].lr < config.learning_rate);
  CHECK(result.history[0].lr < result.history[1].lr);  // still warming up
}

TEST_CASE("empty splits and invalid configs are rejected") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 4, 2, 5);
  TrainConfig config = fast_config();
  CHECK_THROWS_AS(lm::train(p.spec, {}, p.val_enc, config), std::invalid_argument);
  CHECK_THROWS_AS(lm::train(p.spec, p.train_enc, {}, config), std::invalid_argument);
  config.dropout = 1.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = fast_config();
  config.label_smoothing = -0.1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("divergence aborts with a diagnostic") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 12, 4, 10);
  TrainConfig config = fast_config();
  config.learning_rate = 1e37;  // drives float matmuls past overflow
  config.warmup_steps = 0;
  CHECK_THROWS_WITH_AS(lm::train(p.spec, p.train_enc, p.val_enc, config),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("high-precision-check mode trains in double and returns float params") {
  const Prepared p = prepare(Arch::lstm, alternating_spec(), 12, 4, 9);
  TrainConfig config = fast_config();
  config.max_epochs = 2;
  config.precision = lm::Precision::high_precision_check;
  const auto result = lm::train(p.spec, p.train_enc, p.val_enc, config);
  CHECK(std::isfinite(result.best_val_ce));
  CHECK(result.params.arrays.size() == lm::init_params<float>(p.spec, 1).arrays.size());
}

TEST_CASE("gradient check passes for toy models of every architecture") {
  // Tiny everything: width <= 8, N <= 6, double precision.
  for (Arch arch : {Arch::lstm, Arch::transformer, Arch::longformer}) {
    ModelSpec spec;
    spec.arch = arch;
    spec.layers = 2;
    spec.width = 8;
    spec.heads = 2;
    spec.window = 2;
    spec.globals = 1;
    spec.ff_mult = 2;
    spec.embed_dim = 3;
    spec.encode_dim = 4;
    spec.name_vocab = 5;
    spec.ret_vocab = 4;
    spec.entry_vocab = 4;
    spec.proc_vocab = 4;

    const Prepared p = prepare(arch, alternating_spec(), 2, 1, 6);
    // reuse the alternating data but cut to 6 tokens
    encode::EncodedRequest enc = p.train_enc[0];
    const std::size_t n = 6;
    enc.name.resize(n + 1);
    enc.ret.resize(n + 1);
    enc.entry.resize(n + 1);
    enc.procname.resize(n + 1);
    enc.numeric.conservativeResize(static_cast<Eigen::Index>(n + 1), Eigen::NoChange);
    enc.targets.resize(n);
    // clamp ids into the tiny vocabulary
    for (auto& v : enc.name) v = std::min(v, spec.name_vocab - 1);
    for (auto& v : enc.ret) v = std::min(v, spec.ret_vocab - 1);
    for (auto& v : enc.entry) v = std::min(v, spec.entry_vocab - 1);
    for (auto& v : enc.procname) v = std::min(v, spec.proc_vocab - 1);
    for (auto& v : enc.targets) v = std::min(v, spec.name_vocab - 1);
    // the tiny spec uses encode_dim 4 = p.spec's 8? rebuild numeric to match
    encode::EncodedRequest tiny;
    tiny.name = enc.name;
    tiny.ret = enc.ret;
    tiny.entry = enc.entry;
    tiny.procname = enc.procname;
    tiny.targets = enc.targets;
    const encode::NumericEncoder encoder(spec.encode_dim);
    tiny.numeric.resize(static_cast<Eigen::Index>(n + 1), 3 * spec.encode_dim);
    std::vector<float> buf(static_cast<std::size_t>(3 * spec.encode_dim));
    for (std::size_t r = 0; r <= n; ++r) {
      encoder.encode_into(100, buf.data());
      encoder.encode_into(100, buf.data() + spec.encode_dim);
      encoder.encode_into(static_cast<double>(r) * 700.0, buf.data() + 2 * spec.encode_dim);
      for (int c = 0; c < 3 * spec.encode_dim; ++c)
        tiny.numeric(static_cast<Eigen::Index>(r), c) = buf[static_cast<std::size_t>(c)];
    }

    const lm::GradientCheckResult check = lm::gradient_check(spec, tiny, 0.1, 7);
    INFO("arch ", lm::to_string(arch), " worst group error ", check.worst);
    CHECK(check.worst < 1e-4);
    CHECK(check.groups.size() > 4);  // one entry per parameter group
  }
}

}  // TEST_SUITE
