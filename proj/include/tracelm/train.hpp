#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracelm/autodiff.hpp"
#include "tracelm/encode.hpp"
#include "tracelm/nn.hpp"

namespace tracelm::lm {

enum class Precision { standard, high_precision_check };

struct TrainConfig {
  double learning_rate = 3e-3;
  int warmup_steps = 200;
  double label_smoothing = 0.02;
  double dropout = 0.1;
  int lr_patience = 2;       // epochs without val improvement before LR cut
  int stop_patience = 5;     // epochs without val improvement before stopping
  double lr_factor = 0.5;
  int batch_size = 32;
  int max_epochs = 20;
  std::uint64_t seed = 42;
  Precision precision = Precision::standard;

  void validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("train.learning_rate must be positive");
    if (warmup_steps < 0) throw std::invalid_argument("train.warmup_steps must be >= 0");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw std::invalid_argument("train.label_smoothing must be in [0,1)");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("train.dropout must be in [0,1)");
    if (lr_patience < 1) throw std::invalid_argument("train.lr_patience must be >= 1");
    if (stop_patience < 1) throw std::invalid_argument("train.stop_patience must be >= 1");
    if (lr_factor <= 0.0 || lr_factor >= 1.0)
      throw std::invalid_argument("train.lr_factor must be in (0,1)");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("train.max_epochs must be >= 1");
  }
};

struct EpochRow {
  int epoch = 0;
  long step = 0;
  double train_ce = 0.0;
  double val_ce = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelSpec spec;
  Params<float> params;  // best-validation snapshot
  std::vector<EpochRow> history;
  double best_val_ce = 0.0;
  int best_epoch = 0;
};

struct EvalResult {
  double cross_entropy = 0.0;  // mean -ln P(target) per token
  double top1_accuracy = 0.0;
};

namespace detail {

template <class S>
class Adam {
 public:
  Adam(const Params<S>& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, value] : params.arrays) {
      (void)name;
      m_.push_back(ad::Mat<S>::Zero(value.rows(), value.cols()));
      v_.push_back(ad::Mat<S>::Zero(value.rows(), value.cols()));
    }
  }

  void step(Params<S>& params, const std::vector<ad::Mat<S>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
      ad::Mat<S>& w = params.arrays[i].second;
      const ad::Mat<S>& g = grads[i];
      m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * g;
      v_[i].array() = static_cast<S>(beta2_) * v_[i].array() +
                      static_cast<S>(1.0 - beta2_) * g.array().square();
      const ad::Mat<S> mhat = m_[i] / static_cast<S>(bc1);
      const ad::Mat<S> vhat = v_[i] / static_cast<S>(bc2);
      w.array() -= static_cast<S>(lr) * mhat.array() / (vhat.array().sqrt() + static_cast<S>(eps_));
    }
  }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<ad::Mat<S>> m_;
  std::vector<ad::Mat<S>> v_;
};

// Per-token mean cross entropy and top-1 accuracy (ties to the lowest
// index) of a parameter set over encoded requests.
template <class S>
EvalResult evaluate_params(const ModelSpec& spec, const Params<S>& params,
                           const std::vector<encode::EncodedRequest>& requests) {
  if (requests.empty()) throw std::invalid_argument("evaluate: empty dataset");
  double total_nll = 0.0;
  long correct = 0;
  long total = 0;
  for (const auto& enc : requests) {
    ad::Tape<S> tape;
    const BoundParams<S> bound = bind_params(tape, params);
    const ad::Var logits = forward_request(tape, spec, bound, enc);
    const ad::Var logp = tape.log_softmax_rows(logits);
    const ad::Mat<S>& rows = tape.val(logp);
    for (std::size_t i = 0; i < enc.targets.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      total_nll -= static_cast<double>(rows(r, enc.targets[i]));
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < rows.cols(); ++c)
        if (rows(r, c) > rows(r, best)) best = c;
      if (best == enc.targets[i]) ++correct;
      ++total;
    }
  }
  return {total_nll / static_cast<double>(total),
          static_cast<double>(correct) / static_cast<double>(total)};
}

template <class S>
std::vector<ad::Mat<S>> zero_grads(const Params<S>& params) {
  std::vector<ad::Mat<S>> grads;
  grads.reserve(params.arrays.size());
  for (const auto& [name, value] : params.arrays) {
    (void)name;
    grads.push_back(ad::Mat<S>::Zero(value.rows(), value.cols()));
  }
  return grads;
}

}  // namespace detail

// Trains with label-smoothed cross entropy, linear LR warmup, plateau LR
// reduction and early stopping on validation cross entropy; returns the
// best-validation parameters. Deterministic for a fixed seed.
template <class S>
TrainResult train_model(const ModelSpec& spec, const std::vector<encode::EncodedRequest>& train_set,
                        const std::vector<encode::EncodedRequest>& val_set,
                        const TrainConfig& config,
                        std::vector<EpochRow>* live_history = nullptr) {
  spec.validate();
  config.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation split");

  Params<S> params = init_params<S>(spec, config.seed);
  detail::Adam<S> adam(params);
  Rng shuffle_rng(Rng::derive(config.seed, "train.shuffle"));
  Rng dropout_rng(Rng::derive(config.seed, "train.dropout"));

  // LSTM batches are padded, so group indices by length to keep padding low.
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  if (spec.arch == Arch::lstm) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto la = train_set[a].n_targets(), lb = train_set[b].n_targets();
      if (la != lb) return la < lb;
      return a < b;
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(config.batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }

  TrainResult result;
  result.spec = spec;
  double best_ce = std::numeric_limits<double>::infinity();
  Params<S> best_params = params;
  int best_epoch = 0;
  int epochs_since_improvement = 0;
  int epochs_since_lr_cut = 0;
  double plateau_factor = 1.0;
  long global_step = 0;
  constexpr double kMinImprovement = 1e-4;

  ForwardOptions opts;
  opts.train = true;
  opts.dropout = config.dropout;
  opts.rng = &dropout_rng;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(batches);
    double epoch_nll = 0.0;
    long epoch_tokens = 0;

    for (const auto& batch : batches) {
      ++global_step;
      const double warmup =
          config.warmup_steps == 0
              ? 1.0
              : std::min(1.0, static_cast<double>(global_step) / config.warmup_steps);
      const double lr = config.learning_rate * warmup * plateau_factor;

      long batch_tokens = 0;
      for (std::size_t idx : batch)
        batch_tokens += static_cast<long>(train_set[idx].n_targets());

      std::vector<ad::Mat<S>> grads = detail::zero_grads(params);
      double batch_nll = 0.0;

      auto accumulate = [&](ad::Tape<S>& tape, const BoundParams<S>& bound, ad::Var loss_sum) {
        const ad::Var loss = tape.scale(loss_sum, static_cast<S>(1.0 / batch_tokens));
        const double loss_value = static_cast<double>(tape.val(loss)(0, 0));
        if (!std::isfinite(loss_value))
          throw std::runtime_error("training diverged: non-finite loss at step " +
                                   std::to_string(global_step));
        batch_nll += loss_value * batch_tokens;
        tape.backward(loss);
        for (std::size_t i = 0; i < params.arrays.size(); ++i)
          grads[i] += tape.grad(bound.vars[i].second);
      };

      if (spec.arch == Arch::lstm) {
        std::vector<const encode::EncodedRequest*> ptrs;
        ptrs.reserve(batch.size());
        for (std::size_t idx : batch) ptrs.push_back(&train_set[idx]);
        ad::Tape<S> tape;
        const BoundParams<S> bound = bind_params(tape, params);
        std::vector<int> flat_targets;
        const ad::Var logits =
            lstm_forward_batch(tape, spec, bound, {ptrs.data(), ptrs.size()}, flat_targets, opts);
        const ad::Var loss_sum = tape.cross_entropy_label_smoothed_sum(
            logits, std::move(flat_targets), config.label_smoothing);
        accumulate(tape, bound, loss_sum);
      } else {
        for (std::size_t idx : batch) {
          ad::Tape<S> tape;
          const BoundParams<S> bound = bind_params(tape, params);
          const ad::Var logits = forward_request(tape, spec, bound, train_set[idx], opts);
          const ad::Var loss_sum = tape.cross_entropy_label_smoothed_sum(
              logits, train_set[idx].targets, config.label_smoothing);
          accumulate(tape, bound, loss_sum);
        }
      }

      adam.step(params, grads, lr);
      epoch_nll += batch_nll;
      epoch_tokens += batch_tokens;
    }

    const EvalResult val = detail::evaluate_params(spec, params, val_set);
    EpochRow row;
    row.epoch = epoch;
    row.step = global_step;
    row.train_ce = epoch_nll / static_cast<double>(epoch_tokens);
    row.val_ce = val.cross_entropy;
    row.val_acc = val.top1_accuracy;
    const double warmup_now =
        config.warmup_steps == 0
            ? 1.0
            : std::min(1.0, static_cast<double>(global_step) / config.warmup_steps);
    row.lr = config.learning_rate * warmup_now * plateau_factor;
    result.history.push_back(row);
    if (live_history) live_history->push_back(row);

    if (val.cross_entropy < best_ce - kMinImprovement) {
      best_ce = val.cross_entropy;
      best_params = params;
      best_epoch = epoch;
      epochs_since_improvement = 0;
      epochs_since_lr_cut = 0;
    } else {
      ++epochs_since_improvement;
      ++epochs_since_lr_cut;
      if (epochs_since_improvement >= config.stop_patience) break;
      if (epochs_since_lr_cut >= config.lr_patience) {
        plateau_factor *= config.lr_factor;
        epochs_since_lr_cut = 0;
      }
    }
  }

  result.best_val_ce = best_ce;
  result.best_epoch = best_epoch;
  if constexpr (std::is_same_v<S, float>) {
    result.params = std::move(best_params);
  } else {
    result.params = best_params.template cast<float>();
  }
  return result;
}

// Dispatches on the configured precision mode.
TrainResult train(const ModelSpec& spec, const std::vector<encode::EncodedRequest>& train_set,
                  const std::vector<encode::EncodedRequest>& val_set, const TrainConfig& config);

// Mean cross entropy / top-1 accuracy of float parameters over a dataset.
EvalResult evaluate(const ModelSpec& spec, const Params<float>& params,
                    const std::vector<encode::EncodedRequest>& requests);

struct GradientCheckGroup {
  std::string name;
  double relative_error = 0.0;  // ||analytic - fd|| / max(||analytic||, ||fd||)
};

struct GradientCheckResult {
  std::vector<GradientCheckGroup> groups;
  double worst = 0.0;
};

// Central finite differences against the tape gradients on the full
// label-smoothed loss, in double precision. Meant for toy sizes.
GradientCheckResult gradient_check(const ModelSpec& spec, const encode::EncodedRequest& enc,
                                   double label_smoothing, std::uint64_t seed,
                                   double fd_step = 1e-5);

}  // namespace tracelm::lm
