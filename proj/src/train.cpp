#include "tracelm/train.hpp"

namespace tracelm::lm {

TrainResult train(const ModelSpec& spec, const std::vector<encode::EncodedRequest>& train_set,
                  const std::vector<encode::EncodedRequest>& val_set, const TrainConfig& config) {
  if (config.precision == Precision::high_precision_check)
    return train_model<double>(spec, train_set, val_set, config);
  return train_model<float>(spec, train_set, val_set, config);
}

EvalResult evaluate(const ModelSpec& spec, const Params<float>& params,
                    const std::vector<encode::EncodedRequest>& requests) {
  return detail::evaluate_params(spec, params, requests);
}

namespace {

double loss_at(const ModelSpec& spec, const Params<double>& params,
               const encode::EncodedRequest& enc, double label_smoothing) {
  ad::Tape<double> tape;
  const BoundParams<double> bound = bind_params(tape, params);
  const ad::Var logits = forward_request(tape, spec, bound, enc);
  const ad::Var loss_sum =
      tape.cross_entropy_label_smoothed_sum(logits, enc.targets, label_smoothing);
  return tape.val(loss_sum)(0, 0) / static_cast<double>(enc.targets.size());
}

}  // namespace

GradientCheckResult gradient_check(const ModelSpec& spec, const encode::EncodedRequest& enc,
                                   double label_smoothing, std::uint64_t seed, double fd_step) {
  Params<double> params = init_params<double>(spec, seed);

  // Analytic gradients.
  std::vector<ad::Mat<double>> analytic;
  {
    ad::Tape<double> tape;
    const BoundParams<double> bound = bind_params(tape, params);
    const ad::Var logits = forward_request(tape, spec, bound, enc);
    const ad::Var loss_sum =
        tape.cross_entropy_label_smoothed_sum(logits, enc.targets, label_smoothing);
    const ad::Var loss = tape.scale(loss_sum, 1.0 / static_cast<double>(enc.targets.size()));
    tape.backward(loss);
    for (const auto& [name, var] : bound.vars) {
      (void)name;
      analytic.push_back(tape.grad(var));
    }
  }

  GradientCheckResult result;
  for (std::size_t g = 0; g < params.arrays.size(); ++g) {
    auto& [name, weights] = params.arrays[g];
    ad::Mat<double> fd(weights.rows(), weights.cols());
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < weights.cols(); ++c) {
        const double original = weights(r, c);
        const double h = fd_step * std::max(1.0, std::abs(original));
        weights(r, c) = original + h;
        const double up = loss_at(spec, params, enc, label_smoothing);
        weights(r, c) = original - h;
        const double down = loss_at(spec, params, enc, label_smoothing);
        weights(r, c) = original;
        fd(r, c) = (up - down) / (2.0 * h);
      }
    }
    const double denom = std::max({analytic[g].norm(), fd.norm(), 1e-12});
    GradientCheckGroup group;
    group.name = name;
    group.relative_error = (analytic[g] - fd).norm() / denom;
    result.worst = std::max(result.worst, group.relative_error);
    result.groups.push_back(std::move(group));
  }
  return result;
}

}  // namespace tracelm::lm
