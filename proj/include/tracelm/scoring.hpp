#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tracelm/checkpoint.hpp"
#include "tracelm/encode.hpp"
#include "tracelm/ngram.hpp"
#include "tracelm/nn.hpp"
#include "tracelm/trace.hpp"

namespace tracelm::lm {

// Uniform view over the four model families: per-position conditional
// distributions over next system-call names, and per-target log
// probabilities computed in log space.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::string arch_name() const = 0;
  virtual int name_vocab_size() const = 0;
  virtual const encode::Vocabulary& vocabulary() const = 0;

  // N x V; every row sums to 1.
  virtual Eigen::MatrixXd conditionals(const trace::Request& request) const = 0;
  // ln P(w_i | w_<i), one entry per event.
  virtual std::vector<double> target_log_probs(const trace::Request& request) const = 0;
};

class NgramScorer : public LanguageModel {
 public:
  NgramScorer(NgramModel model, encode::Vocabulary vocab);

  std::string arch_name() const override { return "ngram"; }
  int name_vocab_size() const override { return model_.name_vocab_size(); }
  const encode::Vocabulary& vocabulary() const override { return vocab_; }
  Eigen::MatrixXd conditionals(const trace::Request& request) const override;
  std::vector<double> target_log_probs(const trace::Request& request) const override;

  const NgramModel& model() const { return model_; }

 private:
  std::vector<int> target_ids(const trace::Request& request) const;

  NgramModel model_;
  encode::Vocabulary vocab_;
};

class NeuralScorer : public LanguageModel {
 public:
  NeuralScorer(ModelSpec spec, Params<float> params, encode::Vocabulary vocab);

  std::string arch_name() const override { return to_string(spec_.arch); }
  int name_vocab_size() const override { return spec_.name_vocab; }
  const encode::Vocabulary& vocabulary() const override { return vocab_; }
  Eigen::MatrixXd conditionals(const trace::Request& request) const override;
  std::vector<double> target_log_probs(const trace::Request& request) const override;

  // Log-softmaxed output rows for an already-encoded request.
  Eigen::MatrixXf log_conditionals(const encode::EncodedRequest& enc) const;

  const ModelSpec& spec() const { return spec_; }
  const Params<float>& params() const { return params_; }
  const encode::NumericEncoder& encoder() const { return encoder_; }

 private:
  ModelSpec spec_;
  Params<float> params_;
  encode::Vocabulary vocab_;
  encode::NumericEncoder encoder_;
};

// Checkpoint conversions.
ckpt::Checkpoint to_checkpoint(const ModelSpec& spec, const Params<float>& params,
                               const encode::Vocabulary& vocab, std::uint64_t seed);
ckpt::Checkpoint to_checkpoint(const NgramModel& model, const encode::Vocabulary& vocab,
                               std::uint64_t seed);
std::unique_ptr<LanguageModel> scorer_from_checkpoint(const ckpt::Checkpoint& checkpoint);

ModelSpec spec_from_hyper(const nlohmann::json& hyper, const std::string& arch);
nlohmann::json hyper_from_spec(const ModelSpec& spec);

}  // namespace tracelm::lm
