#include "tracelm/scoring.hpp"

#include <cmath>
#include <stdexcept>

namespace tracelm::lm {

NgramScorer::NgramScorer(NgramModel model, encode::Vocabulary vocab)
    : model_(std::move(model)), vocab_(std::move(vocab)) {
  if (model_.name_vocab_size() != vocab_.name.size())
    throw std::invalid_argument("NgramScorer: vocab size mismatch");
}

std::vector<int> NgramScorer::target_ids(const trace::Request& request) const {
  std::vector<int> ids;
  ids.reserve(request.events.size());
  for (const auto& e : request.events) ids.push_back(vocab_.name.lookup(e.name));
  return ids;
}

Eigen::MatrixXd NgramScorer::conditionals(const trace::Request& request) const {
  return model_.conditionals(target_ids(request));
}

std::vector<double> NgramScorer::target_log_probs(const trace::Request& request) const {
  const std::vector<int> ids = target_ids(request);
  std::vector<double> out;
  out.reserve(ids.size());
  NgramModel::Context context(static_cast<std::size_t>(model_.n() - 1), encode::kSosIndex);
  for (int id : ids) {
    out.push_back(std::log(model_.probability(context, id)));
    if (model_.n() > 1) {
      context.erase(context.begin());
      context.push_back(id);
    }
  }
  return out;
}

NeuralScorer::NeuralScorer(ModelSpec spec, Params<float> params, encode::Vocabulary vocab)
    : spec_(spec), params_(std::move(params)), vocab_(std::move(vocab)), encoder_(spec.encode_dim) {
  spec_.validate();
  if (spec_.name_vocab != vocab_.name.size() || spec_.ret_vocab != vocab_.ret.size() ||
      spec_.entry_vocab != vocab_.entry.size() || spec_.proc_vocab != vocab_.procname.size())
    throw std::invalid_argument("NeuralScorer: checkpoint/vocabulary size mismatch");
}

Eigen::MatrixXf NeuralScorer::log_conditionals(const encode::EncodedRequest& enc) const {
  ad::Tape<float> tape;
  const BoundParams<float> bound = bind_params(tape, params_);
  const ad::Var logits = forward_request(tape, spec_, bound, enc);
  const ad::Var logp = tape.log_softmax_rows(logits);
  return tape.val(logp);
}

Eigen::MatrixXd NeuralScorer::conditionals(const trace::Request& request) const {
  const encode::EncodedRequest enc = encode_request(request, vocab_, encoder_);
  return log_conditionals(enc).array().exp().cast<double>();
}

std::vector<double> NeuralScorer::target_log_probs(const trace::Request& request) const {
  const encode::EncodedRequest enc = encode_request(request, vocab_, encoder_);
  const Eigen::MatrixXf logp = log_conditionals(enc);
  std::vector<double> out;
  out.reserve(enc.targets.size());
  for (std::size_t i = 0; i < enc.targets.size(); ++i)
    out.push_back(static_cast<double>(logp(static_cast<Eigen::Index>(i), enc.targets[i])));
  return out;
}

nlohmann::json hyper_from_spec(const ModelSpec& spec) {
  return {{"layers", spec.layers},     {"width", spec.width},
          {"heads", spec.heads},       {"window", spec.window},
          {"globals", spec.globals},   {"ff_mult", spec.ff_mult},
          {"embed_dim", spec.embed_dim}, {"encode_dim", spec.encode_dim},
          {"name_vocab", spec.name_vocab}, {"ret_vocab", spec.ret_vocab},
          {"entry_vocab", spec.entry_vocab}, {"proc_vocab", spec.proc_vocab}};
}

ModelSpec spec_from_hyper(const nlohmann::json& hyper, const std::string& arch) {
  ModelSpec spec;
  spec.arch = arch_from_string(arch);
  spec.layers = hyper.at("layers").get<int>();
  spec.width = hyper.at("width").get<int>();
  spec.heads = hyper.at("heads").get<int>();
  spec.window = hyper.at("window").get<int>();
  spec.globals = hyper.at("globals").get<int>();
  spec.ff_mult = hyper.at("ff_mult").get<int>();
  spec.embed_dim = hyper.at("embed_dim").get<int>();
  spec.encode_dim = hyper.at("encode_dim").get<int>();
  spec.name_vocab = hyper.at("name_vocab").get<int>();
  spec.ret_vocab = hyper.at("ret_vocab").get<int>();
  spec.entry_vocab = hyper.at("entry_vocab").get<int>();
  spec.proc_vocab = hyper.at("proc_vocab").get<int>();
  return spec;
}

ckpt::Checkpoint to_checkpoint(const ModelSpec& spec, const Params<float>& params,
                               const encode::Vocabulary& vocab, std::uint64_t seed) {
  ckpt::Checkpoint c;
  c.arch = to_string(spec.arch);
  c.hyper = hyper_from_spec(spec);
  c.hyper["seed"] = seed;
  c.vocab = vocab.to_json();
  for (const auto& [name, m] : params.arrays) c.arrays.emplace_back(name, m);
  return c;
}

ckpt::Checkpoint to_checkpoint(const NgramModel& model, const encode::Vocabulary& vocab,
                               std::uint64_t seed) {
  ckpt::Checkpoint c;
  c.arch = "ngram";
  c.hyper = {{"n", model.n()}, {"alpha", model.alpha()}, {"name_vocab", model.name_vocab_size()}};
  c.hyper["seed"] = seed;
  c.vocab = vocab.to_json();

  const auto rows = model.export_counts();
  // Token ids and counts ride in the float32 array payload; float32 holds
  // integers exactly up to 2^24.
  constexpr std::int64_t kExact = std::int64_t{1} << 24;
  Eigen::MatrixXf grams(static_cast<Eigen::Index>(rows.size()), model.n());
  Eigen::MatrixXf counts(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c2 = 0; c2 < model.n(); ++c2) {
      grams(static_cast<Eigen::Index>(r), c2) = static_cast<float>(rows[r][static_cast<std::size_t>(c2)]);
    }
    const std::int64_t count = rows[r].back();
    if (count >= kExact)
      throw std::runtime_error("ngram checkpoint: count exceeds float32 exact range");
    counts(static_cast<Eigen::Index>(r), 0) = static_cast<float>(count);
  }
  c.arrays.emplace_back("ngram.grams", std::move(grams));
  c.arrays.emplace_back("ngram.counts", std::move(counts));
  return c;
}

std::unique_ptr<LanguageModel> scorer_from_checkpoint(const ckpt::Checkpoint& checkpoint) {
  encode::Vocabulary vocab = encode::Vocabulary::from_json(checkpoint.vocab);
  if (checkpoint.arch == "ngram") {
    const int n = checkpoint.hyper.at("n").get<int>();
    const double alpha = checkpoint.hyper.at("alpha").get<double>();
    const int vsize = checkpoint.hyper.at("name_vocab").get<int>();
    NgramModel model(n, alpha, vsize);
    const auto& grams = checkpoint.array("ngram.grams");
    const auto& counts = checkpoint.array("ngram.counts");
    if (grams.rows() != counts.rows() || grams.cols() != n)
      throw std::runtime_error("ngram checkpoint: array shape mismatch");
    std::vector<std::vector<std::int64_t>> rows;
    rows.reserve(static_cast<std::size_t>(grams.rows()));
    for (Eigen::Index r = 0; r < grams.rows(); ++r) {
      std::vector<std::int64_t> row;
      row.reserve(static_cast<std::size_t>(n + 1));
      for (Eigen::Index c = 0; c < grams.cols(); ++c)
        row.push_back(static_cast<std::int64_t>(grams(r, c)));
      row.push_back(static_cast<std::int64_t>(counts(r, 0)));
      rows.push_back(std::move(row));
    }
    model.import_counts(rows);
    return std::make_unique<NgramScorer>(std::move(model), std::move(vocab));
  }

  const ModelSpec spec = spec_from_hyper(checkpoint.hyper, checkpoint.arch);
  Params<float> params;
  params.arrays = checkpoint.arrays;
  return std::make_unique<NeuralScorer>(spec, std::move(params), std::move(vocab));
}

}  // namespace tracelm::lm
