#include "tracelm/encode.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

namespace tracelm::encode {

FieldVocab::FieldVocab() {
  add(kUnkToken);
  add(kSosToken);
}

int FieldVocab::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
  if (!inserted) throw std::invalid_argument("FieldVocab::add: duplicate token " + token);
  tokens_.push_back(token);
  return it->second;
}

nlohmann::json FieldVocab::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < size(); ++i) j[tokens_[static_cast<std::size_t>(i)]] = i;
  return j;
}

FieldVocab FieldVocab::from_json(const nlohmann::json& j) {
  std::vector<std::string> by_index(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto idx = it.value().get<std::size_t>();
    if (idx >= by_index.size()) throw std::runtime_error("vocab JSON: index out of range");
    by_index[idx] = it.key();
  }
  if (by_index.size() < 2 || by_index[0] != kUnkToken || by_index[1] != kSosToken)
    throw std::runtime_error("vocab JSON: reserved tokens missing");
  FieldVocab v;
  for (std::size_t i = 2; i < by_index.size(); ++i) v.add(by_index[i]);
  return v;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"name", name.to_json()},
          {"ret", ret.to_json()},
          {"entry", entry.to_json()},
          {"procname", procname.to_json()}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.name = FieldVocab::from_json(j.at("name"));
  v.ret = FieldVocab::from_json(j.at("ret"));
  v.entry = FieldVocab::from_json(j.at("entry"));
  v.procname = FieldVocab::from_json(j.at("procname"));
  return v;
}

std::string ret_token(std::int64_t ret) { return std::to_string(ret); }
std::string entry_token(bool entry) { return entry ? "true" : "false"; }

namespace {

FieldVocab vocab_from_counts(const std::map<std::string, std::int64_t>& counts, int min_count) {
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [token, count] : counts)
    if (count >= min_count) kept.emplace_back(token, count);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  FieldVocab v;
  for (const auto& [token, count] : kept) {
    (void)count;
    v.add(token);
  }
  return v;
}

}  // namespace

Vocabulary build_vocab(const std::vector<trace::Request>& train_requests, int min_count) {
  if (train_requests.empty()) throw std::invalid_argument("build_vocab: empty dataset");
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");

  std::map<std::string, std::int64_t> names, rets, entries, procs;
  for (const auto& r : train_requests) {
    for (const auto& e : r.events) {
      ++names[e.name];
      ++rets[ret_token(e.ret)];
      ++entries[entry_token(e.entry)];
      ++procs[e.procname];
    }
  }
  Vocabulary v;
  v.name = vocab_from_counts(names, min_count);
  v.ret = vocab_from_counts(rets, min_count);
  v.entry = vocab_from_counts(entries, min_count);
  v.procname = vocab_from_counts(procs, min_count);
  return v;
}

NumericEncoder::NumericEncoder(int dim) : dim_(dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("NumericEncoder: dim must be even and >= 2");
  scales_.resize(static_cast<std::size_t>(dim / 2));
  for (int pair = 0; pair < dim / 2; ++pair)
    scales_[static_cast<std::size_t>(pair)] =
        std::pow(10.0, -6.0 * (2.0 * pair) / static_cast<double>(dim));
}

Eigen::RowVectorXd NumericEncoder::encode(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("NumericEncoder: non-finite input");
  Eigen::RowVectorXd out(dim_);
  for (int pair = 0; pair < dim_ / 2; ++pair) {
    const double arg = x * scales_[static_cast<std::size_t>(pair)];
    out[2 * pair] = std::sin(arg);
    out[2 * pair + 1] = std::cos(arg);
  }
  return out;
}

void NumericEncoder::encode_into(double x, float* out) const {
  if (!std::isfinite(x)) throw std::invalid_argument("NumericEncoder: non-finite input");
  for (int pair = 0; pair < dim_ / 2; ++pair) {
    const double arg = x * scales_[static_cast<std::size_t>(pair)];
    out[2 * pair] = static_cast<float>(std::sin(arg));
    out[2 * pair + 1] = static_cast<float>(std::cos(arg));
  }
}

EmbeddingTable init_embedding(int vocab_size, int embed_dim, Rng& rng) {
  if (embed_dim < 1) throw std::invalid_argument("init_embedding: embed_dim must be >= 1");
  if (embed_dim >= vocab_size && vocab_size > 8)
    std::cerr << "warning: embedding dim " << embed_dim << " >= vocab size " << vocab_size << "\n";
  EmbeddingTable t;
  t.weights.resize(vocab_size, embed_dim);
  for (int r = 0; r < vocab_size; ++r)
    for (int c = 0; c < embed_dim; ++c)
      t.weights(r, c) = static_cast<float>(rng.normal(0.0, 0.1));
  return t;
}

EmbeddingSet init_embeddings(const Vocabulary& vocab, int embed_dim, std::uint64_t seed) {
  EmbeddingSet set;
  Rng rn(Rng::derive(seed, "embed.name"));
  set.name = init_embedding(vocab.name.size(), embed_dim, rn);
  Rng rr(Rng::derive(seed, "embed.ret"));
  set.ret = init_embedding(vocab.ret.size(), embed_dim, rr);
  Rng re(Rng::derive(seed, "embed.entry"));
  set.entry = init_embedding(vocab.entry.size(), embed_dim, re);
  Rng rp(Rng::derive(seed, "embed.procname"));
  set.procname = init_embedding(vocab.procname.size(), embed_dim, rp);
  return set;
}

EncodedRequest encode_request(const trace::Request& request, const Vocabulary& vocab,
                              const NumericEncoder& encoder) {
  if (request.events.empty()) throw std::invalid_argument("encode_request: empty request");
  if (request.deltas_ns.size() != request.events.size())
    throw std::invalid_argument("encode_request: deltas not computed");

  const std::size_t n = request.events.size();
  const int d = encoder.dim();
  EncodedRequest enc;
  enc.name.reserve(n + 1);
  enc.numeric.resize(static_cast<Eigen::Index>(n + 1), 3 * d);

  enc.name.push_back(kSosIndex);
  enc.ret.push_back(kSosIndex);
  enc.entry.push_back(kSosIndex);
  enc.procname.push_back(kSosIndex);
  std::vector<float> buf(static_cast<std::size_t>(3 * d));
  encoder.encode_into(0.0, buf.data());
  encoder.encode_into(0.0, buf.data() + d);
  encoder.encode_into(0.0, buf.data() + 2 * d);
  for (int c = 0; c < 3 * d; ++c) enc.numeric(0, c) = buf[static_cast<std::size_t>(c)];

  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = request.events[i];
    enc.name.push_back(vocab.name.lookup(e.name));
    enc.ret.push_back(vocab.ret.lookup(ret_token(e.ret)));
    enc.entry.push_back(vocab.entry.lookup(entry_token(e.entry)));
    enc.procname.push_back(vocab.procname.lookup(e.procname));
    encoder.encode_into(static_cast<double>(e.tid), buf.data());
    encoder.encode_into(static_cast<double>(e.pid), buf.data() + d);
    encoder.encode_into(static_cast<double>(request.deltas_ns[i]), buf.data() + 2 * d);
    for (int c = 0; c < 3 * d; ++c)
      enc.numeric(static_cast<Eigen::Index>(i + 1), c) = buf[static_cast<std::size_t>(c)];
    enc.targets.push_back(vocab.name.lookup(e.name));
  }
  return enc;
}

Eigen::MatrixXd joint_representation(const trace::Request& request, const Vocabulary& vocab,
                                     const EmbeddingSet& tables, const NumericEncoder& encoder) {
  const int de = tables.name.embed_dim();
  if (tables.ret.embed_dim() != de || tables.entry.embed_dim() != de ||
      tables.procname.embed_dim() != de)
    throw std::invalid_argument("joint_representation: embedding dims disagree");
  if (tables.name.vocab_size() != vocab.name.size() || tables.ret.vocab_size() != vocab.ret.size() ||
      tables.entry.vocab_size() != vocab.entry.size() ||
      tables.procname.vocab_size() != vocab.procname.size())
    throw std::invalid_argument("joint_representation: table/vocab size mismatch");

  const EncodedRequest enc = encode_request(request, vocab, encoder);
  const int d = encoder.dim();
  const int d_model = 4 * de + 3 * d;
  Eigen::MatrixXd rep(static_cast<Eigen::Index>(enc.rows()), d_model);
  for (Eigen::Index i = 0; i < rep.rows(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    rep.block(i, 0, 1, de) = tables.name.weights.row(enc.name[r]).cast<double>();
    rep.block(i, de, 1, de) = tables.ret.weights.row(enc.ret[r]).cast<double>();
    rep.block(i, 2 * de, 1, de) = tables.entry.weights.row(enc.entry[r]).cast<double>();
    rep.block(i, 3 * de, 1, de) = tables.procname.weights.row(enc.procname[r]).cast<double>();
    rep.block(i, 4 * de, 1, 3 * d) = enc.numeric.row(i).cast<double>();
  }
  return rep;
}

}  // namespace tracelm::encode
