#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tracelm/rng.hpp"
#include "tracelm/trace.hpp"

namespace tracelm::encode {

inline constexpr int kUnkIndex = 0;
inline constexpr int kSosIndex = 1;
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kSosToken = "<sos>";

// Token -> index map for one categorical field. Index 0 is UNK, 1 is SOS;
// lookup never fails, unknown tokens map to UNK.
class FieldVocab {
 public:
  FieldVocab();

  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkIndex : it->second;
  }
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  // Appends a token with the next index; rejects duplicates.
  int add(const std::string& token);

  nlohmann::json to_json() const;
  static FieldVocab from_json(const nlohmann::json& j);

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
};

struct Vocabulary {
  FieldVocab name;
  FieldVocab ret;
  FieldVocab entry;
  FieldVocab procname;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
};

std::string ret_token(std::int64_t ret);
std::string entry_token(bool entry);

// Tokens seen >= min_count times in the training split get indices, ordered
// by descending frequency then lexicographically. Everything else is UNK.
Vocabulary build_vocab(const std::vector<trace::Request>& train_requests, int min_count);

// Sinusoidal encoding of a non-negative numeric value:
//   out[i] = sin(x * 10^(-6 i / d))       for even i
//   out[i] = cos(x * 10^(-6 (i-1) / d))   for odd i
// The 10^6 denominator accommodates nanosecond-scale inputs.
class NumericEncoder {
 public:
  explicit NumericEncoder(int dim);
  int dim() const { return dim_; }

  Eigen::RowVectorXd encode(double x) const;
  // Writes dim() scalars at out (for the float model path).
  void encode_into(double x, float* out) const;

 private:
  int dim_;
  std::vector<double> scales_;  // shared by each (sin, cos) pair
};

// One trainable lookup table per categorical field.
struct EmbeddingTable {
  Eigen::MatrixXf weights;  // vocab_size x embed_dim

  int vocab_size() const { return static_cast<int>(weights.rows()); }
  int embed_dim() const { return static_cast<int>(weights.cols()); }
};

EmbeddingTable init_embedding(int vocab_size, int embed_dim, Rng& rng);

struct EmbeddingSet {
  EmbeddingTable name, ret, entry, procname;
};

EmbeddingSet init_embeddings(const Vocabulary& vocab, int embed_dim, std::uint64_t seed);

// Index-level form of a request consumed by the models: row 0 is SOS, rows
// 1..N are the events. numeric holds [enc(tid) | enc(pid) | enc(delta_ns)].
struct EncodedRequest {
  std::vector<int> name;
  std::vector<int> ret;
  std::vector<int> entry;
  std::vector<int> procname;
  Eigen::MatrixXf numeric;    // (N+1) x 3*encode_dim
  std::vector<int> targets;   // N name indices (events 1..N)

  std::size_t rows() const { return name.size(); }          // N + 1
  std::size_t n_targets() const { return targets.size(); }  // N
};

EncodedRequest encode_request(const trace::Request& request, const Vocabulary& vocab,
                              const NumericEncoder& encoder);

// Reference joint representation per the published layout:
//   row i = [embed(name) | embed(ret) | embed(entry) | embed(procname)
//            | enc(tid) | enc(pid) | enc(delta_ns)]
// with a prepended SOS row (SOS embeddings, numerics encoded at x = 0).
Eigen::MatrixXd joint_representation(const trace::Request& request, const Vocabulary& vocab,
                                     const EmbeddingSet& tables, const NumericEncoder& encoder);

}  // namespace tracelm::encode
