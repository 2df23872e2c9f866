#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "tracelm/encode.hpp"
#include "tracelm/trace.hpp"

namespace tracelm::lm {

// Count-based Markov baseline over system-call names only. Contexts at the
// start of a request are left-padded with SOS. Additive (alpha) smoothing;
// with alpha == 0 an unseen context falls back to the uniform distribution
// so perplexity stays defined.
class NgramModel {
 public:
  NgramModel() = default;
  NgramModel(int n, double alpha, int name_vocab_size);

  int n() const { return n_; }
  double alpha() const { return alpha_; }
  int name_vocab_size() const { return vocab_size_; }

  // context = (n-1) name ids, most recent last.
  using Context = std::vector<int>;

  void fit(const std::vector<trace::Request>& corpus, const encode::Vocabulary& vocab);
  // Same counting on pre-encoded target id sequences.
  void fit_ids(const std::vector<std::vector<int>>& sequences);

  // P(token | context) under additive smoothing.
  double probability(const Context& context, int token) const;

  // N x V row-stochastic matrix, one row per position of the request.
  Eigen::MatrixXd conditionals(const std::vector<int>& target_ids) const;

  std::int64_t context_count(const Context& context) const;
  std::int64_t joint_count(const Context& context, int token) const;

  // Flattened (context..., token, count) rows for serialization, in
  // deterministic (sorted) order.
  std::vector<std::vector<std::int64_t>> export_counts() const;
  void import_counts(const std::vector<std::vector<std::int64_t>>& rows);

 private:
  int n_ = 1;
  double alpha_ = 0.0;
  int vocab_size_ = 0;
  std::map<Context, std::int64_t> context_counts_;
  std::map<std::pair<Context, int>, std::int64_t> joint_counts_;
};

}  // namespace tracelm::lm
