#include "tracelm/ngram.hpp"

#include <stdexcept>

namespace tracelm::lm {

NgramModel::NgramModel(int n, double alpha, int name_vocab_size)
    : n_(n), alpha_(alpha), vocab_size_(name_vocab_size) {
  if (n < 1) throw std::invalid_argument("NgramModel: n must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("NgramModel: alpha must be >= 0");
  if (name_vocab_size < 1) throw std::invalid_argument("NgramModel: vocab size must be >= 1");
}

void NgramModel::fit(const std::vector<trace::Request>& corpus, const encode::Vocabulary& vocab) {
  if (corpus.empty()) throw std::invalid_argument("NgramModel::fit: empty corpus");
  std::vector<std::vector<int>> sequences;
  sequences.reserve(corpus.size());
  for (const auto& r : corpus) {
    std::vector<int> ids;
    ids.reserve(r.events.size());
    for (const auto& e : r.events) ids.push_back(vocab.name.lookup(e.name));
    sequences.push_back(std::move(ids));
  }
  fit_ids(sequences);
}

void NgramModel::fit_ids(const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) throw std::invalid_argument("NgramModel::fit_ids: empty corpus");
  for (const auto& ids : sequences) {
    Context context(static_cast<std::size_t>(n_ - 1), encode::kSosIndex);
    for (int id : ids) {
      ++context_counts_[context];
      ++joint_counts_[{context, id}];
      if (n_ > 1) {
        context.erase(context.begin());
        context.push_back(id);
      }
    }
  }
}

double NgramModel::probability(const Context& context, int token) const {
  if (static_cast<int>(context.size()) != n_ - 1)
    throw std::invalid_argument("NgramModel::probability: context length must be n-1");
  const std::int64_t ctx = context_count(context);
  if (ctx == 0 && alpha_ == 0.0) return 1.0 / static_cast<double>(vocab_size_);
  const std::int64_t joint = joint_count(context, token);
  return (static_cast<double>(joint) + alpha_) /
         (static_cast<double>(ctx) + alpha_ * static_cast<double>(vocab_size_));
}

Eigen::MatrixXd NgramModel::conditionals(const std::vector<int>& target_ids) const {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(target_ids.size()), vocab_size_);
  Context context(static_cast<std::size_t>(n_ - 1), encode::kSosIndex);
  for (std::size_t i = 0; i < target_ids.size(); ++i) {
    for (int t = 0; t < vocab_size_; ++t)
      rows(static_cast<Eigen::Index>(i), t) = probability(context, t);
    if (n_ > 1) {
      context.erase(context.begin());
      context.push_back(target_ids[i]);
    }
  }
  return rows;
}

std::int64_t NgramModel::context_count(const Context& context) const {
  auto it = context_counts_.find(context);
  return it == context_counts_.end() ? 0 : it->second;
}

std::int64_t NgramModel::joint_count(const Context& context, int token) const {
  auto it = joint_counts_.find({context, token});
  return it == joint_counts_.end() ? 0 : it->second;
}

std::vector<std::vector<std::int64_t>> NgramModel::export_counts() const {
  std::vector<std::vector<std::int64_t>> rows;
  rows.reserve(joint_counts_.size());
  for (const auto& [key, count] : joint_counts_) {
    std::vector<std::int64_t> row;
    row.reserve(key.first.size() + 2);
    for (int id : key.first) row.push_back(id);
    row.push_back(key.second);
    row.push_back(count);
    rows.push_back(std::move(row));
  }
  return rows;
}

void NgramModel::import_counts(const std::vector<std::vector<std::int64_t>>& rows) {
  context_counts_.clear();
  joint_counts_.clear();
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != n_ + 1)
      throw std::invalid_argument("NgramModel::import_counts: row width mismatch");
    Context context(row.begin(), row.end() - 2);
    const int token = static_cast<int>(row[row.size() - 2]);
    const std::int64_t count = row.back();
    joint_counts_[{context, token}] = count;
    context_counts_[context] += count;
  }
}

}  // namespace tracelm::lm
