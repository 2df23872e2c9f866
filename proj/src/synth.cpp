#include "tracelm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace tracelm::synth {

namespace {

constexpr double kProbSumTol = 1e-9;

void check_distribution(const Eigen::VectorXd& v, const std::string& what) {
  if (v.size() == 0) throw std::invalid_argument(what + ": empty");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) throw std::invalid_argument(what + ": negative entry");
    sum += v[i];
  }
  if (std::abs(sum - 1.0) > kProbSumTol) throw std::invalid_argument(what + ": does not sum to 1");
}

// Reachability over edges T[s,t] > 0, from `start`, optionally on the
// transposed graph.
std::vector<bool> reachable(const Eigen::MatrixXd& T, std::size_t start, bool reverse) {
  const std::size_t n = static_cast<std::size_t>(T.rows());
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const std::size_t s = stack.back();
    stack.pop_back();
    for (std::size_t t = 0; t < n; ++t) {
      const double p = reverse ? T(t, s) : T(s, t);
      if (p > 0.0 && !seen[t]) {
        seen[t] = true;
        stack.push_back(t);
      }
    }
  }
  return seen;
}

bool irreducible(const Eigen::MatrixXd& T) {
  auto fwd = reachable(T, 0, false);
  auto bwd = reachable(T, 0, true);
  for (std::size_t i = 0; i < fwd.size(); ++i)
    if (!fwd[i] || !bwd[i]) return false;
  return true;
}

const std::vector<std::string>& syscall_name_pool() {
  static const std::vector<std::string> pool = {
      "recvfrom", "read",   "write",  "poll",   "sendto", "close",
      "openat",   "fstat",  "mmap",   "futex",  "epoll_wait", "getpid",
      "lseek",    "select", "accept", "shutdown", "brk",  "ioctl",
      "socket",   "stat",   "unlink", "chmod",  "dup2",   "pipe"};
  return pool;
}

}  // namespace

void BehaviorSpec::validate() const {
  const std::size_t n = state_count();
  if (n == 0) throw std::invalid_argument("BehaviorSpec: empty alphabet");
  for (const auto& a : alphabet)
    if (a.empty()) throw std::invalid_argument("BehaviorSpec: empty alphabet token");
  if (transition.rows() != static_cast<Eigen::Index>(n) ||
      transition.cols() != static_cast<Eigen::Index>(n))
    throw std::invalid_argument("BehaviorSpec: transition shape mismatch");
  for (Eigen::Index r = 0; r < transition.rows(); ++r)
    check_distribution(transition.row(r).transpose(), "transition row " + std::to_string(r));
  if (initial.size() != static_cast<Eigen::Index>(n))
    throw std::invalid_argument("BehaviorSpec: initial vector size mismatch");
  check_distribution(initial, "initial distribution");
  if (delta_lognormal.size() != n)
    throw std::invalid_argument("BehaviorSpec: delta_lognormal size mismatch");
  for (const auto& [mu, sigma] : delta_lognormal) {
    (void)mu;
    if (sigma < 0.0) throw std::invalid_argument("BehaviorSpec: gap sigma < 0");
  }
  if (length.min < 1) throw std::invalid_argument("BehaviorSpec: length min must be >= 1");
  if (length.max < length.min) throw std::invalid_argument("BehaviorSpec: length max < min");
  if (length.stddev < 0.0) throw std::invalid_argument("BehaviorSpec: length stddev < 0");
  if (procname_dist.values.empty() || procname_dist.values.size() != procname_dist.probs.size())
    throw std::invalid_argument("BehaviorSpec: bad procname distribution");
  if (ret_dist.values.empty() || ret_dist.values.size() != ret_dist.probs.size())
    throw std::invalid_argument("BehaviorSpec: bad ret distribution");
}

void WorkloadConfig::validate() const {
  id_behavior.validate();
  if (train_count == 0 || val_count == 0 || test_count == 0)
    throw std::invalid_argument("WorkloadConfig: ID split counts must be positive");
  std::vector<std::string> names;
  for (const auto& b : ood_behaviors) {
    b.validate();
    names.push_back(b.name);
  }
  if (!ood_behaviors.empty() && (ood_val_count == 0 || ood_test_count == 0))
    throw std::invalid_argument("WorkloadConfig: OOD split counts must be positive");
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw std::invalid_argument("WorkloadConfig: duplicate OOD behavior name");
}

trace::Request generate_request(const BehaviorSpec& spec, Rng& rng) {
  const std::size_t n_states = spec.state_count();

  double len_real = rng.normal(spec.length.mean, spec.length.stddev);
  auto length = static_cast<std::size_t>(std::llround(
      std::clamp(len_real, static_cast<double>(spec.length.min), static_cast<double>(spec.length.max))));

  trace::Request request;
  request.label = spec.name;
  request.events.reserve(length);

  // One worker thread per request.
  const std::int64_t tid = 100 + static_cast<std::int64_t>(rng.below(16));

  std::size_t state = static_cast<std::size_t>(
      rng.categorical({spec.initial.data(), static_cast<std::size_t>(spec.initial.size())}));
  Eigen::RowVectorXd row(n_states);
  std::int64_t ts = 0;
  for (std::size_t i = 0; i < length; ++i) {
    trace::SyscallEvent e;
    e.name = spec.alphabet[state];
    e.ts_ns = ts;
    e.ret = spec.ret_dist.values[rng.categorical(spec.ret_dist.probs)];
    e.procname = spec.procname_dist.values[rng.categorical(spec.procname_dist.probs)];
    e.tid = tid;
    e.pid = tid;
    e.entry = rng.uniform() < 0.5;
    request.events.push_back(std::move(e));

    if (i + 1 < length) {
      row = spec.transition.row(state);
      state = rng.categorical({row.data(), n_states});
      // The gap before an event is drawn from the distribution of the state
      // being entered, so inter-event times carry state information.
      const auto& [mu, sigma] = spec.delta_lognormal[state];
      const std::int64_t gap = std::llround(rng.lognormal(mu, sigma));
      ts += std::max<std::int64_t>(gap, 0);
    }
  }
  trace::compute_deltas(request);
  request.duration_ns = request.events.back().ts_ns - request.events.front().ts_ns;
  return request;
}

std::vector<trace::Request> generate_requests(const BehaviorSpec& spec, std::size_t count, Rng& rng) {
  spec.validate();
  std::vector<trace::Request> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_request(spec, rng));
  return out;
}

void generate_dataset(const WorkloadConfig& config, const std::filesystem::path& out_dir) {
  config.validate();

  struct Split {
    std::string dir;
    const BehaviorSpec* spec;
    std::size_t count;
  };
  std::vector<Split> splits = {
      {"train_id", &config.id_behavior, config.train_count},
      {"val_id", &config.id_behavior, config.val_count},
      {"test_id", &config.id_behavior, config.test_count},
  };
  for (const auto& b : config.ood_behaviors) {
    splits.push_back({"val_" + b.name, &b, config.ood_val_count});
    splits.push_back({"test_" + b.name, &b, config.ood_test_count});
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  for (const Split& split : splits) {
    Rng rng(Rng::derive(config.seed, split.dir));
    auto requests = generate_requests(*split.spec, split.count, rng);
    const auto dir = out_dir / split.dir;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    trace::write_request_file(dir / "requests.jsonl", requests);
  }

  nlohmann::json manifest;
  manifest["seed"] = config.seed;
  manifest["id_behavior"] = config.id_behavior.name;
  nlohmann::json oods = nlohmann::json::array();
  for (const auto& b : config.ood_behaviors) oods.push_back(b.name);
  manifest["ood_behaviors"] = std::move(oods);
  manifest["counts"] = {{"train", config.train_count},
                        {"val", config.val_count},
                        {"test", config.test_count},
                        {"ood_val", config.ood_val_count},
                        {"ood_test", config.ood_test_count}};
  std::ofstream mf(out_dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir.string());
  mf << manifest.dump(2) << '\n';
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  const Eigen::Index n = transition.rows();
  if (n == 0 || transition.cols() != n)
    throw std::invalid_argument("stationary_distribution: matrix must be square");
  // Solve pi^T T = pi^T with sum(pi) = 1: replace one equation of
  // (T^T - I) pi = 0 by the normalization row.
  Eigen::MatrixXd A = transition.transpose() - Eigen::MatrixXd::Identity(n, n);
  A.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[n - 1] = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  for (Eigen::Index i = 0; i < n; ++i) pi[i] = std::max(pi[i], 0.0);
  pi /= pi.sum();
  return pi;
}

double analytic_entropy_rate(const BehaviorSpec& spec) {
  spec.validate();
  if (!irreducible(spec.transition))
    throw std::invalid_argument("analytic_entropy_rate: chain is not irreducible");
  const Eigen::VectorXd pi = stationary_distribution(spec.transition);
  double bits = 0.0;
  for (Eigen::Index s = 0; s < spec.transition.rows(); ++s) {
    double row_entropy = 0.0;
    for (Eigen::Index t = 0; t < spec.transition.cols(); ++t) {
      const double p = spec.transition(s, t);
      if (p > 0.0) row_entropy -= p * std::log2(p);
    }
    bits += pi[s] * row_entropy;
  }
  return bits;
}

BehaviorSpec make_id_behavior(const SynthParams& params, std::uint64_t seed) {
  const std::size_t n = params.alphabet_size;
  if (n < 2) throw std::invalid_argument("make_id_behavior: need at least 2 states");
  const std::size_t group = std::max<std::size_t>(1, params.alias_group_size);
  const std::size_t name_count = (n + group - 1) / group;

  BehaviorSpec spec;
  spec.name = "id";
  Rng rng(Rng::derive(seed, "id-behavior"));

  // Gap ranks: order[rank] = the state holding that rank, with medians
  // log-spaced over [mu_min, mu_max].
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const double lo = std::log(params.gap_mu_min_ns);
  const double hi = std::log(params.gap_mu_max_ns);
  spec.delta_lognormal.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double mu = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(r) / (n - 1);
    spec.delta_lognormal[order[r]] = {mu, params.gap_sigma};
  }

  // Name j covers ranks {j, j + name_count, j + 2 name_count, ...}: every
  // syscall name recurs at several staggered gap scales, so the observable
  // name alone cannot determine the hidden state while the inter-event time
  // can. This is what gives the trace genuine timing-dependent structure.
  const auto& pool = syscall_name_pool();
  spec.alphabet.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j = r % name_count;
    spec.alphabet[order[r]] = j < pool.size() ? pool[j] : "sys_" + std::to_string(j);
  }

  // Each state: a self loop and a ring edge guarantee irreducibility and
  // aperiodicity; the rest of the mass goes to a few random successors.
  // Same-name states avoid each other's successors, so confusing two of
  // them costs real prediction accuracy.
  spec.transition = Eigen::MatrixXd::Zero(n, n);
  const double rest = 1.0 - params.self_loop - params.ring_mass;
  if (rest <= 0.0) throw std::invalid_argument("make_id_behavior: self_loop + ring_mass >= 1");
  // Successor ranks are drawn with geometric bias toward fast states, the
  // way real traces concentrate on sub-microsecond syscalls.
  std::vector<double> rank_weight(n);
  for (std::size_t r = 0; r < n; ++r) rank_weight[r] = std::pow(params.fast_bias, static_cast<double>(r));
  std::vector<std::vector<std::size_t>> group_avoid(name_count);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t s = order[r];
    std::vector<std::size_t>& avoid = group_avoid[r % name_count];
    const std::size_t degree = std::min(params.out_degree, n);
    std::vector<std::size_t> successors;
    std::size_t attempts = 0;
    while (successors.size() < degree) {
      const std::size_t t = order[rng.categorical(rank_weight)];
      const bool dup = std::find(successors.begin(), successors.end(), t) != successors.end();
      const bool clash = ++attempts < 200 * degree &&
                         std::find(avoid.begin(), avoid.end(), t) != avoid.end();
      if (!dup && !clash) successors.push_back(t);
    }
    std::vector<double> weights(degree);
    double wsum = 0.0;
    for (auto& w : weights) {
      w = -std::log(1.0 - rng.uniform());  // Exp(1)
      wsum += w;
    }
    for (std::size_t j = 0; j < degree; ++j)
      spec.transition(s, successors[j]) += rest * weights[j] / wsum;
    avoid.insert(avoid.end(), successors.begin(), successors.end());
  }
  spec.transition.diagonal().array() += params.self_loop;
  for (std::size_t s = 0; s < n; ++s) spec.transition(s, (s + 1) % n) += params.ring_mass;
  for (std::size_t s = 0; s < n; ++s) spec.transition.row(s) /= spec.transition.row(s).sum();

  spec.initial = stationary_distribution(spec.transition);

  spec.length = params.length;
  spec.procname_dist = {{"srv_worker", "srv_db"}, {0.85, 0.15}};
  spec.ret_dist = {{0, 1, 8, -11}, {0.55, 0.2, 0.2, 0.05}};
  spec.validate();
  return spec;
}

BehaviorSpec make_latency_variant(const BehaviorSpec& id_spec, double scale) {
  if (scale <= 0.0) throw std::invalid_argument("make_latency_variant: scale must be positive");
  BehaviorSpec spec = id_spec;
  spec.name = "latency";
  for (auto& [mu, sigma] : spec.delta_lognormal) {
    mu += std::log(scale);
    (void)sigma;
  }
  return spec;
}

BehaviorSpec make_mixture_variant(const BehaviorSpec& id_spec, double beta) {
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("make_mixture_variant: beta in [0,1]");
  BehaviorSpec spec = id_spec;
  spec.name = "mixture";

  // The two least-visited names under the ID chain become dominant,
  // mirroring a workload whose common syscalls change.
  const Eigen::VectorXd pi = stationary_distribution(id_spec.transition);
  std::vector<std::size_t> idx(id_spec.state_count());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (pi[a] != pi[b]) return pi[a] < pi[b];
    return a < b;
  });
  const std::size_t rare0 = idx[0];
  const std::size_t rare1 = idx.size() > 1 ? idx[1] : idx[0];

  for (Eigen::Index s = 0; s < spec.transition.rows(); ++s) {
    spec.transition.row(s) *= (1.0 - beta);
    spec.transition(s, rare0) += beta * 0.5;
    spec.transition(s, rare1) += beta * 0.5;
    spec.transition.row(s) /= spec.transition.row(s).sum();
  }
  spec.initial = stationary_distribution(spec.transition);
  return spec;
}

BehaviorSpec make_length_variant(const BehaviorSpec& id_spec, double scale) {
  if (scale <= 0.0) throw std::invalid_argument("make_length_variant: scale must be positive");
  BehaviorSpec spec = id_spec;
  spec.name = "length";
  spec.length.mean *= scale;
  spec.length.stddev *= scale;
  spec.length.max = std::max<std::size_t>(
      spec.length.max, static_cast<std::size_t>(spec.length.mean + 4.0 * spec.length.stddev));
  return spec;
}

}  // namespace tracelm::synth
