#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tracelm/autodiff.hpp"
#include "tracelm/encode.hpp"
#include "tracelm/rng.hpp"

namespace tracelm::lm {

enum class Arch { ngram, lstm, transformer, longformer };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& text);

// Architecture hyperparameters; stored in checkpoints.
struct ModelSpec {
  Arch arch = Arch::lstm;
  int layers = 2;
  int width = 64;
  int heads = 4;
  int window = 32;   // longformer sliding window
  int globals = 1;   // longformer global tokens (the first `globals` positions)
  int ff_mult = 4;
  int embed_dim = 32;
  int encode_dim = 32;
  int name_vocab = 0;
  int ret_vocab = 0;
  int entry_vocab = 0;
  int proc_vocab = 0;

  int d_model() const { return 4 * embed_dim + 3 * encode_dim; }
  int head_dim() const { return width / heads; }
  int ff_dim() const { return ff_mult * width; }
  bool is_attention() const { return arch == Arch::transformer || arch == Arch::longformer; }
  void validate() const;
};

// Named parameter arrays in a stable order (checkpoint and Adam state
// follow this order).
template <class S>
struct Params {
  std::vector<std::pair<std::string, ad::Mat<S>>> arrays;

  ad::Mat<S>& at(const std::string& name) {
    for (auto& [n, m] : arrays)
      if (n == name) return m;
    throw std::invalid_argument("Params: unknown array " + name);
  }
  const ad::Mat<S>& at(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return m;
    throw std::invalid_argument("Params: unknown array " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return true;
    return false;
  }

  template <class T>
  Params<T> cast() const {
    Params<T> out;
    out.arrays.reserve(arrays.size());
    for (const auto& [n, m] : arrays) out.arrays.emplace_back(n, m.template cast<T>());
    return out;
  }
};

template <class S>
Params<S> init_params(const ModelSpec& spec, std::uint64_t seed);

// Tape-bound view of the parameters for one forward pass.
template <class S>
struct BoundParams {
  std::vector<std::pair<std::string, ad::Var>> vars;

  ad::Var at(const std::string& name) const {
    for (const auto& [n, v] : vars)
      if (n == name) return v;
    throw std::invalid_argument("BoundParams: unknown array " + name);
  }
};

template <class S>
BoundParams<S> bind_params(ad::Tape<S>& tape, const Params<S>& params) {
  BoundParams<S> bound;
  bound.vars.reserve(params.arrays.size());
  for (const auto& [name, value] : params.arrays) bound.vars.emplace_back(name, tape.leaf(value));
  return bound;
}

struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when train && dropout > 0
};

// Per-sequence forward pass. Consumes representation rows 0..N-1 (SOS plus
// events 1..N-1) and returns an N x name_vocab logits matrix whose row i is
// the prediction for token i+1.
template <class S>
ad::Var forward_request(ad::Tape<S>& tape, const ModelSpec& spec, const BoundParams<S>& bound,
                        const encode::EncodedRequest& enc, const ForwardOptions& opts = {});

// Batched LSTM forward over padded sequences. Returns logits stacked
// timestep-major: row t*B + b predicts token t+1 of sequence b. Rows of
// padded steps are garbage; flat_targets marks them with -1.
template <class S>
ad::Var lstm_forward_batch(ad::Tape<S>& tape, const ModelSpec& spec, const BoundParams<S>& bound,
                           std::span<const encode::EncodedRequest* const> batch,
                           std::vector<int>& flat_targets, const ForwardOptions& opts = {});

// Attention connectivity. Full causal: j <= i. Longformer: additionally
// j within the sliding window, or j a global token, or i a global token.
ad::BoolMask causal_mask(Eigen::Index n);
ad::BoolMask longformer_mask(Eigen::Index n, int window, std::span<const Eigen::Index> global_positions);

// Raw attention primitives used by the models and exercised directly by
// tests: softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated.
// No output projection is applied here.
template <class S>
ad::Var masked_attention(ad::Tape<S>& tape, ad::Var queries, ad::Var keys, ad::Var values,
                         int heads, const ad::BoolMask& allowed);

// ---------------------------------------------------------------------------
// Implementation
// ---------------------------------------------------------------------------

inline void ModelSpec::validate() const {
  if (arch == Arch::ngram) throw std::invalid_argument("ModelSpec: ngram has no neural spec");
  if (layers < 1) throw std::invalid_argument("ModelSpec: layers must be >= 1");
  if (width < 1) throw std::invalid_argument("ModelSpec: width must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("ModelSpec: embed_dim must be >= 1");
  if (encode_dim < 2 || encode_dim % 2 != 0)
    throw std::invalid_argument("ModelSpec: encode_dim must be even and >= 2");
  if (name_vocab < 2 || ret_vocab < 2 || entry_vocab < 2 || proc_vocab < 2)
    throw std::invalid_argument("ModelSpec: vocab sizes not set");
  if (is_attention()) {
    if (heads < 1 || width % heads != 0)
      throw std::invalid_argument("ModelSpec: width must be divisible by heads");
    if (width % 2 != 0)
      throw std::invalid_argument("ModelSpec: attention width must be even (position encoding)");
    if (ff_mult < 1) throw std::invalid_argument("ModelSpec: ff_mult must be >= 1");
  }
  if (arch == Arch::longformer) {
    if (window < 1) throw std::invalid_argument("ModelSpec: window must be >= 1");
    if (globals < 0) throw std::invalid_argument("ModelSpec: globals must be >= 0");
  }
}

inline std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::ngram: return "ngram";
    case Arch::lstm: return "lstm";
    case Arch::transformer: return "transformer";
    case Arch::longformer: return "longformer";
  }
  throw std::logic_error("unknown arch");
}

inline Arch arch_from_string(const std::string& text) {
  if (text == "ngram") return Arch::ngram;
  if (text == "lstm") return Arch::lstm;
  if (text == "transformer") return Arch::transformer;
  if (text == "longformer") return Arch::longformer;
  throw std::invalid_argument("unknown model architecture: " + text);
}

namespace detail {

template <class S>
ad::Mat<S> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  ad::Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.uniform(-r, r));
  return m;
}

template <class S>
ad::Mat<S> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  ad::Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.normal(0.0, stddev));
  return m;
}

// Position encodings for attention models reuse the numeric encoder at
// dimension `width`, evaluated at the integer position.
template <class S>
ad::Mat<S> position_encoding(Eigen::Index n, int width) {
  encode::NumericEncoder enc(width);
  ad::Mat<S> out(n, width);
  Eigen::RowVectorXd row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row = enc.encode(static_cast<double>(i));
    for (int c = 0; c < width; ++c) out(i, c) = static_cast<S>(row[c]);
  }
  return out;
}

// Gathers the four embeddings and appends the numeric block for the given
// representation rows [0, rows).
template <class S>
ad::Var assemble_input_rows(ad::Tape<S>& tape, const BoundParams<S>& bound,
                            const encode::EncodedRequest& enc, Eigen::Index rows) {
  std::vector<int> name(enc.name.begin(), enc.name.begin() + rows);
  std::vector<int> ret(enc.ret.begin(), enc.ret.begin() + rows);
  std::vector<int> entry(enc.entry.begin(), enc.entry.begin() + rows);
  std::vector<int> proc(enc.procname.begin(), enc.procname.begin() + rows);
  ad::Mat<S> numeric = enc.numeric.topRows(rows).template cast<S>();
  const ad::Var parts[] = {
      tape.gather_rows(bound.at("embed.name"), std::move(name)),
      tape.gather_rows(bound.at("embed.ret"), std::move(ret)),
      tape.gather_rows(bound.at("embed.entry"), std::move(entry)),
      tape.gather_rows(bound.at("embed.procname"), std::move(proc)),
      tape.constant(std::move(numeric)),
  };
  return tape.concat_cols(parts);
}

template <class S>
ad::Var linear(ad::Tape<S>& tape, ad::Var x, const BoundParams<S>& bound, const std::string& stem) {
  return tape.add_rowvec(tape.matmul(x, bound.at(stem + ".w")), bound.at(stem + ".b"));
}

template <class S>
struct LstmState {
  ad::Var h;
  ad::Var c;
};

// One LSTM step for one layer. Gate layout along columns: [i f g o].
template <class S>
LstmState<S> lstm_step(ad::Tape<S>& tape, const BoundParams<S>& bound, const std::string& stem,
                       ad::Var x, const LstmState<S>& prev, int width) {
  ad::Var pre = tape.add(tape.matmul(x, bound.at(stem + ".wx")),
                         tape.matmul(prev.h, bound.at(stem + ".wh")));
  pre = tape.add_rowvec(pre, bound.at(stem + ".b"));
  ad::Var gi = tape.sigmoid(tape.slice_cols(pre, 0, width));
  ad::Var gf = tape.sigmoid(tape.slice_cols(pre, width, width));
  ad::Var gg = tape.tanh(tape.slice_cols(pre, 2 * width, width));
  ad::Var go = tape.sigmoid(tape.slice_cols(pre, 3 * width, width));
  ad::Var c = tape.add(tape.cmul(gf, prev.c), tape.cmul(gi, gg));
  ad::Var h = tape.cmul(go, tape.tanh(c));
  return {h, c};
}

template <class S>
ad::Var attention_block(ad::Tape<S>& tape, const ModelSpec& spec, const BoundParams<S>& bound,
                        const std::string& stem, ad::Var x, const ad::BoolMask& allowed,
                        const ForwardOptions& opts) {
  // Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
  ad::Var a_in = tape.layer_norm_rows(x, bound.at(stem + ".ln1.g"), bound.at(stem + ".ln1.b"));
  ad::Var q = linear(tape, a_in, bound, stem + ".attn.q");
  // No key bias: a per-key constant shifts every score in a softmax row
  // equally, so the distribution is exactly invariant to it.
  ad::Var k = tape.matmul(a_in, bound.at(stem + ".attn.k.w"));
  ad::Var v = linear(tape, a_in, bound, stem + ".attn.v");
  ad::Var heads = masked_attention(tape, q, k, v, spec.heads, allowed);
  ad::Var proj = linear(tape, heads, bound, stem + ".attn.o");
  if (opts.train && opts.dropout > 0.0) proj = tape.dropout(proj, opts.dropout, true, *opts.rng);
  x = tape.add(x, proj);

  ad::Var f_in = tape.layer_norm_rows(x, bound.at(stem + ".ln2.g"), bound.at(stem + ".ln2.b"));
  ad::Var ff = linear(tape, f_in, bound, stem + ".ffn.1");
  ff = tape.gelu(ff);
  ff = linear(tape, ff, bound, stem + ".ffn.2");
  if (opts.train && opts.dropout > 0.0) ff = tape.dropout(ff, opts.dropout, true, *opts.rng);
  return tape.add(x, ff);
}

}  // namespace detail

template <class S>
ad::Var masked_attention(ad::Tape<S>& tape, ad::Var queries, ad::Var keys, ad::Var values,
                         int heads, const ad::BoolMask& allowed) {
  const Eigen::Index width = tape.val(queries).cols();
  if (tape.val(keys).cols() != width || tape.val(values).cols() != width)
    throw std::invalid_argument("masked_attention: width mismatch");
  if (tape.val(keys).rows() != tape.val(queries).rows() ||
      tape.val(values).rows() != tape.val(queries).rows())
    throw std::invalid_argument("masked_attention: length mismatch");
  if (heads < 1 || width % heads != 0)
    throw std::invalid_argument("masked_attention: width not divisible by heads");
  const Eigen::Index dh = width / heads;
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = tape.slice_cols(queries, h * dh, dh);
    ad::Var kh = tape.slice_cols(keys, h * dh, dh);
    ad::Var vh = tape.slice_cols(values, h * dh, dh);
    ad::Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    ad::Var weights = tape.masked_softmax_rows(scores, allowed);
    outputs.push_back(tape.matmul(weights, vh));
  }
  return tape.concat_cols({outputs.data(), outputs.size()});
}

inline ad::BoolMask causal_mask(Eigen::Index n) {
  ad::BoolMask m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i;
  return m;
}

inline ad::BoolMask longformer_mask(Eigen::Index n, int window,
                                    std::span<const Eigen::Index> global_positions) {
  ad::BoolMask m(n, n);
  std::vector<bool> is_global(static_cast<std::size_t>(n), false);
  for (Eigen::Index g : global_positions) {
    if (g < 0 || g >= n) throw std::invalid_argument("longformer_mask: global index out of range");
    is_global[static_cast<std::size_t>(g)] = true;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool in_window = j <= i && i - j <= window;
      const bool global = is_global[static_cast<std::size_t>(j)] ||
                          is_global[static_cast<std::size_t>(i)];
      m(i, j) = j <= i && (in_window || global);
    }
  }
  return m;
}

template <class S>
ad::Var forward_request(ad::Tape<S>& tape, const ModelSpec& spec, const BoundParams<S>& bound,
                        const encode::EncodedRequest& enc, const ForwardOptions& opts) {
  spec.validate();
  if (enc.n_targets() == 0) throw std::invalid_argument("forward_request: empty request");
  const auto n = static_cast<Eigen::Index>(enc.n_targets());  // consume rows 0..N-1

  ad::Var x = detail::assemble_input_rows(tape, bound, enc, n);
  if (tape.val(x).cols() != spec.d_model())
    throw std::invalid_argument("forward_request: representation width mismatch");

  if (spec.arch == Arch::lstm) {
    std::vector<detail::LstmState<S>> states;
    ad::Mat<S> zeros = ad::Mat<S>::Zero(1, spec.width);
    for (int l = 0; l < spec.layers; ++l) {
      ad::Var z = tape.constant(zeros);
      states.push_back({z, z});
    }
    std::vector<ad::Var> tops;
    tops.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index t = 0; t < n; ++t) {
      ad::Var step_in = tape.slice_rows(x, t, 1);
      for (int l = 0; l < spec.layers; ++l) {
        states[static_cast<std::size_t>(l)] =
            detail::lstm_step(tape, bound, "lstm." + std::to_string(l), step_in,
                              states[static_cast<std::size_t>(l)], spec.width);
        step_in = states[static_cast<std::size_t>(l)].h;
        if (opts.train && opts.dropout > 0.0)
          step_in = tape.dropout(step_in, opts.dropout, true, *opts.rng);
      }
      tops.push_back(step_in);
    }
    ad::Var stacked = tape.concat_rows({tops.data(), tops.size()});
    return detail::linear(tape, stacked, bound, "out");
  }

  // Attention architectures.
  x = detail::linear(tape, x, bound, "in");
  x = tape.add(x, tape.constant(detail::position_encoding<S>(n, spec.width)));
  ad::BoolMask allowed;
  if (spec.arch == Arch::transformer) {
    allowed = causal_mask(n);
  } else {
    std::vector<Eigen::Index> globals;
    for (int g = 0; g < spec.globals && g < n; ++g) globals.push_back(g);
    allowed = longformer_mask(n, spec.window, {globals.data(), globals.size()});
  }
  for (int l = 0; l < spec.layers; ++l)
    x = detail::attention_block(tape, spec, bound, "block." + std::to_string(l), x, allowed, opts);
  x = tape.layer_norm_rows(x, bound.at("final_ln.g"), bound.at("final_ln.b"));
  return detail::linear(tape, x, bound, "out");
}

template <class S>
ad::Var lstm_forward_batch(ad::Tape<S>& tape, const ModelSpec& spec, const BoundParams<S>& bound,
                           std::span<const encode::EncodedRequest* const> batch,
                           std::vector<int>& flat_targets, const ForwardOptions& opts) {
  spec.validate();
  if (spec.arch != Arch::lstm) throw std::invalid_argument("lstm_forward_batch: wrong arch");
  if (batch.empty()) throw std::invalid_argument("lstm_forward_batch: empty batch");
  const auto b_size = static_cast<Eigen::Index>(batch.size());
  Eigen::Index t_max = 0;
  for (const auto* enc : batch)
    t_max = std::max(t_max, static_cast<Eigen::Index>(enc->n_targets()));

  const int d = static_cast<int>(batch[0]->numeric.cols());

  std::vector<detail::LstmState<S>> states;
  ad::Mat<S> zeros = ad::Mat<S>::Zero(b_size, spec.width);
  for (int l = 0; l < spec.layers; ++l) {
    ad::Var z = tape.constant(zeros);
    states.push_back({z, z});
  }

  flat_targets.assign(static_cast<std::size_t>(t_max * b_size), -1);
  std::vector<ad::Var> tops;
  tops.reserve(static_cast<std::size_t>(t_max));
  std::vector<int> name(batch.size()), ret(batch.size()), entry(batch.size()), proc(batch.size());
  for (Eigen::Index t = 0; t < t_max; ++t) {
    ad::Mat<S> numeric(b_size, d);
    for (Eigen::Index b = 0; b < b_size; ++b) {
      const auto& enc = *batch[static_cast<std::size_t>(b)];
      const bool active = t < static_cast<Eigen::Index>(enc.n_targets());
      const std::size_t row = active ? static_cast<std::size_t>(t) : 0;  // pad with SOS row
      name[static_cast<std::size_t>(b)] = enc.name[row];
      ret[static_cast<std::size_t>(b)] = enc.ret[row];
      entry[static_cast<std::size_t>(b)] = enc.entry[row];
      proc[static_cast<std::size_t>(b)] = enc.procname[row];
      numeric.row(b) = enc.numeric.row(static_cast<Eigen::Index>(row)).template cast<S>();
      if (active)
        flat_targets[static_cast<std::size_t>(t * b_size + b)] =
            enc.targets[static_cast<std::size_t>(t)];
    }
    const ad::Var parts[] = {
        tape.gather_rows(bound.at("embed.name"), name),
        tape.gather_rows(bound.at("embed.ret"), ret),
        tape.gather_rows(bound.at("embed.entry"), entry),
        tape.gather_rows(bound.at("embed.procname"), proc),
        tape.constant(std::move(numeric)),
    };
    ad::Var step_in = tape.concat_cols(parts);
    for (int l = 0; l < spec.layers; ++l) {
      states[static_cast<std::size_t>(l)] =
          detail::lstm_step(tape, bound, "lstm." + std::to_string(l), step_in,
                            states[static_cast<std::size_t>(l)], spec.width);
      step_in = states[static_cast<std::size_t>(l)].h;
      if (opts.train && opts.dropout > 0.0)
        step_in = tape.dropout(step_in, opts.dropout, true, *opts.rng);
    }
    tops.push_back(step_in);
  }
  ad::Var stacked = tape.concat_rows({tops.data(), tops.size()});
  return detail::linear(tape, stacked, bound, "out");
}

template <class S>
Params<S> init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Params<S> p;
  auto push = [&p](const std::string& name, ad::Mat<S> m) {
    p.arrays.emplace_back(name, std::move(m));
  };

  {
    Rng rng(Rng::derive(seed, "embed.name"));
    push("embed.name", detail::normal_init<S>(spec.name_vocab, spec.embed_dim, 0.1, rng));
  }
  {
    Rng rng(Rng::derive(seed, "embed.ret"));
    push("embed.ret", detail::normal_init<S>(spec.ret_vocab, spec.embed_dim, 0.1, rng));
  }
  {
    Rng rng(Rng::derive(seed, "embed.entry"));
    push("embed.entry", detail::normal_init<S>(spec.entry_vocab, spec.embed_dim, 0.1, rng));
  }
  {
    Rng rng(Rng::derive(seed, "embed.procname"));
    push("embed.procname", detail::normal_init<S>(spec.proc_vocab, spec.embed_dim, 0.1, rng));
  }

  Rng rng(Rng::derive(seed, "weights"));
  if (spec.arch == Arch::lstm) {
    int in_dim = spec.d_model();
    for (int l = 0; l < spec.layers; ++l) {
      const std::string stem = "lstm." + std::to_string(l);
      push(stem + ".wx", detail::xavier_uniform<S>(in_dim, 4 * spec.width, rng));
      push(stem + ".wh", detail::xavier_uniform<S>(spec.width, 4 * spec.width, rng));
      ad::Mat<S> b = ad::Mat<S>::Zero(1, 4 * spec.width);
      b.middleCols(spec.width, spec.width).setConstant(S(1));  // forget-gate bias
      push(stem + ".b", std::move(b));
      in_dim = spec.width;
    }
  } else {
    push("in.w", detail::xavier_uniform<S>(spec.d_model(), spec.width, rng));
    push("in.b", ad::Mat<S>::Zero(1, spec.width));
    for (int l = 0; l < spec.layers; ++l) {
      const std::string stem = "block." + std::to_string(l);
      push(stem + ".ln1.g", ad::Mat<S>::Ones(1, spec.width));
      push(stem + ".ln1.b", ad::Mat<S>::Zero(1, spec.width));
      for (const char* name : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) {
        push(stem + name + ".w", detail::xavier_uniform<S>(spec.width, spec.width, rng));
        if (std::string(name) != ".attn.k")
          push(stem + name + ".b", ad::Mat<S>::Zero(1, spec.width));
      }
      push(stem + ".ln2.g", ad::Mat<S>::Ones(1, spec.width));
      push(stem + ".ln2.b", ad::Mat<S>::Zero(1, spec.width));
      push(stem + ".ffn.1.w", detail::xavier_uniform<S>(spec.width, spec.ff_dim(), rng));
      push(stem + ".ffn.1.b", ad::Mat<S>::Zero(1, spec.ff_dim()));
      push(stem + ".ffn.2.w", detail::xavier_uniform<S>(spec.ff_dim(), spec.width, rng));
      push(stem + ".ffn.2.b", ad::Mat<S>::Zero(1, spec.width));
    }
    push("final_ln.g", ad::Mat<S>::Ones(1, spec.width));
    push("final_ln.b", ad::Mat<S>::Zero(1, spec.width));
  }
  push("out.w", detail::xavier_uniform<S>(spec.width, spec.name_vocab, rng));
  push("out.b", ad::Mat<S>::Zero(1, spec.name_vocab));
  return p;
}

}  // namespace tracelm::lm
