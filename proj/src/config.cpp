#include "tracelm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace tracelm::config {

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  std::from_chars_result res{};
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for double is incomplete on some toolchains; use stod.
    try {
      std::size_t pos = 0;
      out = static_cast<T>(std::stod(value, &pos));
      if (pos != value.size()) throw std::invalid_argument("trailing characters");
      return out;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
  } else {
    res = std::from_chars(begin, end, out);
    if (res.ec != std::errc{} || res.ptr != end)
      throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    return out;
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [](auto member) {
      return [member](RunConfig& c, const std::string& k, const std::string& v) {
        c.*member = parse_number<std::remove_reference_t<decltype(c.*member)>>(k, v);
      };
    };
    t["seed"] = num(&RunConfig::seed);

    t["model.arch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      try {
        c.arch = lm::arch_from_string(v);
      } catch (const std::exception&) {
        throw ConfigError("config key '" + k + "': unknown architecture '" + v + "'");
      }
    };
    t["model.layers"] = num(&RunConfig::layers);
    t["model.width"] = num(&RunConfig::width);
    t["model.heads"] = num(&RunConfig::heads);
    t["model.window"] = num(&RunConfig::window);
    t["model.globals"] = num(&RunConfig::globals);
    t["model.ff_mult"] = num(&RunConfig::ff_mult);
    t["model.embed_dim"] = num(&RunConfig::embed_dim);
    t["model.encode_dim"] = num(&RunConfig::encode_dim);
    t["model.ngram_n"] = num(&RunConfig::ngram_n);
    t["model.ngram_alpha"] = num(&RunConfig::ngram_alpha);

    t["vocab.min_count"] = num(&RunConfig::min_count);

    t["train.learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.learning_rate = parse_number<double>(k, v);
    };
    t["train.warmup_steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.warmup_steps = parse_number<int>(k, v);
    };
    t["train.label_smoothing"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.label_smoothing = parse_number<double>(k, v);
    };
    t["train.dropout"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.dropout = parse_number<double>(k, v);
    };
    t["train.lr_patience"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.lr_patience = parse_number<int>(k, v);
    };
    t["train.stop_patience"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.stop_patience = parse_number<int>(k, v);
    };
    t["train.lr_factor"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.lr_factor = parse_number<double>(k, v);
    };
    t["train.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.batch_size = parse_number<int>(k, v);
    };
    t["train.max_epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.max_epochs = parse_number<int>(k, v);
    };
    t["train.precision"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "standard") c.train.precision = lm::Precision::standard;
      else if (v == "high-precision-check") c.train.precision = lm::Precision::high_precision_check;
      else throw ConfigError("config key '" + k + "': expected standard|high-precision-check");
    };

    t["detect.max_len"] = num(&RunConfig::max_len);
    t["detect.score_workers"] = num(&RunConfig::score_workers);

    t["inject.delay_count"] = num(&RunConfig::inject_delay_count);
    t["inject.delay_min_ns"] = num(&RunConfig::inject_delay_min_ns);
    t["inject.delay_max_ns"] = num(&RunConfig::inject_delay_max_ns);
    t["inject.position_count"] = num(&RunConfig::inject_position_count);

    t["synth.alphabet_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.alphabet_size = parse_number<std::size_t>(k, v);
    };
    t["synth.out_degree"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.out_degree = parse_number<std::size_t>(k, v);
    };
    t["synth.alias_group_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.alias_group_size = parse_number<std::size_t>(k, v);
    };
    t["synth.gap_mu_min_ns"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.gap_mu_min_ns = parse_number<double>(k, v);
    };
    t["synth.gap_mu_max_ns"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.gap_mu_max_ns = parse_number<double>(k, v);
    };
    t["synth.fast_bias"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.fast_bias = parse_number<double>(k, v);
    };
    t["synth.gap_sigma"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.gap_sigma = parse_number<double>(k, v);
    };
    t["synth.len_mean"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.length.mean = parse_number<double>(k, v);
    };
    t["synth.len_std"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.length.stddev = parse_number<double>(k, v);
    };
    t["synth.len_min"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.length.min = parse_number<std::size_t>(k, v);
    };
    t["synth.len_max"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.length.max = parse_number<std::size_t>(k, v);
    };
    t["synth.latency_scale"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.latency_scale = parse_number<double>(k, v);
    };
    t["synth.mixture_beta"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.mixture_beta = parse_number<double>(k, v);
    };
    t["synth.length_scale"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.synth.length_scale = parse_number<double>(k, v);
    };
    t["synth.train_count"] = num(&RunConfig::synth_train_count);
    t["synth.val_count"] = num(&RunConfig::synth_val_count);
    t["synth.test_count"] = num(&RunConfig::synth_test_count);
    t["synth.ood_val_count"] = num(&RunConfig::synth_ood_val_count);
    t["synth.ood_test_count"] = num(&RunConfig::synth_ood_test_count);
    t["synth.ood"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.synth_ood = v;
    };
    return t;
  }();
  return table;
}

void check_ranges(const RunConfig& c) {
  if (c.layers < 1) throw ConfigError("config key 'model.layers': must be >= 1");
  if (c.width < 1) throw ConfigError("config key 'model.width': must be >= 1");
  if (c.heads < 1) throw ConfigError("config key 'model.heads': must be >= 1");
  if (c.width % c.heads != 0)
    throw ConfigError("config key 'model.width': must be divisible by model.heads");
  if (c.window < 1) throw ConfigError("config key 'model.window': must be >= 1");
  if (c.globals < 0) throw ConfigError("config key 'model.globals': must be >= 0");
  if (c.embed_dim < 1) throw ConfigError("config key 'model.embed_dim': must be >= 1");
  if (c.encode_dim < 2 || c.encode_dim % 2 != 0)
    throw ConfigError("config key 'model.encode_dim': must be even and >= 2");
  if (c.ngram_n < 1) throw ConfigError("config key 'model.ngram_n': must be >= 1");
  if (c.ngram_alpha < 0.0) throw ConfigError("config key 'model.ngram_alpha': must be >= 0");
  if (c.min_count < 1) throw ConfigError("config key 'vocab.min_count': must be >= 1");
  if (c.max_len < 1) throw ConfigError("config key 'detect.max_len': must be >= 1");
  if (c.train.label_smoothing < 0.0 || c.train.label_smoothing >= 1.0)
    throw ConfigError("config key 'train.label_smoothing': must be in [0,1)");
  if (c.train.dropout < 0.0 || c.train.dropout >= 1.0)
    throw ConfigError("config key 'train.dropout': must be in [0,1)");
  if (c.train.learning_rate <= 0.0)
    throw ConfigError("config key 'train.learning_rate': must be positive");
  if (c.train.lr_patience < 1) throw ConfigError("config key 'train.lr_patience': must be >= 1");
  if (c.train.stop_patience < 1)
    throw ConfigError("config key 'train.stop_patience': must be >= 1");
  if (c.train.lr_factor <= 0.0 || c.train.lr_factor >= 1.0)
    throw ConfigError("config key 'train.lr_factor': must be in (0,1)");
  if (c.train.batch_size < 1) throw ConfigError("config key 'train.batch_size': must be >= 1");
  if (c.train.max_epochs < 1) throw ConfigError("config key 'train.max_epochs': must be >= 1");
  if (c.train.warmup_steps < 0)
    throw ConfigError("config key 'train.warmup_steps': must be >= 0");
  if (c.inject_delay_count < 2)
    throw ConfigError("config key 'inject.delay_count': must be >= 2");
  if (c.inject_delay_min_ns <= 0.0 || c.inject_delay_max_ns <= c.inject_delay_min_ns)
    throw ConfigError("config key 'inject.delay_min_ns': need 0 < min < max");
  if (c.inject_position_count < 1)
    throw ConfigError("config key 'inject.position_count': must be >= 1");
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    apply_override(config, key, value);
  }
  check_ranges(config);
  // TrainConfig carries the run seed so training substreams derive from it.
  config.train.seed = config.seed;
  return config;
}

RunConfig validate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

lm::ModelSpec RunConfig::model_spec(const encode::Vocabulary& vocab) const {
  lm::ModelSpec spec;
  spec.arch = arch;
  spec.layers = layers;
  spec.width = width;
  spec.heads = heads;
  spec.window = window;
  spec.globals = globals;
  spec.ff_mult = ff_mult;
  spec.embed_dim = embed_dim;
  spec.encode_dim = encode_dim;
  spec.name_vocab = vocab.name.size();
  spec.ret_vocab = vocab.ret.size();
  spec.entry_vocab = vocab.entry.size();
  spec.proc_vocab = vocab.procname.size();
  return spec;
}

synth::WorkloadConfig RunConfig::workload() const {
  synth::WorkloadConfig w;
  w.seed = seed;
  w.id_behavior = synth::make_id_behavior(synth, seed);
  std::istringstream list(synth_ood);
  std::string item;
  while (std::getline(list, item, ',')) {
    const std::string name = trim(item);
    if (name.empty()) continue;
    if (name == "latency")
      w.ood_behaviors.push_back(synth::make_latency_variant(w.id_behavior, synth.latency_scale));
    else if (name == "mixture")
      w.ood_behaviors.push_back(synth::make_mixture_variant(w.id_behavior, synth.mixture_beta));
    else if (name == "length")
      w.ood_behaviors.push_back(synth::make_length_variant(w.id_behavior, synth.length_scale));
    else
      throw ConfigError("config key 'synth.ood': unknown behavior '" + name + "'");
  }
  w.train_count = synth_train_count;
  w.val_count = synth_val_count;
  w.test_count = synth_test_count;
  w.ood_val_count = synth_ood_val_count;
  w.ood_test_count = synth_ood_test_count;
  return w;
}

}  // namespace tracelm::config
