#pragma once
// Flat key=value run configuration: UTF-8 lines, '#' comments, dotted keys.
// Command-line "--key value" overrides win over file values. Unknown keys
// are rejected so typos fail loudly.

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "aclm/loop.hpp"
#include "aclm/synthgen.hpp"

namespace aclm {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using KvMap = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}
}  // namespace detail

inline KvMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  KvMap kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

namespace detail {

inline int cfg_int(const KvMap& kv, const std::string& key, int dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key " + key + ": not an integer: '" + it->second + "'");
  }
}

inline long long cfg_ll(const KvMap& kv, const std::string& key, long long dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key " + key + ": not an integer: '" + it->second + "'");
  }
}

inline uint64_t cfg_u64(const KvMap& kv, const std::string& key, uint64_t dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key " + key + ": not an unsigned integer: '" + it->second + "'");
  }
}

inline double cfg_double(const KvMap& kv, const std::string& key, double dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key " + key + ": not a number: '" + it->second + "'");
  }
}

inline bool cfg_bool(const KvMap& kv, const std::string& key, bool dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
  if (it->second == "0" || it->second == "false" || it->second == "no") return false;
  throw ConfigError("config key " + key + ": not a boolean: '" + it->second + "'");
}

inline std::string cfg_str(const KvMap& kv, const std::string& key, const std::string& dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

}  // namespace detail

// Every recognized key with its default. run.* keys normally arrive from the
// command line (--out, --force, --resume).
struct RunConfig {
  std::string corpus_path;
  int vocab_cap = 512;
  int seq_len = 128;
  ModelConfig model;
  TrainConfig train;
  AclmConfig aclm;
  GrammarSpec synth;
  int synth_n_tokens = 50000;
  int synth_n_pairs = 500;
  bool eval_normalize = false;
  uint64_t seed = 42;
  int threads = 0;
  std::string out_dir;
  bool force = false;
  std::string resume;

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "corpus.path", "corpus.vocab_cap", "corpus.seq_len",
        "model.n_layers", "model.hidden_size", "model.n_heads", "model.ff_size",
        "model.dropout_hidden", "model.dropout_attn", "model.elc_weighting",
        "model.tied_output", "model.layer_norm_eps",
        "train.peak_lr", "train.final_lr", "train.warmup_ratio", "train.total_steps",
        "train.weight_decay", "train.grad_clip_norm", "train.batch_size",
        "train.grad_accumulation", "train.mask_prob",
        "aclm.n_initial", "aclm.k", "aclm.n_iterations", "aclm.n_epochs",
        "aclm.signature_dim", "aclm.criterion", "aclm.backend", "aclm.checkpoint_every",
        "surprisal.pll_stride", "surprisal.trigram_alpha",
        "index.metric",
        "eval.normalize_by_length",
        "synth.n_classes", "synth.n_nouns", "synth.n_verbs", "synth.n_distractors",
        "synth.len_min", "synth.len_max", "synth.n_tokens", "synth.n_pairs",
        "seed", "threads",
        "run.out", "run.force", "run.resume",
    };
    return keys;
  }

  static RunConfig from_map(const KvMap& kv) {
    for (const auto& [key, value] : kv) {
      (void)value;
      if (!known_keys().count(key)) throw ConfigError("unknown config key: " + key);
    }
    using namespace detail;
    RunConfig c;
    c.corpus_path = cfg_str(kv, "corpus.path", "");
    c.vocab_cap = cfg_int(kv, "corpus.vocab_cap", 512);
    c.seq_len = cfg_int(kv, "corpus.seq_len", 128);

    c.model.n_layers = cfg_int(kv, "model.n_layers", 2);
    c.model.hidden_size = cfg_int(kv, "model.hidden_size", 64);
    c.model.n_heads = cfg_int(kv, "model.n_heads", 2);
    c.model.ff_size = cfg_int(kv, "model.ff_size", 128);
    c.model.dropout_hidden = cfg_double(kv, "model.dropout_hidden", 0.0);
    c.model.dropout_attn = cfg_double(kv, "model.dropout_attn", 0.0);
    c.model.elc_weighting = cfg_bool(kv, "model.elc_weighting", true);
    c.model.tied_output = cfg_bool(kv, "model.tied_output", true);
    c.model.layer_norm_eps = cfg_double(kv, "model.layer_norm_eps", 1e-7);
    c.model.seq_len = c.seq_len;

    c.train.peak_lr = cfg_double(kv, "train.peak_lr", 0.004);
    c.train.final_lr = cfg_double(kv, "train.final_lr", 0.0004);
    c.train.warmup_ratio = cfg_double(kv, "train.warmup_ratio", 0.016);
    c.train.total_steps = cfg_ll(kv, "train.total_steps", 0);
    c.train.weight_decay = cfg_double(kv, "train.weight_decay", 0.01);
    c.train.grad_clip_norm = cfg_double(kv, "train.grad_clip_norm", 2.0);
    c.train.batch_size = cfg_int(kv, "train.batch_size", 8);
    c.train.grad_accumulation = cfg_int(kv, "train.grad_accumulation", 1);
    c.train.mask_prob = cfg_double(kv, "train.mask_prob", 0.15);

    c.aclm.n_initial = cfg_int(kv, "aclm.n_initial", 0);
    c.aclm.k = cfg_int(kv, "aclm.k", 0);
    c.aclm.n_iterations = cfg_int(kv, "aclm.n_iterations", 20);
    c.aclm.n_epochs = cfg_int(kv, "aclm.n_epochs", 1);
    c.aclm.signature_dim = cfg_int(kv, "aclm.signature_dim", 32);
    try {
      c.aclm.criterion = parse_criterion(cfg_str(kv, "aclm.criterion", "max"));
      c.aclm.backend = parse_backend(cfg_str(kv, "aclm.backend", "mlm"));
      c.aclm.metric = parse_metric(cfg_str(kv, "index.metric", "euclidean"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    c.aclm.checkpoint_every = cfg_int(kv, "aclm.checkpoint_every", 5);
    c.aclm.pll_stride = cfg_int(kv, "surprisal.pll_stride", 0);
    c.aclm.trigram_alpha = cfg_double(kv, "surprisal.trigram_alpha", 0.1);

    c.eval_normalize = cfg_bool(kv, "eval.normalize_by_length", false);

    c.synth.n_classes = cfg_int(kv, "synth.n_classes", 2);
    c.synth.n_nouns = cfg_int(kv, "synth.n_nouns", 30);
    c.synth.n_verbs = cfg_int(kv, "synth.n_verbs", 30);
    c.synth.n_distractors = cfg_int(kv, "synth.n_distractors", 75);
    c.synth.len_min = cfg_int(kv, "synth.len_min", 4);
    c.synth.len_max = cfg_int(kv, "synth.len_max", 8);
    c.synth_n_tokens = cfg_int(kv, "synth.n_tokens", 50000);
    c.synth_n_pairs = cfg_int(kv, "synth.n_pairs", 500);

    c.seed = cfg_u64(kv, "seed", 42);
    c.threads = cfg_int(kv, "threads", 0);
    c.aclm.seed = c.seed;
    c.aclm.threads = c.threads;
    c.train.seed = c.seed;
    c.synth.seed = c.seed;

    c.out_dir = cfg_str(kv, "run.out", "");
    c.force = cfg_bool(kv, "run.force", false);
    c.resume = cfg_str(kv, "run.resume", "");
    return c;
  }

  // Fully resolved key set, written into the output dir so later commands
  // (export-curriculum) can rebuild the corpus the run used.
  KvMap to_map() const {
    KvMap kv;
    kv["corpus.path"] = corpus_path;
    kv["corpus.vocab_cap"] = std::to_string(vocab_cap);
    kv["corpus.seq_len"] = std::to_string(seq_len);
    kv["model.n_layers"] = std::to_string(model.n_layers);
    kv["model.hidden_size"] = std::to_string(model.hidden_size);
    kv["model.n_heads"] = std::to_string(model.n_heads);
    kv["model.ff_size"] = std::to_string(model.ff_size);
    kv["model.dropout_hidden"] = detail::format_double(model.dropout_hidden);
    kv["model.dropout_attn"] = detail::format_double(model.dropout_attn);
    kv["model.elc_weighting"] = model.elc_weighting ? "1" : "0";
    kv["model.tied_output"] = model.tied_output ? "1" : "0";
    kv["model.layer_norm_eps"] = detail::format_double(model.layer_norm_eps);
    kv["train.peak_lr"] = detail::format_double(train.peak_lr);
    kv["train.final_lr"] = detail::format_double(train.final_lr);
    kv["train.warmup_ratio"] = detail::format_double(train.warmup_ratio);
    kv["train.total_steps"] = std::to_string(train.total_steps);
    kv["train.weight_decay"] = detail::format_double(train.weight_decay);
    kv["train.grad_clip_norm"] = detail::format_double(train.grad_clip_norm);
    kv["train.batch_size"] = std::to_string(train.batch_size);
    kv["train.grad_accumulation"] = std::to_string(train.grad_accumulation);
    kv["train.mask_prob"] = detail::format_double(train.mask_prob);
    kv["aclm.n_initial"] = std::to_string(aclm.n_initial);
    kv["aclm.k"] = std::to_string(aclm.k);
    kv["aclm.n_iterations"] = std::to_string(aclm.n_iterations);
    kv["aclm.n_epochs"] = std::to_string(aclm.n_epochs);
    kv["aclm.signature_dim"] = std::to_string(aclm.signature_dim);
    kv["aclm.criterion"] = to_string(aclm.criterion);
    kv["aclm.backend"] = to_string(aclm.backend);
    kv["aclm.checkpoint_every"] = std::to_string(aclm.checkpoint_every);
    kv["surprisal.pll_stride"] = std::to_string(aclm.pll_stride);
    kv["surprisal.trigram_alpha"] = detail::format_double(aclm.trigram_alpha);
    kv["index.metric"] = aclm.metric == Metric::kEuclidean ? "euclidean" : "cosine";
    kv["eval.normalize_by_length"] = eval_normalize ? "1" : "0";
    kv["synth.n_classes"] = std::to_string(synth.n_classes);
    kv["synth.n_nouns"] = std::to_string(synth.n_nouns);
    kv["synth.n_verbs"] = std::to_string(synth.n_verbs);
    kv["synth.n_distractors"] = std::to_string(synth.n_distractors);
    kv["synth.len_min"] = std::to_string(synth.len_min);
    kv["synth.len_max"] = std::to_string(synth.len_max);
    kv["synth.n_tokens"] = std::to_string(synth_n_tokens);
    kv["synth.n_pairs"] = std::to_string(synth_n_pairs);
    kv["seed"] = std::to_string(seed);
    kv["threads"] = std::to_string(threads);
    return kv;
  }
};

inline void write_config_file(const std::string& path, const KvMap& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config: " + path);
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

}  // namespace aclm
