#pragma once
// The ACLM cycle. Initialization: train a fresh model on a random subset,
// score the pool, build the signature index. Each iteration: pick the
// active-set instance the model is most (or, reversed, least) uncertain
// about, pull its k nearest pool neighbours into the active set, retrain,
// and regenerate the surprisal space under the updated model. The trigram
// backend keeps the space static after initialization instead.
//
// All randomness is derived per phase from (seed, purpose), so a run resumed
// from a checkpoint continues exactly where the uninterrupted run would be.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aclm/checkpoint.hpp"
#include "aclm/corpus.hpp"
#include "aclm/index.hpp"
#include "aclm/scorer.hpp"
#include "aclm/surprisal.hpp"
#include "aclm/train.hpp"

namespace aclm {

enum class Criterion { kMaxSurprisal, kMinSurprisal };
enum class Backend { kMlmDynamic, kTrigramStatic };

inline Criterion parse_criterion(const std::string& s) {
  if (s == "max") return Criterion::kMaxSurprisal;
  if (s == "min") return Criterion::kMinSurprisal;
  throw std::invalid_argument("unknown criterion: " + s + " (expected max|min)");
}
inline std::string to_string(Criterion c) {
  return c == Criterion::kMaxSurprisal ? "max" : "min";
}
inline Backend parse_backend(const std::string& s) {
  if (s == "mlm") return Backend::kMlmDynamic;
  if (s == "trigram") return Backend::kTrigramStatic;
  throw std::invalid_argument("unknown backend: " + s + " (expected mlm|trigram)");
}
inline std::string to_string(Backend b) {
  return b == Backend::kMlmDynamic ? "mlm" : "trigram";
}

struct AclmConfig {
  int n_initial = 0;  // 0 = auto: 5% of the corpus, at least 1
  int k = 0;          // 0 = auto: 2% of the corpus, at least 1
  int n_iterations = 20;
  int n_epochs = 1;
  int signature_dim = 32;
  Criterion criterion = Criterion::kMaxSurprisal;
  Backend backend = Backend::kMlmDynamic;
  uint64_t seed = 42;
  int checkpoint_every = 5;
  // plumbing knobs
  int pll_stride = 0;          // 0 = exact one-position-at-a-time PLL
  double trigram_alpha = 0.1;  // static-backend smoothing
  Metric metric = Metric::kEuclidean;
  int threads = 0;  // scoring parallelism; 0 = hardware concurrency

  void resolve(int corpus_size) {
    if (n_initial == 0) n_initial = std::max(1, static_cast<int>(corpus_size * 0.05 + 0.5));
    if (k == 0) k = std::max(1, static_cast<int>(corpus_size * 0.02 + 0.5));
  }
  void validate(int corpus_size, int seq_len) const {
    if (n_initial < 1 || k < 1) throw std::invalid_argument("AclmConfig: n_initial and k must be >= 1");
    if (n_initial > corpus_size)
      throw std::invalid_argument("AclmConfig: n_initial exceeds corpus size");
    if (n_iterations < 0 || n_epochs < 0)
      throw std::invalid_argument("AclmConfig: n_iterations/n_epochs must be >= 0");
    if (signature_dim < 1 || signature_dim > seq_len)
      throw std::invalid_argument("AclmConfig: signature_dim must be in [1, seq_len]");
    if (checkpoint_every < 1) throw std::invalid_argument("AclmConfig: checkpoint_every must be >= 1");
  }
};

struct IterationRecord {
  int iteration = 0;
  bool has_query = false;
  int query_id = -1;
  double query_mean_surprisal = 0.0;
  std::vector<int> selected_ids;
  int active_size_after = 0;
};

inline nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  if (r.has_query) {
    j["query_id"] = r.query_id;
    j["query_mean_surprisal"] = r.query_mean_surprisal;
  } else {
    j["query_id"] = nullptr;
    j["query_mean_surprisal"] = nullptr;
  }
  j["selected_ids"] = r.selected_ids;
  j["active_size_after"] = r.active_size_after;
  return j;
}

inline IterationRecord iteration_record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.has_query = !j.at("query_id").is_null();
  if (r.has_query) {
    r.query_id = j.at("query_id").get<int>();
    r.query_mean_surprisal = j.at("query_mean_surprisal").get<double>();
  }
  r.selected_ids = j.at("selected_ids").get<std::vector<int>>();
  r.active_size_after = j.at("active_size_after").get<int>();
  return r;
}

struct AclmState {
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  AclmConfig aclm_cfg;
  MaskedLM<float> model;
  OptimizerState<float> opt;
  std::vector<int> active_ids;  // selection order
  std::vector<int> pool_ids;    // ascending
  SignatureIndex index;
  TrigramModel trigram;  // fitted only for the static backend
  int iteration = 0;
  long long global_step = 0;
  int index_rebuilds = 0;
  std::vector<IterationRecord> curriculum;
};

namespace detail {

inline constexpr uint64_t kPurposeModelInit = 1;
inline constexpr uint64_t kPurposeInitialSelect = 2;
inline constexpr uint64_t kPurposeTrainBase = 100;  // + iteration (init trains at 100)

inline std::vector<const Sequence*> gather(const CorpusStore& corpus, const std::vector<int>& ids) {
  std::vector<const Sequence*> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(&corpus.sequences[static_cast<size_t>(id)]);
  return out;
}

}  // namespace detail

// Optimizer steps implied by the growth law, for the LR schedule.
inline long long planned_total_steps(int corpus_size, const AclmConfig& aclm,
                                     const TrainConfig& train) {
  auto steps_for = [&](int active_size) -> long long {
    const long long micro = (active_size + train.batch_size - 1) / train.batch_size;
    const long long per_epoch = (micro + train.grad_accumulation - 1) / train.grad_accumulation;
    return per_epoch * aclm.n_epochs;
  };
  long long total = steps_for(aclm.n_initial);
  for (int i = 1; i <= aclm.n_iterations; ++i) {
    const long long active = std::min<long long>(
        static_cast<long long>(aclm.n_initial) + static_cast<long long>(i) * aclm.k, corpus_size);
    total += steps_for(static_cast<int>(active));
  }
  return total;
}

// Surprisal profile under the signature-space backend.
inline SurprisalProfile backend_profile(const AclmState& st, const Sequence& seq) {
  if (st.aclm_cfg.backend == Backend::kTrigramStatic) return st.trigram.surprisals(seq);
  return mlm_surprisals(st.model, seq, st.aclm_cfg.pll_stride);
}

inline void rebuild_pool_index(AclmState& st, const CorpusStore& corpus) {
  auto pool = detail::gather(corpus, st.pool_ids);
  st.index = rebuild_index(
      pool, [&](const Sequence& s) { return backend_profile(st, s); }, st.aclm_cfg.signature_dim,
      st.aclm_cfg.metric, st.aclm_cfg.threads);
  st.index_rebuilds += 1;
}

// Fresh model, random initial active set, first training pass, first
// surprisal space.
inline AclmState initialize(const CorpusStore& corpus, ModelConfig model_cfg,
                            TrainConfig train_cfg, AclmConfig aclm_cfg) {
  aclm_cfg.resolve(corpus.size());
  aclm_cfg.validate(corpus.size(), corpus.seq_len);
  model_cfg.vocab_size = corpus.vocab.size();
  model_cfg.seq_len = corpus.seq_len;
  model_cfg.validate();
  train_cfg.seed = aclm_cfg.seed;
  if (train_cfg.total_steps == 0)
    train_cfg.total_steps = planned_total_steps(corpus.size(), aclm_cfg, train_cfg);
  train_cfg.validate();

  AclmState st;
  st.model_cfg = model_cfg;
  st.train_cfg = train_cfg;
  st.aclm_cfg = aclm_cfg;
  st.model = MaskedLM<float>(model_cfg);
  {
    Rng rng(mix_seed(aclm_cfg.seed, detail::kPurposeModelInit));
    st.model.init_params(rng);
  }
  st.opt = OptimizerState<float>(model_cfg);

  {
    Rng rng(mix_seed(aclm_cfg.seed, detail::kPurposeInitialSelect));
    st.active_ids = rng.sample_without_replacement(corpus.size(), aclm_cfg.n_initial);
  }
  std::set<int> active_set(st.active_ids.begin(), st.active_ids.end());
  for (int id = 0; id < corpus.size(); ++id)
    if (!active_set.count(id)) st.pool_ids.push_back(id);

  if (aclm_cfg.backend == Backend::kTrigramStatic)
    st.trigram = TrigramModel::fit(corpus.stream(), corpus.vocab.size(), aclm_cfg.trigram_alpha);

  {
    Rng rng(mix_seed(aclm_cfg.seed, detail::kPurposeTrainBase + 0));
    auto active = detail::gather(corpus, st.active_ids);
    train_epochs(st.model, active, st.train_cfg, aclm_cfg.n_epochs, st.opt, rng, st.global_step);
  }
  rebuild_pool_index(st, corpus);
  return st;
}

// Active-set instance with the extreme mean surprisal under the current
// model (ties: lowest id). Each active sequence is scored exactly once.
// Returns (id, mean, profile of the winner).
inline std::tuple<int, double, SurprisalProfile> select_query(const AclmState& st,
                                                              const CorpusStore& corpus) {
  if (st.active_ids.empty()) throw std::logic_error("select_query: empty active set");
  auto active = detail::gather(corpus, st.active_ids);
  auto profiles =
      mlm_surprisals_many(st.model, active, st.aclm_cfg.pll_stride, st.aclm_cfg.threads);
  const bool want_max = st.aclm_cfg.criterion == Criterion::kMaxSurprisal;
  int best_idx = -1;
  double best_mean = 0.0;
  for (size_t i = 0; i < profiles.size(); ++i) {
    const double mean = mean_surprisal(profiles[i]);
    const int id = st.active_ids[i];
    bool better;
    if (best_idx < 0) {
      better = true;
    } else if (mean == best_mean) {
      better = id < st.active_ids[static_cast<size_t>(best_idx)];
    } else {
      better = want_max ? mean > best_mean : mean < best_mean;
    }
    if (better) {
      best_idx = static_cast<int>(i);
      best_mean = mean;
    }
  }
  return {st.active_ids[static_cast<size_t>(best_idx)], best_mean,
          profiles[static_cast<size_t>(best_idx)]};
}

struct IterationMetrics {
  int iteration = 0;
  TrainStats train;
  int active_size = 0;
  int pool_size = 0;
  int index_rebuilds = 0;
};

// One select -> expand -> train -> re-score cycle. With an empty pool the
// iteration degenerates to train-only and is logged with no query.
inline IterationMetrics iterate(AclmState& st, const CorpusStore& corpus) {
  IterationMetrics metrics;
  IterationRecord rec;
  st.iteration += 1;
  rec.iteration = st.iteration;
  metrics.iteration = st.iteration;

  if (!st.pool_ids.empty()) {
    auto [query_id, query_mean, query_profile] = select_query(st, corpus);
    rec.has_query = true;
    rec.query_id = query_id;
    rec.query_mean_surprisal = query_mean;

    // query signature under the same backend as the pool-side space
    const Signature qsig =
        st.aclm_cfg.backend == Backend::kMlmDynamic
            ? resample(query_profile, st.aclm_cfg.signature_dim)
            : resample(st.trigram.surprisals(corpus.sequences[static_cast<size_t>(query_id)]),
                       st.aclm_cfg.signature_dim);
    rec.selected_ids = st.index.knn_take(qsig, st.aclm_cfg.k);

    std::set<int> taken(rec.selected_ids.begin(), rec.selected_ids.end());
    std::vector<int> remaining;
    remaining.reserve(st.pool_ids.size());
    for (int id : st.pool_ids)
      if (!taken.count(id)) remaining.push_back(id);
    st.pool_ids = std::move(remaining);
    for (int id : rec.selected_ids) st.active_ids.push_back(id);
  }

  {
    Rng rng(mix_seed(st.aclm_cfg.seed, detail::kPurposeTrainBase + static_cast<uint64_t>(st.iteration)));
    auto active = detail::gather(corpus, st.active_ids);
    try {
      metrics.train = train_epochs(st.model, active, st.train_cfg, st.aclm_cfg.n_epochs, st.opt,
                                   rng, st.global_step);
    } catch (const DivergenceError& e) {
      throw DivergenceError("iteration " + std::to_string(st.iteration) + ": " + e.what());
    }
  }

  if (st.aclm_cfg.backend == Backend::kMlmDynamic) rebuild_pool_index(st, corpus);

  rec.active_size_after = static_cast<int>(st.active_ids.size());
  st.curriculum.push_back(rec);
  metrics.active_size = static_cast<int>(st.active_ids.size());
  metrics.pool_size = static_cast<int>(st.pool_ids.size());
  metrics.index_rebuilds = st.index_rebuilds;
  return metrics;
}

// ---------------------------------------------------------------------------
// loop state persistence
// ---------------------------------------------------------------------------

inline void append_train_config_manifest(std::vector<std::pair<std::string, std::string>>& kv,
                                         const TrainConfig& t) {
  kv.emplace_back("train.peak_lr", detail::format_double(t.peak_lr));
  kv.emplace_back("train.final_lr", detail::format_double(t.final_lr));
  kv.emplace_back("train.warmup_ratio", detail::format_double(t.warmup_ratio));
  kv.emplace_back("train.total_steps", std::to_string(t.total_steps));
  kv.emplace_back("train.weight_decay", detail::format_double(t.weight_decay));
  kv.emplace_back("train.grad_clip_norm", detail::format_double(t.grad_clip_norm));
  kv.emplace_back("train.batch_size", std::to_string(t.batch_size));
  kv.emplace_back("train.grad_accumulation", std::to_string(t.grad_accumulation));
  kv.emplace_back("train.mask_prob", detail::format_double(t.mask_prob));
  kv.emplace_back("train.seed", std::to_string(t.seed));
}

inline TrainConfig train_config_from_manifest(const std::map<std::string, std::string>& kv) {
  TrainConfig t;
  t.peak_lr = std::stod(manifest_get(kv, "train.peak_lr"));
  t.final_lr = std::stod(manifest_get(kv, "train.final_lr"));
  t.warmup_ratio = std::stod(manifest_get(kv, "train.warmup_ratio"));
  t.total_steps = std::stoll(manifest_get(kv, "train.total_steps"));
  t.weight_decay = std::stod(manifest_get(kv, "train.weight_decay"));
  t.grad_clip_norm = std::stod(manifest_get(kv, "train.grad_clip_norm"));
  t.batch_size = std::stoi(manifest_get(kv, "train.batch_size"));
  t.grad_accumulation = std::stoi(manifest_get(kv, "train.grad_accumulation"));
  t.mask_prob = std::stod(manifest_get(kv, "train.mask_prob"));
  t.seed = std::stoull(manifest_get(kv, "train.seed"));
  return t;
}

inline void append_aclm_config_manifest(std::vector<std::pair<std::string, std::string>>& kv,
                                        const AclmConfig& a) {
  kv.emplace_back("aclm.n_initial", std::to_string(a.n_initial));
  kv.emplace_back("aclm.k", std::to_string(a.k));
  kv.emplace_back("aclm.n_iterations", std::to_string(a.n_iterations));
  kv.emplace_back("aclm.n_epochs", std::to_string(a.n_epochs));
  kv.emplace_back("aclm.signature_dim", std::to_string(a.signature_dim));
  kv.emplace_back("aclm.criterion", to_string(a.criterion));
  kv.emplace_back("aclm.backend", to_string(a.backend));
  kv.emplace_back("aclm.seed", std::to_string(a.seed));
  kv.emplace_back("aclm.checkpoint_every", std::to_string(a.checkpoint_every));
  kv.emplace_back("aclm.pll_stride", std::to_string(a.pll_stride));
  kv.emplace_back("aclm.trigram_alpha", detail::format_double(a.trigram_alpha));
  kv.emplace_back("aclm.metric", a.metric == Metric::kEuclidean ? "euclidean" : "cosine");
}

inline AclmConfig aclm_config_from_manifest(const std::map<std::string, std::string>& kv) {
  AclmConfig a;
  a.n_initial = std::stoi(manifest_get(kv, "aclm.n_initial"));
  a.k = std::stoi(manifest_get(kv, "aclm.k"));
  a.n_iterations = std::stoi(manifest_get(kv, "aclm.n_iterations"));
  a.n_epochs = std::stoi(manifest_get(kv, "aclm.n_epochs"));
  a.signature_dim = std::stoi(manifest_get(kv, "aclm.signature_dim"));
  a.criterion = parse_criterion(manifest_get(kv, "aclm.criterion"));
  a.backend = parse_backend(manifest_get(kv, "aclm.backend"));
  a.seed = std::stoull(manifest_get(kv, "aclm.seed"));
  a.checkpoint_every = std::stoi(manifest_get(kv, "aclm.checkpoint_every"));
  a.pll_stride = std::stoi(manifest_get(kv, "aclm.pll_stride"));
  a.trigram_alpha = std::stod(manifest_get(kv, "aclm.trigram_alpha"));
  a.metric = parse_metric(manifest_get(kv, "aclm.metric"));
  return a;
}

inline void write_curriculum_jsonl(const std::string& path,
                                   const std::vector<IterationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write curriculum log: " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<IterationRecord> read_curriculum_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("corrupt checkpoint: missing curriculum log at " + path);
  std::vector<IterationRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(iteration_record_from_json(nlohmann::json::parse(line)));
  }
  return records;
}

// Lossless round trip: model tensors and optimizer moments bit-exact (f32),
// id sets and curriculum exact. The index is derived state and is rebuilt
// on load.
inline void save_state(const AclmState& st, const std::string& dir, const Vocab& vocab) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("format_version", std::to_string(kCheckpointFormatVersion));
  append_model_config_manifest(kv, st.model_cfg);
  append_train_config_manifest(kv, st.train_cfg);
  append_aclm_config_manifest(kv, st.aclm_cfg);
  kv.emplace_back("optimizer.t", std::to_string(st.opt.t));
  kv.emplace_back("step", std::to_string(st.global_step));
  kv.emplace_back("iteration", std::to_string(st.iteration));
  kv.emplace_back("index_rebuilds", std::to_string(st.index_rebuilds));
  write_manifest(dir + "/manifest", kv);

  std::ofstream bin(dir + "/tensors.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot write tensors.bin in " + dir);
  for_each_tensor(st.model.p, st.model_cfg, [&](const std::string& name, const Mat<float>& m) {
    write_tensor_record(bin, name, m);
  });
  for_each_tensor(st.opt.m, st.model_cfg, [&](const std::string& name, const Mat<float>& m) {
    write_tensor_record(bin, "opt.m." + name, m);
  });
  for_each_tensor(st.opt.v, st.model_cfg, [&](const std::string& name, const Mat<float>& m) {
    write_tensor_record(bin, "opt.v." + name, m);
  });

  write_vocab(dir + "/vocab.txt", vocab);

  std::ofstream state(dir + "/state.txt", std::ios::binary);
  if (!state) throw CheckpointError("cannot write state.txt in " + dir);
  state << "active_ids=";
  for (size_t i = 0; i < st.active_ids.size(); ++i)
    state << (i ? "," : "") << st.active_ids[i];
  state << '\n';

  write_curriculum_jsonl(dir + "/curriculum.jsonl", st.curriculum);
}

// Rebuilds the derived pieces (pool complement, trigram fit, signature
// index) from the corpus; everything else comes from the files.
inline AclmState load_state(const std::string& dir, const CorpusStore& corpus) {
  const auto kv = read_manifest(dir + "/manifest");
  if (std::stoi(manifest_get(kv, "format_version")) != kCheckpointFormatVersion)
    throw CheckpointError("corrupt checkpoint: unsupported format_version " +
                          manifest_get(kv, "format_version"));
  AclmState st;
  st.model_cfg = model_config_from_manifest(kv);
  st.train_cfg = train_config_from_manifest(kv);
  st.aclm_cfg = aclm_config_from_manifest(kv);
  if (st.model_cfg.vocab_size != corpus.vocab.size())
    throw CheckpointError("corrupt checkpoint: vocab size mismatch with corpus");
  st.model = MaskedLM<float>(st.model_cfg);
  st.opt = OptimizerState<float>(st.model_cfg);
  st.opt.t = std::stoll(manifest_get(kv, "optimizer.t"));
  st.global_step = std::stoll(manifest_get(kv, "step"));
  st.iteration = std::stoi(manifest_get(kv, "iteration"));

  const auto tensors = read_tensors(dir + "/tensors.bin");
  assign_tensors(st.model.p, st.model_cfg, tensors);
  assign_tensors(st.opt.m, st.model_cfg, tensors, "opt.m.");
  assign_tensors(st.opt.v, st.model_cfg, tensors, "opt.v.");

  const auto state_kv = read_manifest(dir + "/state.txt");
  std::stringstream ss(manifest_get(state_kv, "active_ids"));
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) st.active_ids.push_back(std::stoi(item));
  std::set<int> active_set(st.active_ids.begin(), st.active_ids.end());
  for (int id = 0; id < corpus.size(); ++id)
    if (!active_set.count(id)) st.pool_ids.push_back(id);

  st.curriculum = read_curriculum_jsonl(dir + "/curriculum.jsonl");

  if (st.aclm_cfg.backend == Backend::kTrigramStatic)
    st.trigram =
        TrigramModel::fit(corpus.stream(), corpus.vocab.size(), st.aclm_cfg.trigram_alpha);
  st.index_rebuilds = std::stoi(manifest_get(kv, "index_rebuilds"));
  // regenerate the index under the restored model; does not count as a
  // fresh rebuild of the surprisal space
  {
    auto pool = detail::gather(corpus, st.pool_ids);
    st.index = rebuild_index(
        pool, [&](const Sequence& s) { return backend_profile(st, s); },
        st.aclm_cfg.signature_dim, st.aclm_cfg.metric, st.aclm_cfg.threads);
  }
  return st;
}

// initialize + n_iterations cycles, checkpointing every checkpoint_every
// iterations and at the end when out_dir is given.
inline AclmState run(const CorpusStore& corpus, const ModelConfig& model_cfg,
                     const TrainConfig& train_cfg, const AclmConfig& aclm_cfg,
                     const std::string& out_dir = "",
                     const std::function<void(const IterationMetrics&)>& on_iteration = nullptr) {
  AclmState st = initialize(corpus, model_cfg, train_cfg, aclm_cfg);
  for (int i = 1; i <= st.aclm_cfg.n_iterations; ++i) {
    const IterationMetrics m = iterate(st, corpus);
    if (on_iteration) on_iteration(m);
    if (!out_dir.empty() && i % st.aclm_cfg.checkpoint_every == 0 && i != st.aclm_cfg.n_iterations)
      save_state(st, out_dir + "/checkpoint_iter_" + std::to_string(i), corpus.vocab);
  }
  if (!out_dir.empty()) save_state(st, out_dir + "/checkpoint_final", corpus.vocab);
  return st;
}

// Continue a checkpointed run up to its configured n_iterations.
inline AclmState resume(const std::string& checkpoint_dir, const CorpusStore& corpus,
                        const std::string& out_dir = "",
                        const std::function<void(const IterationMetrics&)>& on_iteration = nullptr) {
  AclmState st = load_state(checkpoint_dir, corpus);
  for (int i = st.iteration + 1; i <= st.aclm_cfg.n_iterations; ++i) {
    const IterationMetrics m = iterate(st, corpus);
    if (on_iteration) on_iteration(m);
    if (!out_dir.empty() && i % st.aclm_cfg.checkpoint_every == 0 && i != st.aclm_cfg.n_iterations)
      save_state(st, out_dir + "/checkpoint_iter_" + std::to_string(i), corpus.vocab);
  }
  if (!out_dir.empty()) save_state(st, out_dir + "/checkpoint_final", corpus.vocab);
  return st;
}

}  // namespace aclm
