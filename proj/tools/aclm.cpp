// Command-line front end: train, eval, export-curriculum, score, gen-synth.
// Configuration comes from an optional key=value file plus --key value
// overrides; overrides win. Exit codes: 0 ok, 2 usage/config, 3 numeric
// divergence, 4 corrupt artifact.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aclm/config.hpp"
#include "aclm/eval.hpp"
#include "aclm/loop.hpp"
#include "aclm/synthgen.hpp"

namespace fs = std::filesystem;
using namespace aclm;

namespace {

// Leftover tokens are interpreted as "--key value" config overrides.
// --out/--force/--resume/--seed/--threads are shorthands for run.* keys.
void apply_overrides(KvMap& kv, std::vector<std::string> extras) {
  // CLI11 returns remaining() in reverse parse order
  std::reverse(extras.begin(), extras.end());
  for (size_t i = 0; i < extras.size(); ++i) {
    std::string key = extras[i];
    if (key.rfind("--", 0) != 0)
      throw ConfigError("unexpected argument: " + key + " (overrides look like --key value)");
    key = key.substr(2);
    if (key == "out") key = "run.out";
    if (key == "resume") key = "run.resume";
    if (key == "force") {
      kv["run.force"] = "1";
      continue;
    }
    if (i + 1 >= extras.size()) throw ConfigError("override --" + key + " is missing a value");
    kv[key] = extras[++i];
  }
}

KvMap load_config(const std::string& config_path, std::vector<std::string> extras) {
  KvMap kv;
  if (!config_path.empty()) kv = parse_config_file(config_path);
  apply_overrides(kv, std::move(extras));
  return kv;
}

CorpusStore load_run_corpus(const RunConfig& rc) {
  if (rc.corpus_path.empty()) throw ConfigError("corpus.path is required");
  if (!fs::exists(rc.corpus_path)) throw ConfigError("corpus file not found: " + rc.corpus_path);
  return build_corpus(read_lines(rc.corpus_path), rc.vocab_cap, rc.seq_len);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& extras) {
  KvMap kv = load_config(config_path, extras);
  RunConfig rc = RunConfig::from_map(kv);
  if (rc.out_dir.empty()) throw ConfigError("run.out (--out DIR) is required");
  if (fs::exists(rc.out_dir) && !rc.force)
    throw ConfigError("output dir exists: " + rc.out_dir + " (pass --force to overwrite)");
  fs::create_directories(rc.out_dir);

  CorpusStore corpus;
  if (!rc.resume.empty()) {
    const Vocab vocab = read_vocab(rc.resume + "/vocab.txt");
    if (rc.corpus_path.empty()) throw ConfigError("corpus.path is required");
    if (!fs::exists(rc.corpus_path)) throw ConfigError("corpus file not found: " + rc.corpus_path);
    corpus = build_corpus_with_vocab(read_lines(rc.corpus_path), vocab, rc.seq_len);
  } else {
    corpus = load_run_corpus(rc);
  }

  std::ofstream metrics(rc.out_dir + "/metrics.csv", std::ios::binary);
  metrics << "iteration,mean_loss,steps,active_size,pool_size,index_rebuilds,wall_ms\n";
  auto last = std::chrono::steady_clock::now();
  auto on_iteration = [&](const IterationMetrics& m) {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last).count();
    last = now;
    char loss[32];
    std::snprintf(loss, sizeof(loss), "%.9g", m.train.mean_loss);
    metrics << m.iteration << ',' << loss << ',' << m.train.steps << ',' << m.active_size << ','
            << m.pool_size << ',' << m.index_rebuilds << ',' << static_cast<long long>(ms) << '\n';
    metrics.flush();
    std::cout << "iteration " << m.iteration << ": loss " << m.train.mean_loss << ", active "
              << m.active_size << ", pool " << m.pool_size << std::endl;
  };

  AclmState state = rc.resume.empty()
                        ? run(corpus, rc.model, rc.train, rc.aclm, rc.out_dir, on_iteration)
                        : resume(rc.resume, corpus, rc.out_dir, on_iteration);

  write_curriculum_jsonl(rc.out_dir + "/curriculum.jsonl", state.curriculum);
  write_config_file(rc.out_dir + "/config.txt", rc.to_map());
  std::cout << "done: " << state.iteration << " iterations, " << state.global_step
            << " optimizer steps, final checkpoint in " << rc.out_dir << "/checkpoint_final"
            << std::endl;
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& pairs_path,
             const std::string& config_path, const std::vector<std::string>& extras) {
  KvMap kv = load_config(config_path, extras);
  RunConfig rc = RunConfig::from_map(kv);
  LoadedModel lm = load_model_checkpoint(ckpt_dir);
  if (!fs::exists(pairs_path)) throw ConfigError("pairs file not found: " + pairs_path);
  const auto pairs = read_pairs_tsv(pairs_path);
  if (pairs.empty()) throw ConfigError("empty pairs file: " + pairs_path);
  const EvalResult res = eval_pairs(lm.model, lm.vocab, pairs, rc.eval_normalize, rc.threads);
  write_eval_csv(std::cout, res);
  return 0;
}

int cmd_export_curriculum(const std::string& run_dir) {
  const std::string log_path = run_dir + "/curriculum.jsonl";
  if (!fs::exists(log_path)) throw ConfigError("curriculum log not found: " + log_path);
  const std::string cfg_path = run_dir + "/config.txt";
  if (!fs::exists(cfg_path)) throw ConfigError("run config not found: " + cfg_path);
  RunConfig rc = RunConfig::from_map(parse_config_file(cfg_path));
  const CorpusStore corpus = load_run_corpus(rc);
  const auto records = read_curriculum_jsonl(log_path);

  std::cout << "iteration,rank,seq_id,text\n";
  for (const auto& rec : records) {
    int rank = 1;
    for (int id : rec.selected_ids) {
      const Sequence& seq = corpus.sequences.at(static_cast<size_t>(id));
      std::string text;
      const int n = std::min(seq.n_real, 40);
      for (int i = 0; i < n; ++i) {
        if (i) text += ' ';
        text += corpus.vocab.id_to_token.at(static_cast<size_t>(seq.token_ids[static_cast<size_t>(i)]));
      }
      std::cout << rec.iteration << ',' << rank << ',' << id << ",\"" << text << "\"\n";
      ++rank;
    }
  }
  return 0;
}

int cmd_score(const std::string& ckpt_dir, const std::string& input_path,
              const std::string& config_path, const std::vector<std::string>& extras) {
  KvMap kv = load_config(config_path, extras);
  RunConfig rc = RunConfig::from_map(kv);
  LoadedModel lm = load_model_checkpoint(ckpt_dir);
  const int D = std::stoi(manifest_get(lm.manifest, "aclm.signature_dim"));
  if (!fs::exists(input_path)) throw ConfigError("input file not found: " + input_path);
  const auto lines = read_lines(input_path);
  int line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    const std::vector<int> toks = tokenize({line}, lm.vocab);
    if (toks.empty()) continue;
    if (static_cast<int>(toks.size()) > lm.model.cfg.seq_len) {
      std::cerr << "warning: line " << line_no << " longer than " << lm.model.cfg.seq_len
                << " tokens, skipped\n";
      continue;
    }
    Sequence seq;
    seq.id = line_no;
    seq.token_ids = toks;
    seq.token_ids.resize(static_cast<size_t>(lm.model.cfg.seq_len), Vocab::kPad);
    seq.n_real = static_cast<int>(toks.size());
    const SurprisalProfile p = mlm_surprisals(lm.model, seq, rc.aclm.pll_stride);
    write_profile_csv(std::cout, p);
    write_signature_csv(std::cout, resample(p, D));
  }
  return 0;
}

int cmd_gen_synth(const std::string& config_path, const std::vector<std::string>& extras) {
  KvMap kv = load_config(config_path, extras);
  RunConfig rc = RunConfig::from_map(kv);
  if (rc.out_dir.empty()) throw ConfigError("run.out (--out DIR) is required");
  fs::create_directories(rc.out_dir);
  const auto lines = generate_corpus(rc.synth, rc.synth_n_tokens);
  {
    std::ofstream out(rc.out_dir + "/corpus.txt", std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
  }
  const auto pairs = generate_pairs(rc.synth, rc.synth_n_pairs);
  {
    std::ofstream out(rc.out_dir + "/pairs.tsv", std::ios::binary);
    for (const auto& p : pairs) out << p.phenomenon << '\t' << p.good << '\t' << p.bad << '\n';
  }
  std::cout << "wrote " << lines.size() << " sentences and " << pairs.size() << " pairs to "
            << rc.out_dir << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACLM: a small masked LM that selects its own curriculum"};
  app.require_subcommand(1);

  std::string config_path;
  std::string arg1, arg2;

  auto* train = app.add_subcommand("train", "run the ACLM training loop");
  train->add_option("--config", config_path, "key=value config file");
  train->allow_extras();

  auto* eval = app.add_subcommand("eval", "score minimal pairs with a checkpoint");
  eval->add_option("checkpoint", arg1, "checkpoint directory")->required();
  eval->add_option("pairs", arg2, "TSV minimal-pair file")->required();
  eval->add_option("--config", config_path, "key=value config file");
  eval->allow_extras();

  auto* exportc = app.add_subcommand("export-curriculum", "flatten a run's curriculum log to CSV");
  exportc->add_option("run_dir", arg1, "training output directory")->required();

  auto* score = app.add_subcommand("score", "emit surprisal profiles and signatures for text");
  score->add_option("checkpoint", arg1, "checkpoint directory")->required();
  score->add_option("input", arg2, "UTF-8 text file, one sentence per line")->required();
  score->add_option("--config", config_path, "key=value config file");
  score->allow_extras();

  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic agreement corpus");
  gen->add_option("--config", config_path, "key=value config file");
  gen->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, train->remaining());
    if (eval->parsed()) return cmd_eval(arg1, arg2, config_path, eval->remaining());
    if (exportc->parsed()) return cmd_export_curriculum(arg1);
    if (score->parsed()) return cmd_score(arg1, arg2, config_path, score->remaining());
    if (gen->parsed()) return cmd_gen_synth(config_path, gen->remaining());
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 2;
}
