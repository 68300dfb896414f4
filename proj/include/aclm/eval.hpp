#pragma once
// Minimal-pair forced choice: score both sentences by pseudo-log-likelihood,
// credit the pair when the acceptable one scores higher (ties give half
// credit), report per-phenomenon and macro-averaged accuracy.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aclm/corpus.hpp"
#include "aclm/scorer.hpp"

namespace aclm {

struct MinimalPair {
  std::string phenomenon;
  std::string good;
  std::string bad;

  void validate() const {
    if (good.empty() || bad.empty())
      throw std::invalid_argument("minimal pair: sentences must be non-empty");
    if (good == bad) throw std::invalid_argument("minimal pair: good must differ from bad");
  }
};

// phenomenon<TAB>good<TAB>bad, one pair per line
inline std::vector<MinimalPair> read_pairs_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pairs file: " + path);
  std::vector<MinimalPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("pairs file line " + std::to_string(line_no) +
                               ": expected phenomenon<TAB>good<TAB>bad");
    MinimalPair p{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)};
    p.validate();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// -sum of per-token surprisals (higher = more probable); the text is packed
// into a single padded sequence.
template <class S>
double sentence_score(const MaskedLM<S>& model, const Vocab& vocab, const std::string& text,
                      bool normalize_by_length = false) {
  const std::vector<int> toks = tokenize({text}, vocab);
  if (toks.empty()) throw std::invalid_argument("sentence_score: empty text");
  if (static_cast<int>(toks.size()) > model.cfg.seq_len)
    throw std::runtime_error("sentence_score: text longer than " +
                             std::to_string(model.cfg.seq_len) + " tokens");
  Sequence seq;
  seq.id = 0;
  seq.token_ids = toks;
  seq.token_ids.resize(static_cast<size_t>(model.cfg.seq_len), Vocab::kPad);
  seq.n_real = static_cast<int>(toks.size());
  const SurprisalProfile p = mlm_surprisals(model, seq);
  double s = 0.0;
  for (int i = 0; i < seq.n_real; ++i) s -= p.values[static_cast<size_t>(i)];
  return normalize_by_length ? s / seq.n_real : s;
}

struct PhenomenonAccuracy {
  std::string phenomenon;
  int n_pairs = 0;
  double accuracy = 0.0;
};

struct EvalResult {
  std::vector<PhenomenonAccuracy> per_phenomenon;  // sorted by phenomenon
  int n_pairs = 0;
  double overall = 0.0;  // macro average over phenomena
};

template <class S>
EvalResult eval_pairs(const MaskedLM<S>& model, const Vocab& vocab,
                      const std::vector<MinimalPair>& pairs, bool normalize_by_length = false,
                      int threads = 1) {
  if (pairs.empty()) throw std::invalid_argument("eval_pairs: empty pair list");
  std::vector<double> credit(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), threads, [&](int i) {
    const auto& p = pairs[static_cast<size_t>(i)];
    const double sg = sentence_score(model, vocab, p.good, normalize_by_length);
    const double sb = sentence_score(model, vocab, p.bad, normalize_by_length);
    credit[static_cast<size_t>(i)] = sg > sb ? 1.0 : (sg == sb ? 0.5 : 0.0);
  });

  std::map<std::string, std::pair<int, double>> by_phen;
  for (size_t i = 0; i < pairs.size(); ++i) {
    auto& e = by_phen[pairs[i].phenomenon];
    e.first += 1;
    e.second += credit[i];
  }
  EvalResult res;
  res.n_pairs = static_cast<int>(pairs.size());
  double macro = 0.0;
  for (const auto& [phen, e] : by_phen) {
    PhenomenonAccuracy pa{phen, e.first, e.second / e.first};
    macro += pa.accuracy;
    res.per_phenomenon.push_back(std::move(pa));
  }
  res.overall = macro / static_cast<double>(by_phen.size());
  return res;
}

// CSV: phenomenon,n_pairs,accuracy plus an `overall` row.
inline void write_eval_csv(std::ostream& out, const EvalResult& res) {
  out << "phenomenon,n_pairs,accuracy\n";
  char buf[32];
  for (const auto& pa : res.per_phenomenon) {
    std::snprintf(buf, sizeof(buf), "%.6f", pa.accuracy);
    out << pa.phenomenon << ',' << pa.n_pairs << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.6f", res.overall);
  out << "overall," << res.n_pairs << ',' << buf << '\n';
}

}  // namespace aclm
