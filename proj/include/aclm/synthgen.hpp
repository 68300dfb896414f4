#pragma once
// Deterministic synthetic language with a learnable subject-verb agreement
// regularity. Sentences are [noun_c verb_c distractors...]; the noun and
// verb share an agreement class. Noun-verb index combinations are split by
// parity: training sentences use even (i+j), held-out minimal pairs use odd,
// so evaluation pairs never occur verbatim in the corpus and swapped verbs
// stay frequency-balanced across classes.

#include <stdexcept>
#include <string>
#include <vector>

#include "aclm/eval.hpp"
#include "aclm/rng.hpp"

namespace aclm {

struct GrammarSpec {
  int n_classes = 2;
  int n_nouns = 30;       // per class
  int n_verbs = 30;       // per class
  int n_distractors = 75; // shared vocabulary
  int len_min = 4;        // sentence length bounds, tokens
  int len_max = 8;
  uint64_t seed = 1;

  void validate() const {
    if (n_classes < 2 || n_nouns < 1 || n_verbs < 2 || n_distractors < 1)
      throw std::invalid_argument("GrammarSpec: need >= 2 classes, >= 2 verbs, >= 1 noun/distractor");
    if (len_min < 2 || len_max < len_min)
      throw std::invalid_argument("GrammarSpec: need len_max >= len_min >= 2");
  }
};

namespace detail {

inline std::string noun_token(int cls, int i) {
  return "n" + std::to_string(cls) + "_" + std::to_string(i);
}
inline std::string verb_token(int cls, int j) {
  return "v" + std::to_string(cls) + "_" + std::to_string(j);
}
inline std::string distractor_token(int d) { return "d" + std::to_string(d); }

// verb index with the requested (i+j) parity, uniform over candidates
inline int sample_verb_index(const GrammarSpec& spec, int noun_idx, bool odd_parity, Rng& rng) {
  const int want = (noun_idx % 2 + (odd_parity ? 1 : 0)) % 2;  // j % 2 target
  const int count = (spec.n_verbs + (want == 0 ? 1 : 0)) / 2;
  return 2 * rng.uniform_int(count) + want;
}

inline std::string build_sentence(const GrammarSpec& spec, int cls, int noun_idx, int verb_cls,
                                  int verb_idx, int n_distract, Rng& rng) {
  std::string s = noun_token(cls, noun_idx) + " " + verb_token(verb_cls, verb_idx);
  for (int d = 0; d < n_distract; ++d)
    s += " " + distractor_token(rng.uniform_int(spec.n_distractors));
  return s;
}

}  // namespace detail

// One sentence per line; stops after the sentence that reaches n_tokens.
inline std::vector<std::string> generate_corpus(const GrammarSpec& spec, int n_tokens) {
  spec.validate();
  if (n_tokens < 100) throw std::invalid_argument("generate_corpus: n_tokens must be >= 100");
  Rng rng(mix_seed(spec.seed, 1));
  std::vector<std::string> lines;
  long long total = 0;
  while (total < n_tokens) {
    const int cls = rng.uniform_int(spec.n_classes);
    const int noun = rng.uniform_int(spec.n_nouns);
    const int verb = detail::sample_verb_index(spec, noun, /*odd_parity=*/false, rng);
    const int nd = spec.len_min - 2 + rng.uniform_int(spec.len_max - spec.len_min + 1);
    lines.push_back(detail::build_sentence(spec, cls, noun, cls, verb, nd, rng));
    total += 2 + nd;
  }
  return lines;
}

// good = agreeing sentence over a held-out noun-verb combination; bad = the
// same sentence with the verb swapped to the next class.
inline std::vector<MinimalPair> generate_pairs(const GrammarSpec& spec, int n_pairs) {
  spec.validate();
  if (n_pairs < 1) throw std::invalid_argument("generate_pairs: n_pairs must be >= 1");
  Rng rng(mix_seed(spec.seed, 2));
  std::vector<MinimalPair> pairs;
  pairs.reserve(static_cast<size_t>(n_pairs));
  for (int n = 0; n < n_pairs; ++n) {
    const int cls = rng.uniform_int(spec.n_classes);
    const int noun = rng.uniform_int(spec.n_nouns);
    const int verb = detail::sample_verb_index(spec, noun, /*odd_parity=*/true, rng);
    const int nd = spec.len_min - 2 + rng.uniform_int(spec.len_max - spec.len_min + 1);
    std::string tail;
    for (int d = 0; d < nd; ++d) tail += " " + detail::distractor_token(rng.uniform_int(spec.n_distractors));
    const int bad_cls = (cls + 1) % spec.n_classes;
    MinimalPair p;
    p.phenomenon = "agreement";
    p.good = detail::noun_token(cls, noun) + " " + detail::verb_token(cls, verb) + tail;
    p.bad = detail::noun_token(cls, noun) + " " + detail::verb_token(bad_cls, verb) + tail;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace aclm
