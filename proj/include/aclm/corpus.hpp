#pragma once
// Text ingestion: word-level vocabulary, token streams, fixed-length packing.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aclm {

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kMaskToken = "<mask>";
  static constexpr const char* kUnkToken = "<unk>";

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  int max_size = 0;

  int size() const { return static_cast<int>(id_to_token.size()); }

  int lookup(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

// Whitespace split, byte-level ASCII lowercasing.
inline std::vector<std::string> split_words(std::string_view line, bool lowercase = true) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Most frequent max_size-3 words plus PAD/MASK/UNK; ties broken lexicographically.
inline Vocab build_vocab(const std::vector<std::string>& lines, int max_size) {
  if (max_size < 4) throw std::invalid_argument("build_vocab: max_size must be >= 4");
  std::unordered_map<std::string, long long> counts;
  for (const auto& line : lines) {
    for (auto& w : split_words(line)) {
      // the special token strings are reserved and never enter the word list
      if (w == Vocab::kPadToken || w == Vocab::kMaskToken || w == Vocab::kUnkToken) continue;
      ++counts[w];
    }
  }
  if (counts.empty()) throw std::runtime_error("empty corpus");

  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const size_t keep = std::min(ranked.size(), static_cast<size_t>(max_size - 3));

  Vocab v;
  v.max_size = max_size;
  v.id_to_token = {Vocab::kPadToken, Vocab::kMaskToken, Vocab::kUnkToken};
  v.id_to_token.reserve(keep + 3);
  for (size_t i = 0; i < keep; ++i) v.id_to_token.push_back(ranked[i].first);
  for (int id = 0; id < v.size(); ++id) v.token_to_id[v.id_to_token[id]] = id;
  return v;
}

// Flat id stream; OOV maps to UNK, PAD/MASK are never emitted.
inline std::vector<int> tokenize(const std::vector<std::string>& lines, const Vocab& vocab) {
  std::vector<int> out;
  for (const auto& line : lines) {
    for (auto& w : split_words(line)) {
      const int id = vocab.lookup(w);
      out.push_back(id >= 3 ? id : Vocab::kUnk);
    }
  }
  return out;
}

struct Sequence {
  int id = 0;
  std::vector<int> token_ids;  // length exactly L, PAD only as contiguous suffix
  int n_real = 0;

  int length() const { return static_cast<int>(token_ids.size()); }
};

// Consecutive chunks of exactly L ids; the final partial chunk is PAD-suffixed.
inline std::vector<Sequence> pack_sequences(const std::vector<int>& stream, int L) {
  if (L < 2) throw std::invalid_argument("pack_sequences: L must be >= 2");
  std::vector<Sequence> out;
  for (size_t start = 0; start < stream.size(); start += static_cast<size_t>(L)) {
    Sequence s;
    s.id = static_cast<int>(out.size());
    const size_t n = std::min(static_cast<size_t>(L), stream.size() - start);
    s.token_ids.assign(stream.begin() + start, stream.begin() + start + n);
    s.token_ids.resize(static_cast<size_t>(L), Vocab::kPad);
    s.n_real = static_cast<int>(n);
    out.push_back(std::move(s));
  }
  return out;
}

struct CorpusStore {
  std::vector<Sequence> sequences;
  Vocab vocab;
  int seq_len = 0;

  int size() const { return static_cast<int>(sequences.size()); }

  // Concatenation of non-PAD ids; exact inverse of pack_sequences.
  std::vector<int> stream() const {
    std::vector<int> out;
    for (const auto& s : sequences)
      out.insert(out.end(), s.token_ids.begin(), s.token_ids.begin() + s.n_real);
    return out;
  }
};

inline CorpusStore build_corpus(const std::vector<std::string>& lines, int vocab_cap, int L) {
  CorpusStore c;
  c.vocab = build_vocab(lines, vocab_cap);
  c.sequences = pack_sequences(tokenize(lines, c.vocab), L);
  c.seq_len = L;
  return c;
}

// Like build_corpus but with a fixed externally supplied vocabulary
// (checkpoint resume path: the stored vocab wins over a rebuild).
inline CorpusStore build_corpus_with_vocab(const std::vector<std::string>& lines, Vocab vocab, int L) {
  CorpusStore c;
  c.vocab = std::move(vocab);
  c.sequences = pack_sequences(tokenize(lines, c.vocab), L);
  c.seq_len = L;
  return c;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace aclm
