#pragma once
// Per-token surprisal profiles (trigram backend) and fixed-dimension
// signatures obtained by linear resampling. Natural log throughout.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "aclm/corpus.hpp"

namespace aclm {

struct SurprisalProfile {
  int seq_id = 0;
  std::vector<double> values;  // length L, 0.0 at PAD positions
  int n_real = 0;
};

struct Signature {
  int seq_id = 0;
  std::vector<double> vec;
};

// Add-alpha smoothed trigram model with two synthetic begin-of-stream tokens.
class TrigramModel {
 public:
  TrigramModel() = default;

  static TrigramModel fit(const std::vector<int>& stream, int vocab_size, double alpha) {
    if (stream.empty()) throw std::invalid_argument("trigram_fit: empty stream");
    if (vocab_size < 1) throw std::invalid_argument("trigram_fit: vocab_size must be >= 1");
    TrigramModel m;
    m.vocab_ = vocab_size;
    m.alpha_ = alpha;
    m.unigram_.assign(static_cast<size_t>(vocab_size), 0);
    for (size_t i = 0; i < stream.size(); ++i) {
      const int c2 = i >= 2 ? stream[i - 2] : m.bos();
      const int c1 = i >= 1 ? stream[i - 1] : m.bos();
      ++m.trigram_[m.key3(c2, c1, stream[i])];
      ++m.context_[m.key2(c2, c1)];
      ++m.unigram_[static_cast<size_t>(stream[i])];
    }
    return m;
  }

  // p(tok | c2, c1) = (count3 + alpha) / (count2 + alpha * V); sums to 1 over
  // the vocabulary for every observed context and any alpha. An unseen
  // context with alpha == 0 has no defined distribution and falls back to
  // uniform.
  double prob(int c2, int c1, int tok) const {
    const double den = static_cast<double>(count2(c2, c1)) + alpha_ * vocab_;
    if (den <= 0.0) return 1.0 / vocab_;
    return (static_cast<double>(count3(c2, c1, tok)) + alpha_) / den;
  }

  // -ln p. A zero-probability event (alpha == 0, unseen continuation) takes
  // the uniform fallback ln V so profiles stay finite.
  double surprisal(int c2, int c1, int tok) const {
    const double p = prob(c2, c1, tok);
    if (p <= 0.0) return std::log(static_cast<double>(vocab_));
    return -std::log(p);
  }

  SurprisalProfile surprisals(const Sequence& seq) const {
    SurprisalProfile p;
    p.seq_id = seq.id;
    p.n_real = seq.n_real;
    p.values.assign(seq.token_ids.size(), 0.0);
    for (int i = 0; i < seq.n_real; ++i) {
      const int c2 = i >= 2 ? seq.token_ids[i - 2] : bos();
      const int c1 = i >= 1 ? seq.token_ids[i - 1] : bos();
      p.values[static_cast<size_t>(i)] = surprisal(c2, c1, seq.token_ids[static_cast<size_t>(i)]);
    }
    return p;
  }

  int64_t count3(int c2, int c1, int tok) const {
    auto it = trigram_.find(key3(c2, c1, tok));
    return it == trigram_.end() ? 0 : it->second;
  }
  int64_t count2(int c2, int c1) const {
    auto it = context_.find(key2(c2, c1));
    return it == context_.end() ? 0 : it->second;
  }
  int64_t count1(int tok) const { return unigram_.at(static_cast<size_t>(tok)); }
  int64_t unigram_total() const {
    int64_t t = 0;
    for (auto c : unigram_) t += c;
    return t;
  }

  int vocab_size() const { return vocab_; }
  double alpha() const { return alpha_; }
  int bos() const { return vocab_; }  // virtual token, one past the real vocab

 private:
  uint64_t key2(int a, int b) const {
    const uint64_t base = static_cast<uint64_t>(vocab_) + 1;
    return static_cast<uint64_t>(a) * base + static_cast<uint64_t>(b);
  }
  uint64_t key3(int a, int b, int c) const {
    const uint64_t base = static_cast<uint64_t>(vocab_) + 1;
    return key2(a, b) * base + static_cast<uint64_t>(c);
  }

  int vocab_ = 0;
  double alpha_ = 0.0;
  std::unordered_map<uint64_t, int64_t> trigram_;
  std::unordered_map<uint64_t, int64_t> context_;
  std::vector<int64_t> unigram_;
};

// Linear interpolation over the full L-length values array with coordinate
// map x = i * (L-1) / (D-1); D == 1 degenerates to the array mean.
inline Signature resample(const SurprisalProfile& profile, int D) {
  const int L = static_cast<int>(profile.values.size());
  if (D < 1 || D > L) throw std::invalid_argument("resample: D out of range");
  Signature sig;
  sig.seq_id = profile.seq_id;
  sig.vec.resize(static_cast<size_t>(D));
  if (D == 1) {
    double sum = 0.0;
    for (double v : profile.values) sum += v;
    sig.vec[0] = sum / L;
    return sig;
  }
  for (int i = 0; i < D; ++i) {
    const double x = static_cast<double>(i) * (L - 1) / (D - 1);
    const int k = static_cast<int>(x);
    const double f = x - k;
    // exact copy when the coordinate lands on a grid point (e.g. D == L)
    sig.vec[static_cast<size_t>(i)] =
        f == 0.0 ? profile.values[static_cast<size_t>(k)]
                 : profile.values[static_cast<size_t>(k)] +
                       f * (profile.values[static_cast<size_t>(k + 1)] - profile.values[static_cast<size_t>(k)]);
  }
  return sig;
}

// Mean over the n_real non-PAD positions only.
inline double mean_surprisal(const SurprisalProfile& profile) {
  if (profile.n_real < 1) throw std::invalid_argument("mean_surprisal: empty profile");
  double sum = 0.0;
  for (int i = 0; i < profile.n_real; ++i) sum += profile.values[static_cast<size_t>(i)];
  return sum / profile.n_real;
}

namespace detail {
inline void write_csv_row(std::ostream& out, int seq_id, const std::vector<double>& values) {
  out << seq_id;
  char buf[32];
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  }
  out << '\n';
}
}  // namespace detail

// CSV rows: seq_id, then values. Shared by profiles and signatures.
inline void write_profile_csv(std::ostream& out, const SurprisalProfile& p) {
  detail::write_csv_row(out, p.seq_id, p.values);
}
inline void write_signature_csv(std::ostream& out, const Signature& s) {
  detail::write_csv_row(out, s.seq_id, s.vec);
}

}  // namespace aclm
