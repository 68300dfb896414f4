#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <tuple>

#include "aclm/corpus.hpp"
#include "aclm/rng.hpp"
#include "aclm/surprisal.hpp"

using namespace aclm;

namespace {

Sequence make_seq(std::vector<int> ids, int id = 0) {
  Sequence s;
  s.id = id;
  s.n_real = static_cast<int>(ids.size());
  s.token_ids = std::move(ids);
  return s;
}

// Independent counting oracle: plain nested maps over (c2, c1, tok), written
// without the packed-key machinery of the implementation.
struct TrigramOracle {
  std::map<std::tuple<int, int, int>, long long> tri;
  std::map<std::pair<int, int>, long long> ctx;
  int V;
  double alpha;

  TrigramOracle(const std::vector<int>& stream, int vocab, double a) : V(vocab), alpha(a) {
    const int BOS = vocab;
    for (size_t i = 0; i < stream.size(); ++i) {
      const int c2 = i >= 2 ? stream[i - 2] : BOS;
      const int c1 = i >= 1 ? stream[i - 1] : BOS;
      tri[{c2, c1, stream[i]}] += 1;
      ctx[{c2, c1}] += 1;
    }
  }

  double surprisal(int c2, int c1, int tok) const {
    long long c3 = 0, c2n = 0;
    if (auto it = tri.find({c2, c1, tok}); it != tri.end()) c3 = it->second;
    if (auto it = ctx.find({c2, c1}); it != ctx.end()) c2n = it->second;
    const double num = c3 + alpha;
    const double den = c2n + alpha * V;
    if (num <= 0.0 || den <= 0.0) return std::log(static_cast<double>(V));
    return -std::log(num / den);
  }
};

}  // namespace

TEST(TrigramFit, DirectCounts) {
  // "a b c" with ids a=0 b=1 c=2
  const std::vector<int> stream = {0, 1, 2};
  TrigramModel m = TrigramModel::fit(stream, 3, 0.0);
  const int BOS = m.bos();
  EXPECT_EQ(m.count3(BOS, BOS, 0), 1);
  EXPECT_EQ(m.count3(BOS, 0, 1), 1);
  EXPECT_EQ(m.count3(0, 1, 2), 1);
  EXPECT_EQ(m.count2(BOS, BOS), 1);
  EXPECT_EQ(m.count2(0, 1), 1);
  EXPECT_EQ(m.count1(0), 1);
  EXPECT_EQ(m.unigram_total(), 3);
}

TEST(TrigramFit, RepeatedCorpusDoublesCounts) {
  const std::vector<int> once = {0, 1, 2, 0, 1};
  std::vector<int> twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  TrigramModel m1 = TrigramModel::fit(once, 3, 0.0);
  TrigramModel m2 = TrigramModel::fit(twice, 3, 0.0);
  // interior trigram (0,1,2) occurs twice in the doubled stream
  EXPECT_EQ(m2.count3(0, 1, 2), 2 * m1.count3(0, 1, 2));
  EXPECT_EQ(m2.unigram_total(), 2 * m1.unigram_total());
}

TEST(TrigramFit, EmptyStreamThrows) {
  EXPECT_THROW(TrigramModel::fit({}, 3, 0.0), std::invalid_argument);
}

TEST(TrigramFit, MatchesBruteForceOracle) {
  Rng rng(11);
  std::vector<int> stream(600);
  const int V = 20;
  for (auto& t : stream) t = rng.uniform_int(V);
  for (const double alpha : {0.0, 0.1, 1.0}) {
    TrigramModel m = TrigramModel::fit(stream, V, alpha);
    TrigramOracle oracle(stream, V, alpha);
    const auto seqs = pack_sequences(stream, 32);
    for (const auto& seq : seqs) {
      const SurprisalProfile p = m.surprisals(seq);
      for (int i = 0; i < seq.n_real; ++i) {
        const int c2 = i >= 2 ? seq.token_ids[static_cast<size_t>(i - 2)] : m.bos();
        const int c1 = i >= 1 ? seq.token_ids[static_cast<size_t>(i - 1)] : m.bos();
        EXPECT_NEAR(p.values[static_cast<size_t>(i)],
                    oracle.surprisal(c2, c1, seq.token_ids[static_cast<size_t>(i)]), 1e-12);
      }
    }
  }
}

TEST(TrigramSurprisals, DeterministicCorpusIsZero) {
  std::vector<int> stream;
  for (int r = 0; r < 10; ++r) {
    stream.push_back(0);
    stream.push_back(1);
    stream.push_back(2);
  }
  TrigramModel m = TrigramModel::fit(stream, 3, 0.0);
  const SurprisalProfile p = m.surprisals(make_seq(stream));
  for (int i = 0; i < p.n_real; ++i) EXPECT_EQ(p.values[static_cast<size_t>(i)], 0.0);
}

TEST(TrigramSurprisals, CountAndDivide) {
  // context (a,b) followed by c three times and d once
  // stream: a b c a b c a b c a b d   (a=0 b=1 c=2 d=3)
  const std::vector<int> stream = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 3};
  TrigramModel m = TrigramModel::fit(stream, 4, 0.0);
  EXPECT_NEAR(m.surprisal(0, 1, 2), -std::log(3.0 / 4.0), 1e-12);
  EXPECT_NEAR(m.surprisal(0, 1, 2), 0.28768, 1e-5);
}

TEST(TrigramSurprisals, UnseenContextUniform) {
  TrigramModel m = TrigramModel::fit({0, 1, 2}, 5, 1.0);
  EXPECT_NEAR(m.surprisal(3, 4, 0), std::log(5.0), 1e-12);
}

TEST(TrigramSurprisals, AlphaZeroFallbackKeepsProfilesFinite) {
  TrigramModel m = TrigramModel::fit({0, 1, 2}, 5, 0.0);
  // unseen continuation of a seen context, and a fully unseen context
  EXPECT_NEAR(m.surprisal(0, 1, 4), std::log(5.0), 1e-12);
  EXPECT_NEAR(m.surprisal(3, 3, 3), std::log(5.0), 1e-12);
  const SurprisalProfile p = m.surprisals(make_seq({2, 2, 2}));
  for (double v : p.values) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(TrigramSurprisals, ProbabilitiesNormalize) {
  Rng rng(3);
  std::vector<int> stream(400);
  const int V = 12;
  for (auto& t : stream) t = rng.uniform_int(V);
  for (const double alpha : {0.0, 0.1, 1.0}) {
    TrigramModel m = TrigramModel::fit(stream, V, alpha);
    for (size_t i = 0; i + 1 < stream.size(); ++i) {
      double sum = 0.0;
      for (int t = 0; t < V; ++t) sum += m.prob(stream[i], stream[i + 1], t);
      // only contexts that actually occur are covered by the property
      if (m.count2(stream[i], stream[i + 1]) > 0) EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

// --------------------------------------------------------------------------
// resample
// --------------------------------------------------------------------------

namespace {

SurprisalProfile profile_of(std::vector<double> values, int n_real = -1) {
  SurprisalProfile p;
  p.values = std::move(values);
  p.n_real = n_real < 0 ? static_cast<int>(p.values.size()) : n_real;
  return p;
}

// independently written linear interpolation: walks the target grid and
// blends neighbours explicitly
std::vector<double> resample_oracle(const std::vector<double>& v, int D) {
  const int L = static_cast<int>(v.size());
  std::vector<double> out(static_cast<size_t>(D));
  if (D == 1) {
    double s = 0.0;
    for (double x : v) s += x;
    out[0] = s / L;
    return out;
  }
  for (int i = 0; i < D; ++i) {
    const double pos = static_cast<double>(i) * (L - 1) / (D - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, L - 1);
    const double w = pos - lo;
    out[static_cast<size_t>(i)] = (1.0 - w) * v[static_cast<size_t>(lo)] + w * v[static_cast<size_t>(hi)];
  }
  return out;
}

}  // namespace

TEST(Resample, HandValues) {
  const auto p = profile_of({0, 1, 2, 3});
  EXPECT_EQ(resample(p, 2).vec, (std::vector<double>{0, 3}));
  EXPECT_EQ(resample(p, 3).vec, (std::vector<double>{0, 1.5, 3}));
}

TEST(Resample, ConstantProfileStaysConstant) {
  const auto p = profile_of(std::vector<double>(128, 2.0));
  for (int D : {1, 7, 32, 64, 128}) {
    const Signature s = resample(p, D);
    ASSERT_EQ(static_cast<int>(s.vec.size()), D);
    for (double v : s.vec) EXPECT_EQ(v, 2.0);
  }
}

TEST(Resample, IdentityAtFullDimensionIsBitwise) {
  Rng rng(5);
  std::vector<double> vals(128);
  for (auto& v : vals) v = rng.uniform() * 10;
  const auto p = profile_of(vals);
  const Signature s = resample(p, 128);
  for (size_t i = 0; i < vals.size(); ++i) EXPECT_EQ(s.vec[i], vals[i]);
}

TEST(Resample, MeanAtDimensionOne) {
  const auto p = profile_of({1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(resample(p, 1).vec[0], 3.0);
}

TEST(Resample, OutOfRangeThrows) {
  const auto p = profile_of({1, 2, 3, 4});
  EXPECT_THROW(resample(p, 0), std::invalid_argument);
  EXPECT_THROW(resample(p, 5), std::invalid_argument);
}

TEST(Resample, MatchesOracleAndStaysRangeBounded) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(128);
    double lo = 1e300, hi = -1e300;
    for (auto& v : vals) {
      v = rng.gaussian() * 3.0;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const auto p = profile_of(vals);
    for (int D : {1, 7, 32, 64, 128}) {
      const Signature s = resample(p, D);
      const auto expect = resample_oracle(vals, D);
      ASSERT_EQ(s.vec.size(), expect.size());
      for (size_t i = 0; i < expect.size(); ++i) {
        EXPECT_NEAR(s.vec[i], expect[i], 1e-9);
        EXPECT_GE(s.vec[i], lo - 1e-12);
        EXPECT_LE(s.vec[i], hi + 1e-12);
      }
    }
  }
}

// --------------------------------------------------------------------------
// mean_surprisal
// --------------------------------------------------------------------------

TEST(MeanSurprisal, Basics) {
  EXPECT_EQ(mean_surprisal(profile_of(std::vector<double>(8, 0.0))), 0.0);
  EXPECT_DOUBLE_EQ(mean_surprisal(profile_of({1, 2, 3})), 2.0);
}

TEST(MeanSurprisal, ExcludesPadPositions) {
  std::vector<double> vals(128, 0.0);
  vals[0] = 1.0;
  vals[1] = 2.0;
  EXPECT_DOUBLE_EQ(mean_surprisal(profile_of(std::move(vals), 2)), 1.5);
}

TEST(MeanSurprisal, EmptyThrows) {
  EXPECT_THROW(mean_surprisal(profile_of({}, 0)), std::invalid_argument);
}
