#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "aclm/index.hpp"
#include "aclm/rng.hpp"

using namespace aclm;

namespace {

Signature sig(int id, std::vector<double> v) {
  Signature s;
  s.seq_id = id;
  s.vec = std::move(v);
  return s;
}

// exhaustive scan over its own shadow copy of the store, sorted by
// (distance, id), with mirrored removal
struct KnnOracle {
  std::map<int, std::vector<double>> entries;

  std::vector<int> take(const std::vector<double>& query, int k) {
    std::vector<std::pair<double, int>> all;
    for (const auto& [id, v] : entries) {
      double d2 = 0.0;
      for (size_t i = 0; i < v.size(); ++i) d2 += (v[i] - query[i]) * (v[i] - query[i]);
      all.emplace_back(std::sqrt(d2), id);
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    });
    std::vector<int> ids;
    for (size_t i = 0; i < std::min(all.size(), static_cast<size_t>(k)); ++i) {
      ids.push_back(all[i].second);
      entries.erase(all[i].second);
    }
    return ids;
  }
};

}  // namespace

TEST(SignatureIndex, ExactMatchTakeOne) {
  SignatureIndex idx(2);
  idx.insert(sig(10, {0.0, 0.0}));
  idx.insert(sig(11, {1.0, 0.0}));
  idx.insert(sig(12, {5.0, 5.0}));
  const auto got = idx.knn_take(sig(-1, {1.0, 0.0}), 1);
  EXPECT_EQ(got, (std::vector<int>{11}));
  EXPECT_EQ(idx.size(), 2u);
  EXPECT_FALSE(idx.contains(11));
}

TEST(SignatureIndex, ExhaustsWhenKTooLarge) {
  SignatureIndex idx(1);
  idx.insert(sig(0, {3.0}));
  idx.insert(sig(1, {1.0}));
  idx.insert(sig(2, {2.0}));
  const auto got = idx.knn_take(sig(-1, {0.0}), 10);
  EXPECT_EQ(got, (std::vector<int>{1, 2, 0}));
  EXPECT_TRUE(idx.empty());
}

TEST(SignatureIndex, TieBreaksByAscendingId) {
  SignatureIndex idx(1);
  idx.insert(sig(7, {1.0}));
  idx.insert(sig(3, {-1.0}));
  idx.insert(sig(5, {1.0}));
  const auto got = idx.knn_take(sig(-1, {0.0}), 3);
  EXPECT_EQ(got, (std::vector<int>{3, 5, 7}));
}

TEST(SignatureIndex, Errors) {
  SignatureIndex idx(2);
  idx.insert(sig(0, {0.0, 0.0}));
  EXPECT_THROW(idx.knn_take(sig(-1, {0.0}), 1), std::invalid_argument);
  EXPECT_THROW(idx.knn_take(sig(-1, {0.0, 0.0}), 0), std::invalid_argument);
  EXPECT_THROW(idx.insert(sig(1, {0.0})), std::invalid_argument);
}

TEST(SignatureIndex, EmptyIndexReturnsNothing) {
  SignatureIndex idx(2);
  EXPECT_TRUE(idx.knn_take(sig(-1, {0.0, 0.0}), 3).empty());
}

TEST(SignatureIndex, MatchesBruteForceOracle) {
  Rng rng(23);
  const int D = 7;
  SignatureIndex idx(D);
  KnnOracle oracle;
  for (int id = 0; id < 300; ++id) {
    std::vector<double> v(D);
    for (auto& x : v) x = rng.gaussian();
    oracle.entries[id] = v;
    idx.insert(sig(id, std::move(v)));
  }
  for (int q = 0; q < 30 && !idx.empty(); ++q) {
    std::vector<double> query(D);
    for (auto& x : query) x = rng.gaussian();
    const int k = 1 + rng.uniform_int(12);
    const size_t before = idx.size();
    const auto got = idx.knn_take(sig(-1, query), k);
    const auto expect = oracle.take(query, k);
    EXPECT_EQ(got, expect);
    EXPECT_EQ(idx.size(), before - got.size());
    for (int id : got) EXPECT_FALSE(idx.contains(id));
  }
}

TEST(SignatureDistance, SymmetryAndIdentity) {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(5), b(5);
    for (auto& x : a) x = rng.gaussian();
    for (auto& x : b) x = rng.gaussian();
    EXPECT_DOUBLE_EQ(signature_distance(a, a, Metric::kEuclidean), 0.0);
    EXPECT_DOUBLE_EQ(signature_distance(a, b, Metric::kEuclidean),
                     signature_distance(b, a, Metric::kEuclidean));
  }
}

TEST(SignatureDistance, Cosine) {
  const std::vector<double> x = {1.0, 0.0}, y = {0.0, 2.0}, z = {3.0, 0.0};
  EXPECT_NEAR(signature_distance(x, y, Metric::kCosine), 1.0, 1e-12);
  EXPECT_NEAR(signature_distance(x, z, Metric::kCosine), 0.0, 1e-12);
  EXPECT_THROW(signature_distance(x, {1.0}, Metric::kCosine), std::invalid_argument);
}

TEST(RebuildIndex, PoolCardinality) {
  std::vector<Sequence> seqs(3);
  for (int i = 0; i < 3; ++i) {
    seqs[static_cast<size_t>(i)].id = i;
    seqs[static_cast<size_t>(i)].token_ids = {3, 4, 5, 6};
    seqs[static_cast<size_t>(i)].n_real = 4;
  }
  std::vector<const Sequence*> pool = {&seqs[0], &seqs[1], &seqs[2]};
  auto profile_fn = [](const Sequence& s) {
    SurprisalProfile p;
    p.seq_id = s.id;
    p.n_real = s.n_real;
    p.values = {1.0 * s.id, 2.0, 3.0, 4.0};
    return p;
  };
  const SignatureIndex idx = rebuild_index(pool, profile_fn, 3, Metric::kEuclidean, 2);
  EXPECT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx.dimension(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(idx.contains(i));

  const SignatureIndex empty = rebuild_index({}, profile_fn, 3);
  EXPECT_TRUE(empty.empty());
}
