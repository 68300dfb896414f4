#pragma once
// Pool-side signature store with exact k-nearest-neighbour retrieval and
// take-and-remove semantics. Rebuilt from scratch each iteration.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aclm/surprisal.hpp"
#include "aclm/threadpool.hpp"

namespace aclm {

enum class Metric { kEuclidean, kCosine };

inline Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  throw std::invalid_argument("unknown metric: " + s);
}

inline double signature_distance(const std::vector<double>& a, const std::vector<double>& b,
                                 Metric metric) {
  if (a.size() != b.size()) throw std::invalid_argument("signature dimension mismatch");
  if (metric == Metric::kEuclidean) {
    double d2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      d2 += d * d;
    }
    return std::sqrt(d2);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;  // zero vector has no direction
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

class SignatureIndex {
 public:
  SignatureIndex() = default;
  explicit SignatureIndex(int dim, Metric metric = Metric::kEuclidean)
      : dim_(dim), metric_(metric) {}

  void insert(Signature sig) {
    if (static_cast<int>(sig.vec.size()) != dim_)
      throw std::invalid_argument("signature dimension mismatch");
    entries_[sig.seq_id] = std::move(sig.vec);
  }

  // min(k, size) ids by ascending distance, ties by ascending seq_id;
  // returned ids are removed from the index.
  std::vector<int> knn_take(const Signature& query, int k) {
    if (k < 1) throw std::invalid_argument("knn_take: k must be >= 1");
    if (static_cast<int>(query.vec.size()) != dim_)
      throw std::invalid_argument("signature dimension mismatch");
    std::vector<std::pair<double, int>> scored;
    scored.reserve(entries_.size());
    for (const auto& [id, vec] : entries_)
      scored.emplace_back(signature_distance(query.vec, vec, metric_), id);
    std::sort(scored.begin(), scored.end());
    const size_t take = std::min(static_cast<size_t>(k), scored.size());
    std::vector<int> ids;
    ids.reserve(take);
    for (size_t i = 0; i < take; ++i) {
      ids.push_back(scored[i].second);
      entries_.erase(scored[i].second);
    }
    return ids;
  }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int dimension() const { return dim_; }
  Metric metric() const { return metric_; }
  bool contains(int id) const { return entries_.count(id) != 0; }
  const std::map<int, std::vector<double>>& entries() const { return entries_; }

 private:
  int dim_ = 0;
  Metric metric_ = Metric::kEuclidean;
  std::map<int, std::vector<double>> entries_;
};

// One signature per pool sequence, scored under the caller-supplied backend.
// Scoring runs in parallel; the index itself is committed serially.
template <class ProfileFn>
SignatureIndex rebuild_index(const std::vector<const Sequence*>& pool, ProfileFn&& profile_fn,
                             int D, Metric metric = Metric::kEuclidean, int threads = 1) {
  std::vector<Signature> sigs(pool.size());
  parallel_for(static_cast<int>(pool.size()), threads,
               [&](int i) { sigs[static_cast<size_t>(i)] = resample(profile_fn(*pool[static_cast<size_t>(i)]), D); });
  SignatureIndex index(D, metric);
  for (auto& s : sigs) index.insert(std::move(s));
  return index;
}

}  // namespace aclm
