#pragma once
// Pseudo-log-likelihood scoring: mask one position at a time, forward, take
// -ln softmax at the true token. Dropout is never applied here. The final
// layer is evaluated only at the masked row, which is exact and saves most
// of its cost; an optional stride mode masks several positions per forward
// as a cheaper approximation.

#include <cmath>
#include <vector>

#include "aclm/model.hpp"
#include "aclm/surprisal.hpp"
#include "aclm/threadpool.hpp"

namespace aclm {

namespace detail {

template <class S>
double logsumexp_minus(const Mat<S>& logits_row, int tok) {
  const S mx = logits_row.row(0).maxCoeff();
  const double z = static_cast<double>((logits_row.row(0).array() - mx).exp().sum());
  return std::log(z) + static_cast<double>(mx) - static_cast<double>(logits_row(0, tok));
}

// Final encoder layer at a single query row, then LN + head at that row.
// K/V still cover every position; PAD keys are masked as in the full path.
template <class S>
double score_final_row(const MaskedLM<S>& m, const std::vector<Mat<S>>& h, int n_real, int row,
                       int true_tok) {
  const ModelConfig& cfg = m.cfg;
  const auto& ly = m.p.layers[static_cast<size_t>(cfg.n_layers - 1)];
  const int L = static_cast<int>(h[0].rows());
  const int nh = cfg.n_heads, dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> in = combine_inputs(cfg, ly, h, cfg.n_layers - 1, nullptr);
  Mat<S> t1 = layernorm(in, ly.ln1_g, ly.ln1_b, cfg.layer_norm_eps, nullptr, nullptr);

  Mat<S> k = t1 * ly.wk;
  k.array().rowwise() += ly.bk.row(0).array();
  Mat<S> v = t1 * ly.wv;
  v.array().rowwise() += ly.bv.row(0).array();
  Mat<S> q = t1.row(row) * ly.wq;
  q.array().rowwise() += ly.bq.row(0).array();

  Mat<S> ctx(1, cfg.hidden_size);
  for (int hd = 0; hd < nh; ++hd) {
    Mat<S> scores = q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose() * scale;
    if (n_real < L) scores.rightCols(L - n_real).setConstant(neg_inf<S>());
    softmax_rows(scores);
    ctx.middleCols(hd * dh, dh) = scores * v.middleCols(hd * dh, dh);
  }
  Mat<S> o = ctx * ly.wo;
  o.array().rowwise() += ly.bo.row(0).array();
  Mat<S> a = in.row(row) + o;

  Mat<S> t2 = layernorm(a, ly.ln2_g, ly.ln2_b, cfg.layer_norm_eps, nullptr, nullptr);
  Mat<S> z1 = t2 * ly.w1;
  z1.array().rowwise() += ly.b1.row(0).array();
  Mat<S> f = gelu(z1) * ly.w2;
  f.array().rowwise() += ly.b2.row(0).array();
  Mat<S> hn = a + f;

  Mat<S> hf = layernorm(hn, m.p.lnf_g, m.p.lnf_b, cfg.layer_norm_eps, nullptr, nullptr);
  Mat<S> logits = head_logits(m.p, cfg, hf);
  return logsumexp_minus(logits, true_tok);
}

}  // namespace detail

// Exact PLL profile: one forward per real position. With stride >= 1,
// positions {f, f+stride, ...} are masked together in one forward instead
// (approximate; stride == n_real recovers the exact profile).
template <class S>
SurprisalProfile mlm_surprisals(const MaskedLM<S>& m, const Sequence& seq, int stride = 0) {
  SurprisalProfile p;
  p.seq_id = seq.id;
  p.n_real = seq.n_real;
  p.values.assign(seq.token_ids.size(), 0.0);

  if (stride <= 0 || stride >= seq.n_real) {
    for (int i = 0; i < seq.n_real; ++i) {
      std::vector<int> ids = seq.token_ids;
      ids[static_cast<size_t>(i)] = Vocab::kMask;
      auto h = detail::forward_hstack(m, ids, seq.n_real, m.cfg.n_layers - 1);
      p.values[static_cast<size_t>(i)] =
          detail::score_final_row(m, h, seq.n_real, i, seq.token_ids[static_cast<size_t>(i)]);
    }
    return p;
  }

  for (int f = 0; f < stride; ++f) {
    std::vector<int> ids = seq.token_ids;
    std::vector<int> masked;
    for (int i = f; i < seq.n_real; i += stride) {
      ids[static_cast<size_t>(i)] = Vocab::kMask;
      masked.push_back(i);
    }
    if (masked.empty()) continue;
    Mat<S> logits = detail::forward_full(m, ids, seq.n_real, nullptr, nullptr);
    for (int i : masked) {
      Mat<S> row = logits.row(i);
      p.values[static_cast<size_t>(i)] =
          detail::logsumexp_minus(row, seq.token_ids[static_cast<size_t>(i)]);
    }
  }
  return p;
}

// Reference scorer built on the unmodified full forward; the fast path above
// must agree with it to float rounding. Kept for tests and cross-checks.
template <class S>
SurprisalProfile mlm_surprisals_reference(const MaskedLM<S>& m, const Sequence& seq) {
  SurprisalProfile p;
  p.seq_id = seq.id;
  p.n_real = seq.n_real;
  p.values.assign(seq.token_ids.size(), 0.0);
  for (int i = 0; i < seq.n_real; ++i) {
    Mat<S> logits = forward_logits(m, seq, {i});
    Mat<S> row = logits.row(i);
    p.values[static_cast<size_t>(i)] =
        detail::logsumexp_minus(row, seq.token_ids[static_cast<size_t>(i)]);
  }
  return p;
}

// Profiles for many sequences; parallel across sequences, deterministic
// regardless of thread count (each result lands in its own slot).
template <class S>
std::vector<SurprisalProfile> mlm_surprisals_many(const MaskedLM<S>& m,
                                                  const std::vector<const Sequence*>& seqs,
                                                  int stride = 0, int threads = 1) {
  std::vector<SurprisalProfile> out(seqs.size());
  parallel_for(static_cast<int>(seqs.size()), threads, [&](int i) {
    out[static_cast<size_t>(i)] = mlm_surprisals(m, *seqs[static_cast<size_t>(i)], stride);
  });
  return out;
}

}  // namespace aclm
