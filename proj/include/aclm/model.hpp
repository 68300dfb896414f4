#pragma once
// Masked transformer encoder: pre-norm attention/FF blocks, PAD-masked
// attention, optional learned combination of all earlier layer outputs
// ("every layer counts" style), tied or untied output head. Forward and
// backward are written out by hand; the gradient-check tests hold them to
// central finite differences.

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>  // vectorized erf for the GELU

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "aclm/corpus.hpp"
#include "aclm/rng.hpp"

namespace aclm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelConfig {
  int n_layers = 2;
  int hidden_size = 64;
  int n_heads = 2;
  int ff_size = 128;
  int vocab_size = 0;  // filled in from the built vocabulary
  int seq_len = 128;
  double dropout_hidden = 0.0;
  double dropout_attn = 0.0;
  bool elc_weighting = true;
  bool tied_output = true;
  double layer_norm_eps = 1e-7;

  int head_dim() const { return hidden_size / n_heads; }

  void validate() const {
    if (n_layers < 1 || hidden_size < 1 || n_heads < 1 || ff_size < 1 || vocab_size < 1 ||
        seq_len < 2)
      throw std::invalid_argument("ModelConfig: all sizes must be >= 1 (seq_len >= 2)");
    if (hidden_size % n_heads != 0)
      throw std::invalid_argument("ModelConfig: hidden_size must be divisible by n_heads");
    if (dropout_hidden < 0.0 || dropout_hidden >= 1.0 || dropout_attn < 0.0 || dropout_attn >= 1.0)
      throw std::invalid_argument("ModelConfig: dropouts must be in [0, 1)");
    if (layer_norm_eps <= 0.0) throw std::invalid_argument("ModelConfig: layer_norm_eps must be > 0");
  }
};

template <class S>
struct LayerTensors {
  Mat<S> ln1_g, ln1_b;
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1, w2, b2;
  Mat<S> alpha;  // 1 x (layer_index + 1); present only with elc_weighting
};

// All trainable tensors. The same container shape is reused for gradients
// and optimizer moments.
template <class S>
struct TensorBundle {
  Mat<S> tok_emb, pos_emb;
  std::vector<LayerTensors<S>> layers;
  Mat<S> lnf_g, lnf_b;
  Mat<S> out_w;  // only with untied output
  Mat<S> out_b;

  static TensorBundle zeros(const ModelConfig& cfg) {
    TensorBundle t;
    const int H = cfg.hidden_size, F = cfg.ff_size, V = cfg.vocab_size, L = cfg.seq_len;
    t.tok_emb = Mat<S>::Zero(V, H);
    t.pos_emb = Mat<S>::Zero(L, H);
    t.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto& ly = t.layers[static_cast<size_t>(l)];
      ly.ln1_g = Mat<S>::Zero(1, H);
      ly.ln1_b = Mat<S>::Zero(1, H);
      ly.wq = Mat<S>::Zero(H, H);
      ly.bq = Mat<S>::Zero(1, H);
      ly.wk = Mat<S>::Zero(H, H);
      ly.bk = Mat<S>::Zero(1, H);
      ly.wv = Mat<S>::Zero(H, H);
      ly.bv = Mat<S>::Zero(1, H);
      ly.wo = Mat<S>::Zero(H, H);
      ly.bo = Mat<S>::Zero(1, H);
      ly.ln2_g = Mat<S>::Zero(1, H);
      ly.ln2_b = Mat<S>::Zero(1, H);
      ly.w1 = Mat<S>::Zero(H, F);
      ly.b1 = Mat<S>::Zero(1, F);
      ly.w2 = Mat<S>::Zero(F, H);
      ly.b2 = Mat<S>::Zero(1, H);
      if (cfg.elc_weighting) ly.alpha = Mat<S>::Zero(1, l + 1);
    }
    t.lnf_g = Mat<S>::Zero(1, H);
    t.lnf_b = Mat<S>::Zero(1, H);
    if (!cfg.tied_output) t.out_w = Mat<S>::Zero(H, V);
    t.out_b = Mat<S>::Zero(1, V);
    return t;
  }
};

// Canonical tensor iteration order; checkpoint layout and the optimizer
// both depend on it.
template <class S, class Fn>
void for_each_tensor(TensorBundle<S>& t, const ModelConfig& cfg, Fn&& fn) {
  fn(std::string("tok_emb"), t.tok_emb);
  fn(std::string("pos_emb"), t.pos_emb);
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& ly = t.layers[static_cast<size_t>(l)];
    const std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "ln1_g", ly.ln1_g);
    fn(p + "ln1_b", ly.ln1_b);
    fn(p + "wq", ly.wq);
    fn(p + "bq", ly.bq);
    fn(p + "wk", ly.wk);
    fn(p + "bk", ly.bk);
    fn(p + "wv", ly.wv);
    fn(p + "bv", ly.bv);
    fn(p + "wo", ly.wo);
    fn(p + "bo", ly.bo);
    fn(p + "ln2_g", ly.ln2_g);
    fn(p + "ln2_b", ly.ln2_b);
    fn(p + "w1", ly.w1);
    fn(p + "b1", ly.b1);
    fn(p + "w2", ly.w2);
    fn(p + "b2", ly.b2);
    if (cfg.elc_weighting) fn(p + "alpha", ly.alpha);
  }
  fn(std::string("lnf_g"), t.lnf_g);
  fn(std::string("lnf_b"), t.lnf_b);
  if (!cfg.tied_output) fn(std::string("out_w"), t.out_w);
  fn(std::string("out_b"), t.out_b);
}

template <class S, class Fn>
void for_each_tensor(const TensorBundle<S>& t, const ModelConfig& cfg, Fn&& fn) {
  for_each_tensor(const_cast<TensorBundle<S>&>(t), cfg,
                  [&](const std::string& name, Mat<S>& m) { fn(name, static_cast<const Mat<S>&>(m)); });
}

template <class S>
bool all_finite(const TensorBundle<S>& t, const ModelConfig& cfg) {
  bool ok = true;
  for_each_tensor(t, cfg, [&](const std::string&, const Mat<S>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <class S>
long long parameter_count(const TensorBundle<S>& t, const ModelConfig& cfg) {
  long long n = 0;
  for_each_tensor(t, cfg, [&](const std::string&, const Mat<S>& m) { n += m.size(); });
  return n;
}

template <class S>
struct MaskedLM {
  ModelConfig cfg;
  TensorBundle<S> p;

  MaskedLM() = default;
  explicit MaskedLM(ModelConfig c) : cfg(c) {
    cfg.validate();
    p = TensorBundle<S>::zeros(cfg);
  }

  // Weight matrices and embeddings N(0, std^2); LN gains 1; with
  // elc_weighting, alpha starts heavily tilted toward the previous layer
  // so the model initially behaves like a plain residual encoder.
  void init_params(Rng& rng, double std_dev = 0.02) {
    auto fill = [&](Mat<S>& m) {
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(rng.gaussian() * std_dev);
    };
    fill(p.tok_emb);
    fill(p.pos_emb);
    for (auto& ly : p.layers) {
      ly.ln1_g.setOnes();
      ly.ln2_g.setOnes();
      fill(ly.wq);
      fill(ly.wk);
      fill(ly.wv);
      fill(ly.wo);
      fill(ly.w1);
      fill(ly.w2);
      if (ly.alpha.size() > 0) ly.alpha(0, ly.alpha.cols() - 1) = static_cast<S>(4.0);
    }
    p.lnf_g.setOnes();
    if (!cfg.tied_output) fill(p.out_w);
  }
};

// ---------------------------------------------------------------------------
// forward / backward internals
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
S neg_inf() {
  return -std::numeric_limits<S>::infinity();
}

// y = gamma * (x - mu) / sqrt(var + eps) + beta, per row; xhat/inv cached for backward
template <class S>
Mat<S> layernorm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, double eps,
                 std::type_identity_t<Mat<S>>* xhat_out = nullptr,
                 std::type_identity_t<Vec<S>>* inv_out = nullptr) {
  const auto H = x.cols();
  Mat<S> xhat(x.rows(), H);
  Vec<S> inv(x.rows());
  for (int r = 0; r < x.rows(); ++r) {
    const S mu = x.row(r).mean();
    const S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(H);
    const S iv = S(1) / std::sqrt(var + static_cast<S>(eps));
    xhat.row(r) = (x.row(r).array() - mu) * iv;
    inv(r) = iv;
  }
  Mat<S> y = xhat;
  y.array().rowwise() *= g.row(0).array();
  y.array().rowwise() += b.row(0).array();
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_out) *inv_out = std::move(inv);
  return y;
}

// dL/dx given dL/dy; also accumulates the gain/bias gradients
template <class S>
Mat<S> layernorm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv, const Mat<S>& g,
                          Mat<S>& dg, Mat<S>& db) {
  dg.row(0).array() += (dy.array() * xhat.array()).colwise().sum();
  db.row(0).array() += dy.array().colwise().sum();
  Mat<S> dxhat = dy;
  dxhat.array().rowwise() *= g.row(0).array();
  Mat<S> dx(dy.rows(), dy.cols());
  const S H = static_cast<S>(dy.cols());
  for (int r = 0; r < dy.rows(); ++r) {
    const S m1 = dxhat.row(r).sum() / H;
    const S m2 = (dxhat.row(r).array() * xhat.row(r).array()).sum() / H;
    dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv(r);
  }
  return dx;
}

// row-wise softmax in place; -inf entries come out exactly 0
template <class S>
void softmax_rows(Mat<S>& m) {
  for (int r = 0; r < m.rows(); ++r) {
    const S mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// exact (erf-based) GELU
template <class S>
Mat<S> gelu(const Mat<S>& x) {
  const S c = static_cast<S>(0.7071067811865475244);  // 1/sqrt(2)
  return (x.array() * S(0.5) * (S(1) + (x.array() * c).erf())).matrix();
}

template <class S>
Mat<S> gelu_grad(const Mat<S>& x) {
  const S c = static_cast<S>(0.7071067811865475244);
  const S inv_sqrt_2pi = static_cast<S>(0.3989422804014326779);
  auto phi_big = S(0.5) * (S(1) + (x.array() * c).erf());
  auto phi_small = (-(x.array().square()) * S(0.5)).exp() * inv_sqrt_2pi;
  return (phi_big + x.array() * phi_small).matrix();
}

template <class S>
Vec<S> softmax_vec(const Mat<S>& alpha) {
  Vec<S> w = alpha.row(0).transpose();
  const S mx = w.maxCoeff();
  w = (w.array() - mx).exp();
  w /= w.sum();
  return w;
}

template <class S>
struct LayerActs {
  Mat<S> in;
  Mat<S> ln1_xhat;
  Vec<S> ln1_inv;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;      // per head, post-softmax, pre-dropout
  std::vector<Mat<S>> attn_drop;  // per head dropout multipliers; empty when off
  Mat<S> ctx;
  Mat<S> o_drop;
  Mat<S> a;
  Mat<S> ln2_xhat;
  Vec<S> ln2_inv;
  Mat<S> z1, g1;
  Mat<S> ff_drop;
  Vec<S> wcomb;
};

template <class S>
struct EncodeActs {
  std::vector<int> ids;
  int n_real = 0;
  Mat<S> emb_drop;
  std::vector<Mat<S>> h;  // h[0..n]
  std::vector<LayerActs<S>> layers;
  Mat<S> lnf_xhat;
  Vec<S> lnf_inv;
  Mat<S> hf;
};

template <class S>
Mat<S> dropout_mask(int rows, int cols, double p, Rng& rng) {
  const double keep = 1.0 - p;
  Mat<S> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = rng.uniform() < keep ? static_cast<S>(1.0 / keep) : S(0);
  return m;
}

template <class S>
Mat<S> embed(const TensorBundle<S>& t, const std::vector<int>& ids) {
  Mat<S> x(static_cast<int>(ids.size()), t.tok_emb.cols());
  for (int p = 0; p < x.rows(); ++p) {
    x.row(p) = t.tok_emb.row(ids[static_cast<size_t>(p)]) + t.pos_emb.row(p);
  }
  return x;
}

// layer input: plain residual stack uses the previous output; with
// elc_weighting it is a softmax(alpha)-weighted sum of all earlier outputs
template <class S>
Mat<S> combine_inputs(const ModelConfig& cfg, const LayerTensors<S>& ly,
                      const std::vector<Mat<S>>& h, int l,
                      std::type_identity_t<Vec<S>>* wcomb_out = nullptr) {
  if (!cfg.elc_weighting) return h[static_cast<size_t>(l)];
  Vec<S> w = softmax_vec(ly.alpha);
  Mat<S> in = Mat<S>::Zero(h[0].rows(), h[0].cols());
  for (int j = 0; j <= l; ++j) in += w(j) * h[static_cast<size_t>(j)];
  if (wcomb_out) *wcomb_out = std::move(w);
  return in;
}

// One full encoder layer over all positions. Keys at PAD positions are
// masked out for every query.
template <class S>
Mat<S> run_layer(const ModelConfig& cfg, const LayerTensors<S>& ly, const Mat<S>& in, int n_real,
                 std::type_identity_t<LayerActs<S>>* acts, Rng* drop_rng) {
  const int L = static_cast<int>(in.rows());
  const int H = cfg.hidden_size, nh = cfg.n_heads, dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> ln1_xhat;
  Vec<S> ln1_inv;
  Mat<S> t1 = layernorm(in, ly.ln1_g, ly.ln1_b, cfg.layer_norm_eps, acts ? &ln1_xhat : nullptr,
                        acts ? &ln1_inv : nullptr);

  Mat<S> q = t1 * ly.wq;
  q.array().rowwise() += ly.bq.row(0).array();
  Mat<S> k = t1 * ly.wk;
  k.array().rowwise() += ly.bk.row(0).array();
  Mat<S> v = t1 * ly.wv;
  v.array().rowwise() += ly.bv.row(0).array();

  Mat<S> ctx(L, H);
  std::vector<Mat<S>> probs, attn_drop;
  for (int hd = 0; hd < nh; ++hd) {
    Mat<S> scores = q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose() * scale;
    if (n_real < L) scores.rightCols(L - n_real).setConstant(neg_inf<S>());
    softmax_rows(scores);
    Mat<S> p_used = scores;
    if (drop_rng && cfg.dropout_attn > 0.0) {
      Mat<S> dm = dropout_mask<S>(L, L, cfg.dropout_attn, *drop_rng);
      p_used.array() *= dm.array();
      if (acts) attn_drop.push_back(std::move(dm));
    }
    ctx.middleCols(hd * dh, dh) = p_used * v.middleCols(hd * dh, dh);
    if (acts) probs.push_back(std::move(scores));
  }

  Mat<S> o = ctx * ly.wo;
  o.array().rowwise() += ly.bo.row(0).array();
  Mat<S> o_drop;
  if (drop_rng && cfg.dropout_hidden > 0.0) {
    o_drop = dropout_mask<S>(L, H, cfg.dropout_hidden, *drop_rng);
    o.array() *= o_drop.array();
  }
  Mat<S> a = in + o;

  Mat<S> ln2_xhat;
  Vec<S> ln2_inv;
  Mat<S> t2 = layernorm(a, ly.ln2_g, ly.ln2_b, cfg.layer_norm_eps, acts ? &ln2_xhat : nullptr,
                        acts ? &ln2_inv : nullptr);
  Mat<S> z1 = t2 * ly.w1;
  z1.array().rowwise() += ly.b1.row(0).array();
  Mat<S> g1 = gelu(z1);
  Mat<S> f = g1 * ly.w2;
  f.array().rowwise() += ly.b2.row(0).array();
  Mat<S> ff_drop;
  if (drop_rng && cfg.dropout_hidden > 0.0) {
    ff_drop = dropout_mask<S>(L, H, cfg.dropout_hidden, *drop_rng);
    f.array() *= ff_drop.array();
  }
  Mat<S> out = a + f;

  if (acts) {
    acts->in = in;
    acts->ln1_xhat = std::move(ln1_xhat);
    acts->ln1_inv = std::move(ln1_inv);
    acts->q = std::move(q);
    acts->k = std::move(k);
    acts->v = std::move(v);
    acts->probs = std::move(probs);
    acts->attn_drop = std::move(attn_drop);
    acts->ctx = std::move(ctx);
    acts->o_drop = std::move(o_drop);
    acts->a = std::move(a);
    acts->ln2_xhat = std::move(ln2_xhat);
    acts->ln2_inv = std::move(ln2_inv);
    acts->z1 = std::move(z1);
    acts->g1 = std::move(g1);
    acts->ff_drop = std::move(ff_drop);
  }
  return out;
}

// Hidden-state stack h[0..upto] with no caches and no dropout (scoring path).
template <class S>
std::vector<Mat<S>> forward_hstack(const MaskedLM<S>& m, const std::vector<int>& ids, int n_real,
                                   int upto) {
  std::vector<Mat<S>> h;
  h.reserve(static_cast<size_t>(upto) + 1);
  h.push_back(embed(m.p, ids));
  for (int l = 0; l < upto; ++l) {
    Mat<S> in = combine_inputs(m.cfg, m.p.layers[static_cast<size_t>(l)], h, l, nullptr);
    h.push_back(run_layer(m.cfg, m.p.layers[static_cast<size_t>(l)], in, n_real, nullptr, nullptr));
  }
  return h;
}

template <class S>
Mat<S> head_logits(const TensorBundle<S>& t, const ModelConfig& cfg, const Mat<S>& hf) {
  Mat<S> logits = cfg.tied_output ? Mat<S>(hf * t.tok_emb.transpose()) : Mat<S>(hf * t.out_w);
  logits.array().rowwise() += t.out_b.row(0).array();
  return logits;
}

// Full forward; acts/drop_rng are optional (training uses both).
template <class S>
Mat<S> forward_full(const MaskedLM<S>& m, const std::vector<int>& ids, int n_real,
                    std::type_identity_t<EncodeActs<S>>* acts, Rng* drop_rng) {
  const ModelConfig& cfg = m.cfg;
  Mat<S> x0 = embed(m.p, ids);
  Mat<S> emb_drop;
  if (drop_rng && cfg.dropout_hidden > 0.0) {
    emb_drop = dropout_mask<S>(static_cast<int>(x0.rows()), static_cast<int>(x0.cols()),
                               cfg.dropout_hidden, *drop_rng);
    x0.array() *= emb_drop.array();
  }
  std::vector<Mat<S>> h;
  h.push_back(std::move(x0));
  std::vector<LayerActs<S>> lacts(acts ? static_cast<size_t>(cfg.n_layers) : 0);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerActs<S>* la = acts ? &lacts[static_cast<size_t>(l)] : nullptr;
    Vec<S> wcomb;
    Mat<S> in = combine_inputs(cfg, m.p.layers[static_cast<size_t>(l)], h, l, la ? &wcomb : nullptr);
    if (la) la->wcomb = std::move(wcomb);
    h.push_back(run_layer(cfg, m.p.layers[static_cast<size_t>(l)], in, n_real, la, drop_rng));
  }
  Mat<S> lnf_xhat;
  Vec<S> lnf_inv;
  Mat<S> hf = layernorm(h.back(), m.p.lnf_g, m.p.lnf_b, cfg.layer_norm_eps,
                        acts ? &lnf_xhat : nullptr, acts ? &lnf_inv : nullptr);
  Mat<S> logits = head_logits(m.p, cfg, hf);
  if (acts) {
    acts->ids = ids;
    acts->n_real = n_real;
    acts->emb_drop = std::move(emb_drop);
    acts->h = std::move(h);
    acts->layers = std::move(lacts);
    acts->lnf_xhat = std::move(lnf_xhat);
    acts->lnf_inv = std::move(lnf_inv);
    acts->hf = std::move(hf);
  }
  return logits;
}

// Backprop of dL/dlogits through the whole model; accumulates into grads.
template <class S>
void backward_full(const MaskedLM<S>& m, const EncodeActs<S>& acts, const Mat<S>& dlogits,
                   TensorBundle<S>& grads) {
  const ModelConfig& cfg = m.cfg;
  const int nh = cfg.n_heads, dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  // output head
  Mat<S> dhf;
  if (cfg.tied_output) {
    dhf = dlogits * m.p.tok_emb;
    grads.tok_emb.noalias() += dlogits.transpose() * acts.hf;
  } else {
    dhf = dlogits * m.p.out_w.transpose();
    grads.out_w.noalias() += acts.hf.transpose() * dlogits;
  }
  grads.out_b.row(0).array() += dlogits.array().colwise().sum();

  // final layernorm
  std::vector<Mat<S>> dhidden(acts.h.size());
  for (auto& d : dhidden) d.setZero(acts.h[0].rows(), acts.h[0].cols());
  dhidden[static_cast<size_t>(cfg.n_layers)] =
      layernorm_backward(dhf, acts.lnf_xhat, acts.lnf_inv, m.p.lnf_g, grads.lnf_g, grads.lnf_b);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& ly = m.p.layers[static_cast<size_t>(l)];
    auto& gly = grads.layers[static_cast<size_t>(l)];
    const auto& la = acts.layers[static_cast<size_t>(l)];
    const Mat<S>& dout = dhidden[static_cast<size_t>(l) + 1];

    // FF block: out = a + drop(g1 * w2 + b2)
    Mat<S> df = dout;
    if (la.ff_drop.size() > 0) df.array() *= la.ff_drop.array();
    Mat<S> da = dout;
    gly.w2.noalias() += la.g1.transpose() * df;
    gly.b2.row(0).array() += df.array().colwise().sum();
    Mat<S> dg1 = df * ly.w2.transpose();
    Mat<S> dz1 = (dg1.array() * gelu_grad(la.z1).array()).matrix();
    Mat<S> t2 = la.ln2_xhat;  // reconstruct LN2 output for the w1 gradient
    t2.array().rowwise() *= ly.ln2_g.row(0).array();
    t2.array().rowwise() += ly.ln2_b.row(0).array();
    gly.w1.noalias() += t2.transpose() * dz1;
    gly.b1.row(0).array() += dz1.array().colwise().sum();
    Mat<S> dt2 = dz1 * ly.w1.transpose();
    da += layernorm_backward(dt2, la.ln2_xhat, la.ln2_inv, ly.ln2_g, gly.ln2_g, gly.ln2_b);

    // attention block: a = in + drop(ctx * wo + bo)
    Mat<S> do_ = da;
    if (la.o_drop.size() > 0) do_.array() *= la.o_drop.array();
    Mat<S> din = da;
    gly.wo.noalias() += la.ctx.transpose() * do_;
    gly.bo.row(0).array() += do_.array().colwise().sum();
    Mat<S> dctx = do_ * ly.wo.transpose();

    Mat<S> dq(la.q.rows(), la.q.cols()), dk(la.k.rows(), la.k.cols()), dv(la.v.rows(), la.v.cols());
    for (int hd = 0; hd < nh; ++hd) {
      const Mat<S>& p = la.probs[static_cast<size_t>(hd)];
      Mat<S> p_used = p;
      if (!la.attn_drop.empty()) p_used.array() *= la.attn_drop[static_cast<size_t>(hd)].array();
      auto dctx_h = dctx.middleCols(hd * dh, dh);
      Mat<S> dp = dctx_h * la.v.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh).noalias() = p_used.transpose() * dctx_h;
      if (!la.attn_drop.empty()) dp.array() *= la.attn_drop[static_cast<size_t>(hd)].array();
      // softmax backward: ds = p .* (dp - rowsum(dp .* p))
      Vec<S> rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat<S> ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix();
      dq.middleCols(hd * dh, dh).noalias() = ds * la.k.middleCols(hd * dh, dh) * scale;
      dk.middleCols(hd * dh, dh).noalias() = ds.transpose() * la.q.middleCols(hd * dh, dh) * scale;
    }

    Mat<S> t1 = la.ln1_xhat;
    t1.array().rowwise() *= ly.ln1_g.row(0).array();
    t1.array().rowwise() += ly.ln1_b.row(0).array();
    gly.wq.noalias() += t1.transpose() * dq;
    gly.bq.row(0).array() += dq.array().colwise().sum();
    gly.wk.noalias() += t1.transpose() * dk;
    gly.bk.row(0).array() += dk.array().colwise().sum();
    gly.wv.noalias() += t1.transpose() * dv;
    gly.bv.row(0).array() += dv.array().colwise().sum();
    Mat<S> dt1 = dq * ly.wq.transpose() + dk * ly.wk.transpose() + dv * ly.wv.transpose();
    din += layernorm_backward(dt1, la.ln1_xhat, la.ln1_inv, ly.ln1_g, gly.ln1_g, gly.ln1_b);

    // distribute to earlier hidden states
    if (cfg.elc_weighting) {
      const Vec<S>& w = la.wcomb;
      Vec<S> s(l + 1);
      for (int j = 0; j <= l; ++j) {
        dhidden[static_cast<size_t>(j)] += w(j) * din;
        s(j) = (din.array() * acts.h[static_cast<size_t>(j)].array()).sum();
      }
      const S wdots = (w.array() * s.array()).sum();
      for (int j = 0; j <= l; ++j) gly.alpha(0, j) += w(j) * (s(j) - wdots);
    } else {
      dhidden[static_cast<size_t>(l)] += din;
    }
  }

  // embeddings
  Mat<S> dx0 = std::move(dhidden[0]);
  if (acts.emb_drop.size() > 0) dx0.array() *= acts.emb_drop.array();
  for (int pos = 0; pos < dx0.rows(); ++pos) {
    grads.tok_emb.row(acts.ids[static_cast<size_t>(pos)]) += dx0.row(pos);
    grads.pos_emb.row(pos) += dx0.row(pos);
  }
}

}  // namespace detail

// Logits at every position with the given positions replaced by MASK before
// embedding. PAD keys are never attended to.
template <class S>
Mat<S> forward_logits(const MaskedLM<S>& m, const Sequence& seq,
                      const std::vector<int>& mask_positions) {
  for (int p : mask_positions)
    if (p < 0 || p >= seq.n_real)
      throw std::invalid_argument("forward_logits: mask position outside real tokens");
  std::vector<int> ids = seq.token_ids;
  for (int p : mask_positions) ids[static_cast<size_t>(p)] = Vocab::kMask;
  return detail::forward_full(m, ids, seq.n_real, nullptr, nullptr);
}

}  // namespace aclm
