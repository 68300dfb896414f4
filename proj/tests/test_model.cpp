#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aclm/model.hpp"
#include "aclm/train.hpp"

using namespace aclm;

namespace {

Sequence make_seq(std::vector<int> ids, int n_real = -1) {
  Sequence s;
  s.id = 0;
  s.n_real = n_real < 0 ? static_cast<int>(ids.size()) : n_real;
  s.token_ids = std::move(ids);
  return s;
}

ModelConfig tiny_cfg() {
  ModelConfig c;
  c.n_layers = 1;
  c.hidden_size = 4;
  c.n_heads = 2;
  c.ff_size = 6;
  c.vocab_size = 5;
  c.seq_len = 4;
  c.elc_weighting = false;
  return c;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = tiny_cfg();
  EXPECT_NO_THROW(c.validate());
  c.hidden_size = 5;  // not divisible by n_heads
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_cfg();
  c.dropout_hidden = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_cfg();
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Forward, ShapeAndFinite) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden_size = 8;
  cfg.n_heads = 2;
  cfg.ff_size = 16;
  cfg.vocab_size = 11;
  cfg.seq_len = 6;
  MaskedLM<float> m(cfg);
  Rng rng(1);
  m.init_params(rng);
  const Sequence seq = make_seq({3, 4, 5, 6, 0, 0}, 4);
  const Mat<float> logits = forward_logits(m, seq, {1});
  EXPECT_EQ(logits.rows(), 6);
  EXPECT_EQ(logits.cols(), 11);
  EXPECT_TRUE(logits.allFinite());
}

TEST(Forward, ZeroModelGivesUniformLogits) {
  MaskedLM<float> m(tiny_cfg());  // all parameters zero
  const Sequence seq = make_seq({3, 4, 3, 0}, 3);
  const Mat<float> logits = forward_logits(m, seq, {});
  for (int r = 0; r < logits.rows(); ++r)
    for (int c = 0; c < logits.cols(); ++c) EXPECT_EQ(logits(r, c), logits(r, 0));
}

TEST(Forward, MaskPositionOutsideRealTokensThrows) {
  MaskedLM<float> m(tiny_cfg());
  const Sequence seq = make_seq({3, 4, 0, 0}, 2);
  EXPECT_THROW(forward_logits(m, seq, {2}), std::invalid_argument);
  EXPECT_THROW(forward_logits(m, seq, {-1}), std::invalid_argument);
}

TEST(Forward, PadPositionsNeverAttended) {
  // changing the token ids under the PAD tail must not move real-position
  // logits at all
  ModelConfig cfg = tiny_cfg();
  cfg.n_layers = 2;
  cfg.elc_weighting = true;
  MaskedLM<float> m(cfg);
  Rng rng(3);
  m.init_params(rng);
  std::vector<int> ids_a = {3, 4, 0, 0};
  std::vector<int> ids_b = {3, 4, 2, 1};  // junk where PAD lives
  const Mat<float> la = detail::forward_full(m, ids_a, 2, nullptr, nullptr);
  const Mat<float> lb = detail::forward_full(m, ids_b, 2, nullptr, nullptr);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < la.cols(); ++c) EXPECT_EQ(la(r, c), lb(r, c));
}

TEST(Forward, InitDeterminism) {
  ModelConfig cfg = tiny_cfg();
  MaskedLM<float> a(cfg), b(cfg);
  Rng ra(9), rb(9);
  a.init_params(ra);
  b.init_params(rb);
  std::vector<const Mat<float>*> ta, tb;
  for_each_tensor(a.p, cfg, [&](const std::string&, const Mat<float>& m) { ta.push_back(&m); });
  for_each_tensor(b.p, cfg, [&](const std::string&, const Mat<float>& m) { tb.push_back(&m); });
  ASSERT_EQ(ta.size(), tb.size());
  for (size_t i = 0; i < ta.size(); ++i)
    EXPECT_TRUE((ta[i]->array() == tb[i]->array()).all());
}

// ---------------------------------------------------------------------------
// independent plain-loop oracle for a 1-layer model
// ---------------------------------------------------------------------------

namespace {

// Forward pass written with raw arrays and index arithmetic only; no Eigen.
struct PlainOracle {
  int L, H, nh, F, V;
  double eps;
  std::vector<double> tok_emb, pos_emb;            // V*H, L*H
  std::vector<double> ln1g, ln1b, ln2g, ln2b;      // H
  std::vector<double> wq, wk, wv, wo;              // H*H
  std::vector<double> bq, bk, bv, bo;              // H
  std::vector<double> w1, b1, w2, b2;              // H*F, F, F*H, H
  std::vector<double> lnfg, lnfb, outb;            // H, H, V

  static std::vector<double> flat(const Mat<double>& m) {
    std::vector<double> out;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
  }

  explicit PlainOracle(const MaskedLM<double>& m) {
    const auto& cfg = m.cfg;
    L = cfg.seq_len;
    H = cfg.hidden_size;
    nh = cfg.n_heads;
    F = cfg.ff_size;
    V = cfg.vocab_size;
    eps = cfg.layer_norm_eps;
    tok_emb = flat(m.p.tok_emb);
    pos_emb = flat(m.p.pos_emb);
    const auto& ly = m.p.layers[0];
    ln1g = flat(ly.ln1_g);
    ln1b = flat(ly.ln1_b);
    ln2g = flat(ly.ln2_g);
    ln2b = flat(ly.ln2_b);
    wq = flat(ly.wq);
    wk = flat(ly.wk);
    wv = flat(ly.wv);
    wo = flat(ly.wo);
    bq = flat(ly.bq);
    bk = flat(ly.bk);
    bv = flat(ly.bv);
    bo = flat(ly.bo);
    w1 = flat(ly.w1);
    b1 = flat(ly.b1);
    w2 = flat(ly.w2);
    b2 = flat(ly.b2);
    lnfg = flat(m.p.lnf_g);
    lnfb = flat(m.p.lnf_b);
    outb = flat(m.p.out_b);
  }

  std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                 const std::vector<double>& b, int rows) const {
    std::vector<double> y(x.size());
    for (int r = 0; r < rows; ++r) {
      double mu = 0;
      for (int h = 0; h < H; ++h) mu += x[r * H + h];
      mu /= H;
      double var = 0;
      for (int h = 0; h < H; ++h) var += (x[r * H + h] - mu) * (x[r * H + h] - mu);
      var /= H;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int h = 0; h < H; ++h) y[r * H + h] = (x[r * H + h] - mu) * inv * g[h] + b[h];
    }
    return y;
  }

  static std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& w,
                                    const std::vector<double>& bias, int rows, int in, int out) {
    std::vector<double> y(static_cast<size_t>(rows) * out, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < out; ++j) {
        double s = bias.empty() ? 0.0 : bias[j];
        for (int i = 0; i < in; ++i) s += a[r * in + i] * w[i * out + j];
        y[r * out + j] = s;
      }
    return y;
  }

  std::vector<double> forward(const std::vector<int>& ids, int n_real) const {
    const int dh = H / nh;
    std::vector<double> x(static_cast<size_t>(L) * H);
    for (int p = 0; p < L; ++p)
      for (int h = 0; h < H; ++h) x[p * H + h] = tok_emb[ids[p] * H + h] + pos_emb[p * H + h];

    const auto t1 = layer_norm(x, ln1g, ln1b, L);
    const auto q = matmul(t1, wq, bq, L, H, H);
    const auto k = matmul(t1, wk, bk, L, H, H);
    const auto v = matmul(t1, wv, bv, L, H, H);

    std::vector<double> ctx(static_cast<size_t>(L) * H, 0.0);
    for (int hd = 0; hd < nh; ++hd) {
      for (int p = 0; p < L; ++p) {
        std::vector<double> scores(static_cast<size_t>(L), -1e300);
        double mx = -1e300;
        for (int kp = 0; kp < n_real; ++kp) {
          double s = 0;
          for (int d = 0; d < dh; ++d) s += q[p * H + hd * dh + d] * k[kp * H + hd * dh + d];
          s /= std::sqrt(static_cast<double>(dh));
          scores[static_cast<size_t>(kp)] = s;
          mx = std::max(mx, s);
        }
        double z = 0;
        for (int kp = 0; kp < n_real; ++kp) {
          scores[static_cast<size_t>(kp)] = std::exp(scores[static_cast<size_t>(kp)] - mx);
          z += scores[static_cast<size_t>(kp)];
        }
        for (int d = 0; d < dh; ++d) {
          double s = 0;
          for (int kp = 0; kp < n_real; ++kp)
            s += scores[static_cast<size_t>(kp)] / z * v[kp * H + hd * dh + d];
          ctx[p * H + hd * dh + d] = s;
        }
      }
    }

    auto o = matmul(ctx, wo, bo, L, H, H);
    std::vector<double> a(static_cast<size_t>(L) * H);
    for (size_t i = 0; i < a.size(); ++i) a[i] = x[i] + o[i];

    const auto t2 = layer_norm(a, ln2g, ln2b, L);
    auto z1 = matmul(t2, w1, b1, L, H, F);
    for (auto& vv : z1) vv = 0.5 * vv * (1.0 + std::erf(vv / std::sqrt(2.0)));
    const auto f = matmul(z1, w2, b2, L, F, H);
    std::vector<double> hout(static_cast<size_t>(L) * H);
    for (size_t i = 0; i < hout.size(); ++i) hout[i] = a[i] + f[i];

    const auto hf = layer_norm(hout, lnfg, lnfb, L);
    std::vector<double> logits(static_cast<size_t>(L) * V);
    for (int p = 0; p < L; ++p)
      for (int t = 0; t < V; ++t) {
        double s = outb[t];
        for (int h = 0; h < H; ++h) s += hf[p * H + h] * tok_emb[t * H + h];
        logits[p * V + t] = s;
      }
    return logits;
  }
};

}  // namespace

TEST(Forward, MatchesPlainLoopOracle) {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden_size = 6;
  cfg.n_heads = 2;
  cfg.ff_size = 8;
  cfg.vocab_size = 5;  // three specials plus a two-word vocabulary
  cfg.seq_len = 5;
  cfg.elc_weighting = false;
  MaskedLM<double> m(cfg);
  Rng rng(77);
  m.init_params(rng, 0.5);
  const PlainOracle oracle(m);

  for (const int n_real : {5, 3}) {
    std::vector<int> ids = {3, 4, 3, 0, 0};
    ids.resize(5, 0);
    if (n_real == 5) ids = {3, 4, 4, 3, 4};
    ids[1] = Vocab::kMask;
    const Mat<double> got = detail::forward_full(m, ids, n_real, nullptr, nullptr);
    const auto expect = oracle.forward(ids, n_real);
    for (int p = 0; p < n_real; ++p)
      for (int t = 0; t < cfg.vocab_size; ++t)
        EXPECT_NEAR(got(p, t), expect[static_cast<size_t>(p) * cfg.vocab_size + t], 1e-10)
            << "position " << p << " token " << t << " n_real " << n_real;
  }
}

// ---------------------------------------------------------------------------
// layer-combination weighting
// ---------------------------------------------------------------------------

TEST(ElcWeighting, SoftmaxWeightsSumToOne) {
  ModelConfig cfg;
  cfg.n_layers = 4;
  cfg.hidden_size = 8;
  cfg.n_heads = 2;
  cfg.ff_size = 8;
  cfg.vocab_size = 7;
  cfg.seq_len = 4;
  cfg.elc_weighting = true;
  MaskedLM<double> m(cfg);
  Rng rng(5);
  m.init_params(rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    // perturb alphas asymmetrically, then check normalization
    for (int j = 0; j <= l; ++j) m.p.layers[static_cast<size_t>(l)].alpha(0, j) += 0.37 * (j + 1);
    const Vec<double> w = detail::softmax_vec(m.p.layers[static_cast<size_t>(l)].alpha);
    EXPECT_NEAR(w.sum(), 1.0, 1e-6);
    for (int j = 0; j <= l; ++j) EXPECT_GT(w(j), 0.0);
  }
}

TEST(ElcWeighting, OneHotAlphaReducesToPlainEncoder) {
  ModelConfig cfg;
  cfg.n_layers = 3;
  cfg.hidden_size = 8;
  cfg.n_heads = 2;
  cfg.ff_size = 12;
  cfg.vocab_size = 9;
  cfg.seq_len = 6;
  cfg.elc_weighting = false;
  MaskedLM<float> plain(cfg);
  Rng rng(13);
  plain.init_params(rng);

  ModelConfig elc_cfg = cfg;
  elc_cfg.elc_weighting = true;
  MaskedLM<float> elc(elc_cfg);
  elc.p = TensorBundle<float>::zeros(elc_cfg);
  // copy shared tensors, then pin each alpha so the immediately preceding
  // layer gets softmax weight exactly 1 (the tail underflows to 0)
  elc.p.tok_emb = plain.p.tok_emb;
  elc.p.pos_emb = plain.p.pos_emb;
  elc.p.lnf_g = plain.p.lnf_g;
  elc.p.lnf_b = plain.p.lnf_b;
  elc.p.out_b = plain.p.out_b;
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& dst = elc.p.layers[static_cast<size_t>(l)];
    const auto& src = plain.p.layers[static_cast<size_t>(l)];
    const Mat<float> alpha = dst.alpha;
    dst = src;
    dst.alpha = alpha;
    dst.alpha.setZero();
    dst.alpha(0, l) = 1e4f;
  }
  const Sequence seq = make_seq({3, 4, 5, 6, 0, 0}, 4);
  const Mat<float> lp = forward_logits(plain, seq, {0});
  const Mat<float> le = forward_logits(elc, seq, {0});
  for (int r = 0; r < lp.rows(); ++r)
    for (int c = 0; c < lp.cols(); ++c) EXPECT_EQ(lp(r, c), le(r, c));
}

// ---------------------------------------------------------------------------
// gradient checks: analytic backward vs central finite differences
// ---------------------------------------------------------------------------

namespace {

struct FixedBatch {
  std::vector<std::vector<int>> ids;
  std::vector<int> n_real;
  std::vector<std::vector<std::pair<int, int>>> targets;
};

double batch_loss(const MaskedLM<double>& m, const FixedBatch& batch) {
  double loss = 0.0;
  long long count = 0;
  for (size_t s = 0; s < batch.ids.size(); ++s) {
    const Mat<double> logits =
        detail::forward_full(m, batch.ids[s], batch.n_real[s], nullptr, nullptr);
    loss += detail::masked_ce<double>(logits, batch.targets[s], nullptr);
    count += static_cast<long long>(batch.targets[s].size());
  }
  return loss / static_cast<double>(count);
}

TensorBundle<double> batch_grads(const MaskedLM<double>& m, const FixedBatch& batch) {
  TensorBundle<double> grads = TensorBundle<double>::zeros(m.cfg);
  long long count = 0;
  for (size_t s = 0; s < batch.ids.size(); ++s) count += static_cast<long long>(batch.targets[s].size());
  for (size_t s = 0; s < batch.ids.size(); ++s) {
    detail::EncodeActs<double> acts;
    const Mat<double> logits =
        detail::forward_full(m, batch.ids[s], batch.n_real[s], &acts, nullptr);
    Mat<double> dlogits;
    detail::masked_ce<double>(logits, batch.targets[s], &dlogits);
    dlogits /= static_cast<double>(count);
    detail::backward_full(m, acts, dlogits, grads);
  }
  return grads;
}

// probes every tensor at a few random entries; returns the max relative error
double gradcheck(MaskedLM<double>& m, const FixedBatch& batch, int probes_per_tensor, Rng& rng,
                 int* total_probes) {
  const TensorBundle<double> analytic = batch_grads(m, batch);
  std::vector<Mat<double>*> params = detail::tensor_ptrs(m.p, m.cfg);
  std::vector<const Mat<double>*> grads;
  std::vector<std::string> names;
  for_each_tensor(analytic, m.cfg, [&](const std::string& name, const Mat<double>& g) {
    grads.push_back(&g);
    names.push_back(name);
  });

  double max_rel = 0.0;
  std::string worst;
  int probes = 0;
  for (size_t t = 0; t < params.size(); ++t) {
    Mat<double>& w = *params[t];
    const int n = static_cast<int>(std::min<long long>(w.size(), probes_per_tensor));
    for (int p = 0; p < n; ++p) {
      const int idx = rng.uniform_int(static_cast<int>(w.size()));
      const int r = idx % static_cast<int>(w.rows());
      const int c = idx / static_cast<int>(w.rows());
      const double orig = w(r, c);
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      w(r, c) = orig + h;
      const double lp = batch_loss(m, batch);
      w(r, c) = orig - h;
      const double lm = batch_loss(m, batch);
      w(r, c) = orig;
      const double numeric = (lp - lm) / (2 * h);
      const double ana = (*grads[t])(r, c);
      // 1e-6 floor: exactly-flat directions exist (a shared key-bias shift
      // cancels inside softmax), where central differences return pure noise
      const double rel = std::abs(numeric - ana) / std::max({std::abs(numeric), std::abs(ana), 1e-6});
      if (rel > max_rel) {
        max_rel = rel;
        worst = names[t] + "(" + std::to_string(r) + "," + std::to_string(c) + ") numeric=" +
                std::to_string(numeric) + " analytic=" + std::to_string(ana);
      }
      max_rel = std::max(max_rel, rel);
      ++probes;
    }
  }
  if (total_probes) *total_probes = probes;
  if (max_rel >= 1e-4) ADD_FAILURE() << "worst gradient probe: " << worst;
  return max_rel;
}

FixedBatch gradcheck_batch(int L, int V) {
  FixedBatch b;
  // one full sequence, one with a PAD tail; mixed corruption styles:
  // MASK substitution, a wrong random token, and a kept original
  std::vector<int> ids0 = {3, 4, 5, 3, 4, 5};
  ids0.resize(static_cast<size_t>(L), 4);
  ids0[0] = Vocab::kMask;
  ids0[3] = 5;  // random corruption; true token is 3
  b.ids.push_back(ids0);
  b.n_real.push_back(L);
  b.targets.push_back({{0, 3}, {3, 3}, {4, 4}});

  std::vector<int> ids1(static_cast<size_t>(L), 0);
  ids1[0] = 5;
  ids1[1] = Vocab::kMask;
  ids1[2] = 3;
  b.ids.push_back(ids1);
  b.n_real.push_back(3);
  b.targets.push_back({{1, V - 1}});
  return b;
}

}  // namespace

TEST(GradCheck, ElcTiedModel) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden_size = 6;
  cfg.n_heads = 2;
  cfg.ff_size = 8;
  cfg.vocab_size = 8;
  cfg.seq_len = 6;
  cfg.elc_weighting = true;
  cfg.tied_output = true;
  MaskedLM<double> m(cfg);
  Rng rng(101);
  m.init_params(rng, 0.3);
  // move alpha off its one-hot-ish init so combination gradients are live
  for (auto& ly : m.p.layers)
    for (int j = 0; j < ly.alpha.cols(); ++j) ly.alpha(0, j) = 0.2 * (j + 1);

  ASSERT_LE(parameter_count(m.p, cfg), 1000);
  Rng probe_rng(7);
  int probes = 0;
  const double max_rel = gradcheck(m, gradcheck_batch(cfg.seq_len, cfg.vocab_size), 3, probe_rng, &probes);
  EXPECT_GE(probes, 20);
  EXPECT_LT(max_rel, 1e-4) << "worst relative gradient error " << max_rel;
}

TEST(GradCheck, PlainUntiedModel) {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden_size = 4;
  cfg.n_heads = 1;
  cfg.ff_size = 6;
  cfg.vocab_size = 6;
  cfg.seq_len = 5;
  cfg.elc_weighting = false;
  cfg.tied_output = false;
  MaskedLM<double> m(cfg);
  Rng rng(55);
  m.init_params(rng, 0.4);

  ASSERT_LE(parameter_count(m.p, cfg), 1000);
  Rng probe_rng(8);
  int probes = 0;
  const double max_rel = gradcheck(m, gradcheck_batch(cfg.seq_len, cfg.vocab_size), 3, probe_rng, &probes);
  EXPECT_GE(probes, 20);
  EXPECT_LT(max_rel, 1e-4) << "worst relative gradient error " << max_rel;
}
