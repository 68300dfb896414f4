#pragma once
// Optimization: warmup+cosine schedule, global-norm gradient clipping, LAMB
// with per-tensor trust ratios, the masked-LM objective, and the epoch loop
// with gradient accumulation. Single-threaded and bitwise deterministic
// given the seed.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aclm/model.hpp"
#include "aclm/rng.hpp"

namespace aclm {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double peak_lr = 0.004;
  double final_lr = 0.0004;
  double warmup_ratio = 0.016;
  long long total_steps = 0;
  double weight_decay = 0.01;
  double grad_clip_norm = 2.0;
  int batch_size = 8;
  int grad_accumulation = 1;
  double mask_prob = 0.15;
  uint64_t seed = 42;

  void validate() const {
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
      throw std::invalid_argument("TrainConfig: warmup_ratio must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (grad_accumulation < 1)
      throw std::invalid_argument("TrainConfig: grad_accumulation must be >= 1");
    if (grad_clip_norm <= 0.0)
      throw std::invalid_argument("TrainConfig: grad_clip_norm must be > 0");
    if (mask_prob <= 0.0 || mask_prob > 1.0)
      throw std::invalid_argument("TrainConfig: mask_prob must be in (0, 1]");
    if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
  }
};

// Linear warmup from 0 to peak_lr over ceil(warmup_ratio * total_steps)
// steps, then cosine from peak_lr to final_lr.
inline double lr_at_step(const TrainConfig& cfg, long long step) {
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at_step: step outside [0, total_steps]");
  const long long warmup =
      static_cast<long long>(std::ceil(cfg.warmup_ratio * static_cast<double>(cfg.total_steps)));
  if (step < warmup) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (cfg.total_steps == warmup) return cfg.peak_lr;
  const double t =
      static_cast<double>(step - warmup) / static_cast<double>(cfg.total_steps - warmup);
  return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
template <class S>
double clip_gradients(TensorBundle<S>& grads, const ModelConfig& cfg, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for_each_tensor(grads, cfg, [&](const std::string&, const Mat<S>& m) {
    sq += static_cast<double>(m.template cast<double>().squaredNorm());
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    for_each_tensor(grads, cfg, [&](const std::string&, Mat<S>& m) { m *= scale; });
  }
  return norm;
}

template <class S>
struct OptimizerState {
  TensorBundle<S> m, v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;

  OptimizerState() = default;
  explicit OptimizerState(const ModelConfig& cfg)
      : m(TensorBundle<S>::zeros(cfg)), v(TensorBundle<S>::zeros(cfg)) {}
};

namespace detail {
template <class S>
std::vector<Mat<S>*> tensor_ptrs(TensorBundle<S>& t, const ModelConfig& cfg) {
  std::vector<Mat<S>*> out;
  for_each_tensor(t, cfg, [&](const std::string&, Mat<S>& m) { out.push_back(&m); });
  return out;
}
}  // namespace detail

// One LAMB update. Each named tensor is a "layer" for the trust ratio:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2  (both bias-corrected)
//   u = m^ / (sqrt(v^) + eps) + wd*w;  r = |w| / |u| (1 if either is 0)
//   w <- w - lr * r * u
template <class S>
void lamb_step(TensorBundle<S>& params, const TensorBundle<S>& grads, const ModelConfig& cfg,
               OptimizerState<S>& state, double lr, double weight_decay) {
  if (!all_finite(grads, cfg)) throw DivergenceError("divergence: non-finite gradient");
  state.t += 1;
  const S bc1 = static_cast<S>(1.0 - std::pow(state.beta1, static_cast<double>(state.t)));
  const S bc2 = static_cast<S>(1.0 - std::pow(state.beta2, static_cast<double>(state.t)));
  const S b1 = static_cast<S>(state.beta1), b2 = static_cast<S>(state.beta2);
  const S eps = static_cast<S>(state.eps), wd = static_cast<S>(weight_decay);

  auto pw = detail::tensor_ptrs(params, cfg);
  auto pg = detail::tensor_ptrs(const_cast<TensorBundle<S>&>(grads), cfg);
  auto pm = detail::tensor_ptrs(state.m, cfg);
  auto pv = detail::tensor_ptrs(state.v, cfg);

  for (size_t i = 0; i < pw.size(); ++i) {
    Mat<S>& w = *pw[i];
    const Mat<S>& g = *pg[i];
    Mat<S>& m = *pm[i];
    Mat<S>& v = *pv[i];
    m = b1 * m + (S(1) - b1) * g;
    v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
    Mat<S> update = ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
    if (wd != S(0)) update += wd * w;
    const S wn = w.norm();
    const S un = update.norm();
    const S ratio = (wn > S(0) && un > S(0)) ? wn / un : S(1);
    w -= static_cast<S>(lr) * ratio * update;
  }
}

// ---------------------------------------------------------------------------
// masked-LM objective
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
struct MaskedInput {
  std::vector<int> ids;
  int n_real = 0;
  std::vector<std::pair<int, int>> targets;  // (position, true token id)
};

// 80% MASK / 10% random token / 10% keep; at least one position is always
// selected.
template <class S>
MaskedInput<S> apply_mlm_masking(const Sequence& seq, double mask_prob, int vocab_size, Rng& rng) {
  MaskedInput<S> out;
  out.ids = seq.token_ids;
  out.n_real = seq.n_real;
  std::vector<int> selected;
  for (int i = 0; i < seq.n_real; ++i)
    if (rng.uniform() < mask_prob) selected.push_back(i);
  if (selected.empty()) selected.push_back(rng.uniform_int(seq.n_real));
  for (int pos : selected) {
    const double u = rng.uniform();
    if (u < 0.8)
      out.ids[static_cast<size_t>(pos)] = Vocab::kMask;
    else if (u < 0.9)
      out.ids[static_cast<size_t>(pos)] = rng.uniform_int(vocab_size);
    // else keep the original token
    out.targets.emplace_back(pos, seq.token_ids[static_cast<size_t>(pos)]);
  }
  return out;
}

// Cross-entropy at target positions. Returns the loss sum; writes the
// unnormalized dL/dlogits rows (softmax - onehot).
template <class S>
double masked_ce(const Mat<S>& logits, const std::vector<std::pair<int, int>>& targets,
                 Mat<S>* dlogits) {
  double loss = 0.0;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  for (auto [pos, tok] : targets) {
    const auto row = logits.row(pos);
    const S mx = row.maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> ex = (row.array() - mx).exp();
    const double z = static_cast<double>(ex.sum());
    loss += std::log(z) + static_cast<double>(mx) - static_cast<double>(row(tok));
    if (dlogits) {
      dlogits->row(pos) = (ex / static_cast<S>(z)).matrix();
      (*dlogits)(pos, tok) -= S(1);
    }
  }
  return loss;
}

}  // namespace detail

template <class S>
struct LossResult {
  double loss = 0.0;  // mean over masked positions
  TensorBundle<S> grads;
  long long n_masked = 0;
};

namespace detail {

// Accumulates unnormalized gradient sums; returns (loss sum, masked count).
template <class S>
std::pair<double, long long> mlm_loss_into(MaskedLM<S>& model,
                                           const std::vector<const Sequence*>& batch,
                                           double mask_prob, Rng& rng, TensorBundle<S>& grads) {
  double loss_sum = 0.0;
  long long n_masked = 0;
  const bool dropout = model.cfg.dropout_hidden > 0.0 || model.cfg.dropout_attn > 0.0;
  for (const Sequence* seq : batch) {
    auto inp = apply_mlm_masking<S>(*seq, mask_prob, model.cfg.vocab_size, rng);
    EncodeActs<S> acts;
    Mat<S> logits = forward_full(model, inp.ids, inp.n_real, &acts, dropout ? &rng : nullptr);
    Mat<S> dlogits;
    loss_sum += masked_ce(logits, inp.targets, &dlogits);
    backward_full(model, acts, dlogits, grads);
    n_masked += static_cast<long long>(inp.targets.size());
  }
  return {loss_sum, n_masked};
}

}  // namespace detail

// Loss and mean gradients over one batch (single masking draw per sequence).
template <class S>
LossResult<S> mlm_loss(MaskedLM<S>& model, const std::vector<const Sequence*>& batch,
                       double mask_prob, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("mlm_loss: empty batch");
  if (mask_prob <= 0.0 || mask_prob > 1.0)
    throw std::invalid_argument("mlm_loss: mask_prob must be in (0, 1]");
  LossResult<S> res;
  res.grads = TensorBundle<S>::zeros(model.cfg);
  auto [loss_sum, n_masked] = detail::mlm_loss_into(model, batch, mask_prob, rng, res.grads);
  const S inv = static_cast<S>(1.0 / static_cast<double>(n_masked));
  for_each_tensor(res.grads, model.cfg, [&](const std::string&, Mat<S>& m) { m *= inv; });
  res.loss = loss_sum / static_cast<double>(n_masked);
  res.n_masked = n_masked;
  return res;
}

struct TrainStats {
  int steps = 0;
  double mean_loss = 0.0;
  double first_step_loss = 0.0;
  double last_step_loss = 0.0;
};

// n_epochs full passes over the active set: seeded shuffle, micro-batches of
// batch_size, one optimizer step per grad_accumulation micro-batches (the
// remainder at epoch end is flushed as a partial group). The scheduler is
// driven by the caller-owned global step counter, 1-based.
template <class S>
TrainStats train_epochs(MaskedLM<S>& model, const std::vector<const Sequence*>& active,
                        const TrainConfig& cfg, int n_epochs, OptimizerState<S>& opt, Rng& rng,
                        long long& global_step) {
  if (active.empty()) throw std::invalid_argument("train_epochs: empty active set");
  cfg.validate();
  TrainStats stats;
  if (n_epochs <= 0) return stats;

  double total_loss_sum = 0.0;
  long long total_masked = 0;
  TensorBundle<S> acc = TensorBundle<S>::zeros(model.cfg);
  double group_loss_sum = 0.0;
  long long group_masked = 0;
  int group_micro = 0;

  auto apply_step = [&]() {
    const S inv = static_cast<S>(1.0 / static_cast<double>(group_masked));
    for_each_tensor(acc, model.cfg, [&](const std::string&, Mat<S>& m) { m *= inv; });
    clip_gradients(acc, model.cfg, cfg.grad_clip_norm);
    const long long sched = std::min(global_step + 1, cfg.total_steps);
    const double lr = cfg.total_steps > 0 ? lr_at_step(cfg, sched) : cfg.peak_lr;
    lamb_step(model.p, acc, model.cfg, opt, lr, cfg.weight_decay);
    global_step += 1;
    const double step_loss = group_loss_sum / static_cast<double>(group_masked);
    if (stats.steps == 0) stats.first_step_loss = step_loss;
    stats.last_step_loss = step_loss;
    stats.steps += 1;
    for_each_tensor(acc, model.cfg, [&](const std::string&, Mat<S>& m) { m.setZero(); });
    group_loss_sum = 0.0;
    group_masked = 0;
    group_micro = 0;
  };

  for (int epoch = 0; epoch < n_epochs; ++epoch) {
    std::vector<int> order(active.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const Sequence*> micro;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)); ++i)
        micro.push_back(active[static_cast<size_t>(order[i])]);
      auto [loss_sum, n_masked] = detail::mlm_loss_into(model, micro, cfg.mask_prob, rng, acc);
      if (!std::isfinite(loss_sum))
        throw DivergenceError("divergence: non-finite loss at step " + std::to_string(global_step));
      group_loss_sum += loss_sum;
      group_masked += n_masked;
      total_loss_sum += loss_sum;
      total_masked += n_masked;
      group_micro += 1;
      if (group_micro == cfg.grad_accumulation) apply_step();
    }
    if (group_micro > 0) apply_step();  // flush the partial group at epoch end
  }
  stats.mean_loss = total_loss_sum / static_cast<double>(total_masked);
  return stats;
}

}  // namespace aclm
