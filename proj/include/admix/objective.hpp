#pragma once

#include <cstdint>
#include <stdexcept>

#include "admix/corpus.hpp"
#include "admix/mixing.hpp"
#include "admix/tensor.hpp"
#include "admix/transformer.hpp"

namespace admix {

struct LossReport {
  double ce = 0.0;
  double js = 0.0;
  double total = 0.0;
  int64_t token_count = 0;
};

namespace detail {

// mask [B, L] broadcast into a same-shape real tensor (constant).
template <class Real>
TensorT<Real> mask_tensor(const BoolMat& mask) {
  std::vector<Real> v(mask.v.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = mask.v[i] ? Real(1) : Real(0);
  return TensorT<Real>({mask.rows, mask.cols}, std::move(v));
}

}  // namespace detail

// Per-token cross-entropy: mean of -log p(y_i | ...) over mask-true
// positions. PAD positions contribute exactly zero.
template <class Real>
TensorT<Real> cross_entropy(const TensorT<Real>& logits, const IdMat& tgt_out,
                            const BoolMat& tgt_mask) {
  const int64_t count = tgt_mask.count_true();
  if (count == 0) throw std::runtime_error("cross_entropy: mask selects no tokens");
  auto logp = pick_last(log_softmax(logits), tgt_out);       // [B, T]
  auto masked = mul(logp, detail::mask_tensor<Real>(tgt_mask));
  return scale(sum_all(masked), -1.0 / static_cast<double>(count));
}

// Jensen-Shannon divergence between two distribution tensors [B, T, V],
// averaged over mask-true positions (natural log):
//   JS = 1/2 KL(p || M) + 1/2 KL(q || M),  M = (p + q) / 2.
// Probabilities are floored at 1e-12 inside the logs; gradients flow through
// both arguments including M.
template <class Real>
TensorT<Real> js_divergence(const TensorT<Real>& p, const TensorT<Real>& q,
                            const BoolMat& mask) {
  detail::check_same_shape(p, q, "js_divergence");
  constexpr double kFloor = 1e-12;
  const int64_t count = mask.count_true();
  if (count == 0) throw std::runtime_error("js_divergence: mask selects no positions");
  auto mid = scale(add(p, q), 0.5);
  auto log_mid = elem_log(clamp_min(mid, kFloor));
  auto kl_p = sum_last(mul(p, sub(elem_log(clamp_min(p, kFloor)), log_mid)));  // [B, T]
  auto kl_q = sum_last(mul(q, sub(elem_log(clamp_min(q, kFloor)), log_mid)));
  auto js_pos = scale(add(kl_p, kl_q), 0.5);
  auto masked = mul(js_pos, detail::mask_tensor<Real>(mask));
  return scale(sum_all(masked), 1.0 / static_cast<double>(count));
}

// KL(p || q) under the same masking/flooring conventions (alternative
// divergence for the consistency term).
template <class Real>
TensorT<Real> kl_divergence(const TensorT<Real>& p, const TensorT<Real>& q,
                            const BoolMat& mask) {
  detail::check_same_shape(p, q, "kl_divergence");
  constexpr double kFloor = 1e-12;
  const int64_t count = mask.count_true();
  if (count == 0) throw std::runtime_error("kl_divergence: mask selects no positions");
  auto kl = sum_last(mul(p, sub(elem_log(clamp_min(p, kFloor)), elem_log(clamp_min(q, kFloor)))));
  auto masked = mul(kl, detail::mask_tensor<Real>(mask));
  return scale(sum_all(masked), 1.0 / static_cast<double>(count));
}

// The combined training objective on one batch:
//   total = CE(clean) + lambda * JS(p_clean, p_mixed)
// One clean forward pass feeds both terms. The mixed branch is skipped
// entirely when lambda == 0, where the objective degenerates to plain CE.
// Calls backward(); gradients are left populated on the parameters.
template <class Real>
LossReport admix_loss(TransformerT<Real>& model, const Batch& batch, const Vocab& vocab,
                      const AdmixConfig& cfg, Rng& noise_rng, Rng& mix_rng, Rng& dropout_rng,
                      bool train = true) {
  if (cfg.lambda < 0) throw std::invalid_argument("admix_loss: lambda must be nonnegative");
  LossReport report;
  report.token_count = batch.token_count();

  auto clean_logits = model.forward_ids(batch, train, &dropout_rng);
  auto ce = cross_entropy(clean_logits, batch.tgt_out, batch.tgt_mask);
  report.ce = static_cast<double>(ce.item());

  TensorT<Real> total = ce;
  if (cfg.lambda > 0) {
    auto mixed = admix_batch(batch, model.src_table(), model.tgt_table(), vocab, cfg, noise_rng,
                             mix_rng);
    if (mixed.tgt.mask.cols != batch.tgt_mask.cols || mixed.tgt.mask.rows != batch.tgt_mask.rows)
      throw std::runtime_error("admix_loss: mixed target length differs from clean branch");
    auto mixed_logits = model.forward_embedded(mixed.src, mixed.tgt, train, &dropout_rng);
    auto p_clean = softmax(cfg.stop_grad_clean ? clean_logits.detach() : clean_logits);
    auto p_mixed = softmax(mixed_logits);
    auto div = cfg.divergence == Divergence::js
                   ? js_divergence(p_clean, p_mixed, batch.tgt_mask)
                   : kl_divergence(p_clean, p_mixed, batch.tgt_mask);
    report.js = static_cast<double>(div.item());
    total = add(total, scale(div, cfg.lambda));
  }
  report.total = static_cast<double>(total.item());
  total.backward();
  return report;
}

}  // namespace admix
