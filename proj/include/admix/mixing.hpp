#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "admix/corpus.hpp"
#include "admix/noise.hpp"
#include "admix/rng.hpp"
#include "admix/tensor.hpp"
#include "admix/vocab.hpp"

namespace admix {

enum class Sides { both, source_only, target_only };
enum class Divergence { js, kl };

Sides sides_from_name(const std::string& name);
const char* sides_name(Sides s);
Divergence divergence_from_name(const std::string& name);
const char* divergence_name(Divergence d);

// Knobs of the mixing augmentation and its consistency objective. Covers the
// full ablation surface: per-op switches, residual toggle, side selector.
struct AdmixConfig {
  double alpha = 1.0;    // Dirichlet concentration
  double beta = 1.0;     // Beta concentration for the residual coefficient m
  double gamma = 0.1;    // discrete noise fraction
  double lambda = 10.0;  // consistency loss weight (consumed by the objective)
  std::vector<NoiseOp> ops = {NoiseOp::replace, NoiseOp::swap, NoiseOp::drop};
  Sides sides = Sides::both;
  bool residual = true;       // false forces m = 1 (no clean anchor)
  bool per_sentence = false;  // draw w, m per sentence instead of per batch
  bool stop_grad_clean = false;   // detach the clean branch inside the divergence
  Divergence divergence = Divergence::js;

  size_t k() const { return ops.size(); }
  void validate() const;
};

// Real-valued embedded batch: mixed representations plus the padding mask.
// Values at masked-false positions are the PAD embedding.
template <class Real>
struct EmbeddedBatchT {
  TensorT<Real> values;  // [B, L, d_model]
  BoolMat mask;
};

// Output of one mixing pass. In per-batch mode (default) m and w hold the
// single draw shared by the batch; in per-sentence mode they hold one entry
// per row (shared between source and target sides either way).
template <class Real>
struct AdmixResultT {
  EmbeddedBatchT<Real> src;
  EmbeddedBatchT<Real> tgt;
  std::vector<double> m;
  std::vector<std::vector<double>> w;
};

namespace detail {

// Elementwise convex mix of k variant embeddings followed by the residual
// interpolation with the clean embedding: E_ad = sum_i w_i E[variant_i],
// E_admix = m * E_ad + (1 - m) * E_orig. When residual is disabled the m = 1
// branch returns E_ad itself so the identity is exact.
template <class Real>
TensorT<Real> mix_variants(const std::vector<TensorT<Real>>& variant_emb,
                           const TensorT<Real>& clean_emb, const std::vector<double>& w,
                           double m) {
  if (variant_emb.empty()) throw std::invalid_argument("mix_variants: need at least one variant");
  if (variant_emb.size() != w.size())
    throw std::invalid_argument("mix_variants: " + std::to_string(variant_emb.size()) +
                                " variants vs " + std::to_string(w.size()) + " weights");
  TensorT<Real> mixed = scale(variant_emb[0], w[0]);
  for (size_t i = 1; i < variant_emb.size(); ++i)
    mixed = add(mixed, scale(variant_emb[i], w[i]));
  if (m == 1.0) return mixed;
  return add(scale(mixed, m), scale(clean_emb, 1.0 - m));
}

// Row-wise variant for per-sentence draws.
template <class Real>
TensorT<Real> mix_variants_rows(const std::vector<TensorT<Real>>& variant_emb,
                                const TensorT<Real>& clean_emb,
                                const std::vector<std::vector<double>>& w,
                                const std::vector<double>& m) {
  const size_t rows = m.size();
  const size_t k = variant_emb.size();
  std::vector<Real> wf(rows), mf(rows), rf(rows);
  TensorT<Real> mixed;
  for (size_t i = 0; i < k; ++i) {
    for (size_t r = 0; r < rows; ++r) wf[r] = static_cast<Real>(w[r][i]);
    auto term = scale_rows(variant_emb[i], wf);
    mixed = i == 0 ? term : add(mixed, term);
  }
  bool all_one = true;
  for (const auto mv : m) all_one = all_one && mv == 1.0;
  if (all_one) return mixed;
  for (size_t r = 0; r < rows; ++r) {
    mf[r] = static_cast<Real>(m[r]);
    rf[r] = static_cast<Real>(1.0 - m[r]);
  }
  return add(scale_rows(mixed, mf), scale_rows(clean_emb, rf));
}

}  // namespace detail

// Runs the mixing augmentation over one padded batch side: per sentence,
// generate one noised variant per enabled op on the real-token span (WD in
// blank mode so lengths match), embed each variant, then mix. Structural
// tokens (BOS on the decoder side) and PAD never receive noise; PAD positions
// carry the clean PAD embedding bit-for-bit.
template <class Real>
EmbeddedBatchT<Real> admix_side(const IdMat& ids, const BoolMat& mask,
                                const std::vector<int32_t>& lens, bool bos_prefixed,
                                const TensorT<Real>& table, const Vocab& vocab,
                                const AdmixConfig& cfg, Rng& noise_rng,
                                const std::vector<std::vector<double>>& w,
                                const std::vector<double>& m) {
  const int64_t b = ids.rows;
  const int64_t l = ids.cols;
  const int64_t off = bos_prefixed ? 1 : 0;
  std::vector<IdMat> variants(cfg.k(), ids);
  for (int64_t r = 0; r < b; ++r) {
    std::vector<int32_t> span(ids.v.begin() + r * l + off,
                              ids.v.begin() + r * l + off + lens[static_cast<size_t>(r)]);
    for (size_t i = 0; i < cfg.k(); ++i) {
      const auto noised =
          apply_noise(cfg.ops[i], span, cfg.gamma, noise_rng, vocab, DropMode::blank);
      std::copy(noised.begin(), noised.end(), variants[i].v.begin() + r * l + off);
    }
  }
  std::vector<TensorT<Real>> variant_emb;
  variant_emb.reserve(cfg.k());
  for (const auto& vm : variants) variant_emb.push_back(gather_rows(table, vm));
  TensorT<Real> clean_emb = gather_rows(table, ids);
  TensorT<Real> mixed = cfg.per_sentence
                            ? detail::mix_variants_rows(variant_emb, clean_emb, w, m)
                            : detail::mix_variants(variant_emb, clean_emb, w[0], m[0]);
  EmbeddedBatchT<Real> out;
  out.values = where_rows(mask, mixed, clean_emb);
  out.mask = mask;
  return out;
}

// Full mixing pass over a batch (both sides, honoring the side selector).
// w ~ Dirichlet(alpha,...,alpha) and m ~ Beta(beta,beta) are drawn once per
// batch by default and shared between the two sides; residual=false forces
// m = 1. force_m / force_w are test hooks that bypass the draws.
template <class Real>
AdmixResultT<Real> admix_batch(const Batch& batch, const TensorT<Real>& src_table,
                               const TensorT<Real>& tgt_table, const Vocab& vocab,
                               const AdmixConfig& cfg, Rng& noise_rng, Rng& mix_rng,
                               const double* force_m = nullptr,
                               const std::vector<double>* force_w = nullptr) {
  cfg.validate();
  const size_t draws = cfg.per_sentence ? static_cast<size_t>(batch.rows()) : 1;
  AdmixResultT<Real> res;
  res.w.reserve(draws);
  res.m.reserve(draws);
  for (size_t i = 0; i < draws; ++i) {
    res.w.push_back(force_w ? *force_w : mix_rng.dirichlet(cfg.k(), cfg.alpha));
    double m = 1.0;
    if (cfg.residual) m = force_m ? *force_m : mix_rng.beta(cfg.beta);
    res.m.push_back(m);
  }

  const bool do_src = cfg.sides != Sides::target_only;
  const bool do_tgt = cfg.sides != Sides::source_only;
  if (do_src) {
    res.src = admix_side(batch.src_ids, batch.src_mask, batch.src_len, false, src_table, vocab,
                         cfg, noise_rng, res.w, res.m);
  } else {
    res.src = {gather_rows(src_table, batch.src_ids), batch.src_mask};
  }
  if (do_tgt) {
    std::vector<int32_t> lens = batch.tgt_len;
    res.tgt = admix_side(batch.tgt_in, batch.tgt_mask, lens, true, tgt_table, vocab, cfg,
                         noise_rng, res.w, res.m);
  } else {
    res.tgt = {gather_rows(tgt_table, batch.tgt_in), batch.tgt_mask};
  }
  return res;
}

// SeqMix baseline: interpolates the embeddings of two rows of the same batch
// with lambda ~ Beta(beta, beta). Embeddings are zeroed beyond each row's
// real span before mixing; the returned mask is the union of both rows'.
template <class Real>
struct SeqMixRowT {
  TensorT<Real> src;  // [1, S, d]
  TensorT<Real> tgt;  // [1, T+1, d]
  BoolMat src_mask;
  BoolMat tgt_mask;
  double lambda = 0.0;
};

template <class Real>
TensorT<Real> zero_padded_rows(const TensorT<Real>& emb, const BoolMat& mask) {
  TensorT<Real> zeros(emb.shape(), Real(0));
  return where_rows(mask, emb, zeros);
}

template <class Real>
SeqMixRowT<Real> seqmix_pair(const Batch& batch, int64_t row_a, int64_t row_b, double beta,
                             const TensorT<Real>& src_table, const TensorT<Real>& tgt_table,
                             Rng& mix_rng, const double* force_lambda = nullptr) {
  if (row_a < 0 || row_a >= batch.rows() || row_b < 0 || row_b >= batch.rows())
    throw std::invalid_argument("seqmix_pair: row index out of range");
  const double lambda = force_lambda ? *force_lambda : mix_rng.beta(beta);

  auto take_row = [](const IdMat& m, int64_t r) {
    IdMat out(1, m.cols);
    std::copy_n(m.v.begin() + r * m.cols, m.cols, out.v.begin());
    return out;
  };
  auto take_mask = [](const BoolMat& m, int64_t r) {
    BoolMat out(1, m.cols);
    std::copy_n(m.v.begin() + r * m.cols, m.cols, out.v.begin());
    return out;
  };
  auto mix_side = [&](const IdMat& ids, const BoolMat& mask, const TensorT<Real>& table,
                      BoolMat& union_mask) {
    const auto ids_a = take_row(ids, row_a);
    const auto ids_b = take_row(ids, row_b);
    const auto mask_a = take_mask(mask, row_a);
    const auto mask_b = take_mask(mask, row_b);
    auto ea = zero_padded_rows(gather_rows(table, ids_a), mask_a);
    auto eb = zero_padded_rows(gather_rows(table, ids_b), mask_b);
    union_mask = BoolMat(1, mask.cols);
    for (int64_t i = 0; i < mask.cols; ++i)
      union_mask.at(0, i) = mask_a.at(0, i) || mask_b.at(0, i);
    return add(scale(ea, lambda), scale(eb, 1.0 - lambda));
  };

  SeqMixRowT<Real> out;
  out.lambda = lambda;
  out.src = mix_side(batch.src_ids, batch.src_mask, src_table, out.src_mask);
  out.tgt = mix_side(batch.tgt_in, batch.tgt_mask, tgt_table, out.tgt_mask);
  return out;
}

// Gaussian-noise baseline: adds iid N(0, sigma^2) to every non-PAD embedding
// coordinate; PAD positions are untouched bit-for-bit.
template <class Real>
EmbeddedBatchT<Real> gaussian_perturb(const EmbeddedBatchT<Real>& emb, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_perturb: sigma must be positive");
  const auto& shape = emb.values.shape();
  std::vector<Real> noise(static_cast<size_t>(numel(shape)));
  for (auto& v : noise) v = static_cast<Real>(rng.normal(0.0, sigma));
  TensorT<Real> noise_t(shape, std::move(noise));
  EmbeddedBatchT<Real> out;
  out.values = where_rows(emb.mask, add(emb.values, noise_t), emb.values);
  out.mask = emb.mask;
  return out;
}

}  // namespace admix
