#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "admix/corpus.hpp"
#include "admix/mixing.hpp"
#include "admix/rng.hpp"
#include "admix/tensor.hpp"
#include "admix/vocab.hpp"

namespace admix {

struct ModelConfig {
  int64_t vocab_size = 0;  // joint vocabulary size V
  int64_t d_model = 64;
  int64_t d_ff = 128;
  int64_t n_layers = 2;
  int64_t n_heads = 2;
  double dropout = 0.1;
  int64_t max_len = 256;
  bool shared_embeddings = false;  // single table for both sides
  bool tie_output = true;          // output projection = target table

  void validate() const {
    if (vocab_size <= Vocab::kNumSpecial)
      throw std::invalid_argument("model: vocab_size must exceed the special tokens");
    if (d_model <= 0 || d_ff <= 0 || n_layers <= 0 || n_heads <= 0)
      throw std::invalid_argument("model: dimensions must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("model: d_model " + std::to_string(d_model) +
                                  " not divisible by n_heads " + std::to_string(n_heads));
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw std::invalid_argument("model: dropout must be in [0, 1)");
    if (max_len <= 0) throw std::invalid_argument("model: max_len must be positive");
  }
};

// Pre-norm encoder-decoder transformer with sinusoidal positions. Two entry
// points per side: token ids (clean path) and pre-built embedding sequences
// (mixed path). The embedding scale sqrt(d_model) and positions are applied
// inside the forward pass, after any mixing.
template <class Real>
class TransformerT {
 public:
  using Tensor = TensorT<Real>;

  struct Attention {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct EncoderLayer {
    Tensor ln1_g, ln1_b;
    Attention self_attn;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
  };
  struct DecoderLayer {
    Tensor ln1_g, ln1_b;
    Attention self_attn;
    Tensor ln2_g, ln2_b;
    Attention cross_attn;
    Tensor ln3_g, ln3_b;
    Tensor w1, b1, w2, b2;
  };

  TransformerT(ModelConfig cfg, Rng init_rng) : cfg_(cfg) {
    cfg_.validate();
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    src_table_ = parameter<Real>({cfg_.vocab_size, cfg_.d_model}, init_rng, emb_std, "src_embed");
    tgt_table_ = cfg_.shared_embeddings
                     ? src_table_
                     : parameter<Real>({cfg_.vocab_size, cfg_.d_model}, init_rng, emb_std,
                                       "tgt_embed");
    for (int64_t i = 0; i < cfg_.n_layers; ++i) encoder_.push_back(make_encoder_layer(init_rng, i));
    for (int64_t i = 0; i < cfg_.n_layers; ++i) decoder_.push_back(make_decoder_layer(init_rng, i));
    enc_ln_g_ = ones({cfg_.d_model}, "enc_ln.g");
    enc_ln_b_ = zeros({cfg_.d_model}, "enc_ln.b");
    dec_ln_g_ = ones({cfg_.d_model}, "dec_ln.g");
    dec_ln_b_ = zeros({cfg_.d_model}, "dec_ln.b");
    if (!cfg_.tie_output)
      out_proj_ = parameter<Real>({cfg_.vocab_size, cfg_.d_model}, init_rng, emb_std, "out_proj");
    out_bias_ = zeros({cfg_.vocab_size}, "out_bias");
    build_positional();
    collect_params();
  }

  const ModelConfig& config() const { return cfg_; }
  Tensor& src_table() { return src_table_; }
  Tensor& tgt_table() { return tgt_table_; }
  const Tensor& src_table() const { return src_table_; }
  const Tensor& tgt_table() const { return tgt_table_; }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  // Raw word-embedding lookup (no scale, no positions) — the representation
  // the mixing stage operates on.
  Tensor embed_src(const IdMat& ids) const { return gather_rows(src_table_, ids); }
  Tensor embed_tgt(const IdMat& ids) const { return gather_rows(tgt_table_, ids); }

  // Clean path: ids -> logits [B, T+1, V].
  Tensor forward_ids(const Batch& batch, bool train, Rng* dropout_rng = nullptr) {
    EmbeddedBatchT<Real> src{embed_src(batch.src_ids), batch.src_mask};
    EmbeddedBatchT<Real> tgt{embed_tgt(batch.tgt_in), batch.tgt_mask};
    return forward_embedded(src, tgt, train, dropout_rng);
  }

  // Mixed path: identical computation after the embedding lookup.
  Tensor forward_embedded(const EmbeddedBatchT<Real>& src, const EmbeddedBatchT<Real>& tgt,
                          bool train, Rng* dropout_rng = nullptr) {
    check_embedded(src, "source");
    check_embedded(tgt, "target");
    const Tensor memory = encode(src, train, dropout_rng);
    return decode(memory, src.mask, tgt, train, dropout_rng);
  }

  Tensor encode(const EmbeddedBatchT<Real>& src, bool train, Rng* dropout_rng) {
    const int64_t b = src.mask.rows, s = src.mask.cols;
    Tensor x = input_stage(src.values, train, dropout_rng);
    const Tensor bias = attn_bias(src.mask, b, s, false, nullptr);
    for (auto& layer : encoder_) {
      Tensor h = layer_norm(x, layer.ln1_g, layer.ln1_b);
      x = add(x, dropout(attention(layer.self_attn, h, h, bias), train, dropout_rng));
      h = layer_norm(x, layer.ln2_g, layer.ln2_b);
      x = add(x, dropout(feed_forward(layer.w1, layer.b1, layer.w2, layer.b2, h), train,
                         dropout_rng));
    }
    return layer_norm(x, enc_ln_g_, enc_ln_b_);
  }

  Tensor decode(const Tensor& memory, const BoolMat& src_mask, const EmbeddedBatchT<Real>& tgt,
                bool train, Rng* dropout_rng) {
    const int64_t b = tgt.mask.rows, t = tgt.mask.cols;
    Tensor y = input_stage(tgt.values, train, dropout_rng);
    const Tensor self_bias = attn_bias(tgt.mask, b, t, true, nullptr);
    const Tensor cross_bias = attn_bias(src_mask, b, t, false, &src_mask);
    for (auto& layer : decoder_) {
      Tensor h = layer_norm(y, layer.ln1_g, layer.ln1_b);
      y = add(y, dropout(attention(layer.self_attn, h, h, self_bias), train, dropout_rng));
      h = layer_norm(y, layer.ln2_g, layer.ln2_b);
      y = add(y, dropout(attention(layer.cross_attn, h, memory, cross_bias), train, dropout_rng));
      h = layer_norm(y, layer.ln3_g, layer.ln3_b);
      y = add(y, dropout(feed_forward(layer.w1, layer.b1, layer.w2, layer.b2, h), train,
                         dropout_rng));
    }
    y = layer_norm(y, dec_ln_g_, dec_ln_b_);
    const Tensor w = cfg_.tie_output ? tgt_table_ : out_proj_;
    return add(matmul(y, transpose(w, 0, 1)), out_bias_);
  }

  // BOS-seeded argmax decoding until EOS or max_len, batched over sentences.
  std::vector<std::vector<int32_t>> greedy_decode(
      const std::vector<std::vector<int32_t>>& src_seqs, int64_t max_len) {
    NoGradGuard ng;
    if (src_seqs.empty()) return {};
    const int64_t n = static_cast<int64_t>(src_seqs.size());
    int64_t s_max = 1;
    for (const auto& s : src_seqs) s_max = std::max(s_max, static_cast<int64_t>(s.size()));
    IdMat src_ids(n, s_max, Vocab::kPad);
    BoolMat src_mask(n, s_max, false);
    for (int64_t r = 0; r < n; ++r) {
      for (size_t i = 0; i < src_seqs[static_cast<size_t>(r)].size(); ++i) {
        src_ids.at(r, static_cast<int64_t>(i)) = src_seqs[static_cast<size_t>(r)][i];
        src_mask.at(r, static_cast<int64_t>(i)) = 1;
      }
    }
    EmbeddedBatchT<Real> src{embed_src(src_ids), src_mask};
    const Tensor memory = encode(src, false, nullptr);

    std::vector<std::vector<int32_t>> hyps(static_cast<size_t>(n));
    std::vector<uint8_t> done(static_cast<size_t>(n), 0);
    std::vector<std::vector<int32_t>> prefixes(static_cast<size_t>(n), {Vocab::kBos});
    for (int64_t step = 0; step < max_len; ++step) {
      const int64_t t = step + 1;
      IdMat tgt_in(n, t, Vocab::kPad);
      BoolMat tgt_mask(n, t, true);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t i = 0; i < t; ++i) tgt_in.at(r, i) = prefixes[static_cast<size_t>(r)][static_cast<size_t>(i)];
      EmbeddedBatchT<Real> tgt{embed_tgt(tgt_in), tgt_mask};
      const Tensor logits = decode(memory, src_mask, tgt, false, nullptr);
      const int64_t v = cfg_.vocab_size;
      bool all_done = true;
      for (int64_t r = 0; r < n; ++r) {
        if (done[static_cast<size_t>(r)]) {
          prefixes[static_cast<size_t>(r)].push_back(Vocab::kPad);
          continue;
        }
        const Real* row = logits.data().data() + (r * t + (t - 1)) * v;
        int32_t best = 0;
        for (int64_t c = 1; c < v; ++c)
          if (row[c] > row[best]) best = static_cast<int32_t>(c);
        if (best == Vocab::kEos) {
          done[static_cast<size_t>(r)] = 1;
        } else {
          hyps[static_cast<size_t>(r)].push_back(best);
          all_done = false;
        }
        prefixes[static_cast<size_t>(r)].push_back(best);
      }
      if (all_done) break;
    }
    return hyps;
  }

 private:
  static Tensor zeros(Shape s, std::string name) {
    Tensor t(std::move(s), Real(0));
    t.set_requires_grad(true);
    t.set_name(std::move(name));
    return t;
  }
  static Tensor ones(Shape s, std::string name) {
    Tensor t(std::move(s), Real(1));
    t.set_requires_grad(true);
    t.set_name(std::move(name));
    return t;
  }

  Attention make_attention(Rng& rng, const std::string& prefix) {
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    Attention a;
    a.wq = parameter<Real>({cfg_.d_model, cfg_.d_model}, rng, std, prefix + ".wq");
    a.bq = zeros({cfg_.d_model}, prefix + ".bq");
    a.wk = parameter<Real>({cfg_.d_model, cfg_.d_model}, rng, std, prefix + ".wk");
    a.bk = zeros({cfg_.d_model}, prefix + ".bk");
    a.wv = parameter<Real>({cfg_.d_model, cfg_.d_model}, rng, std, prefix + ".wv");
    a.bv = zeros({cfg_.d_model}, prefix + ".bv");
    a.wo = parameter<Real>({cfg_.d_model, cfg_.d_model}, rng, std, prefix + ".wo");
    a.bo = zeros({cfg_.d_model}, prefix + ".bo");
    return a;
  }

  EncoderLayer make_encoder_layer(Rng& rng, int64_t i) {
    const std::string p = "enc." + std::to_string(i);
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    EncoderLayer l;
    l.ln1_g = ones({cfg_.d_model}, p + ".ln1.g");
    l.ln1_b = zeros({cfg_.d_model}, p + ".ln1.b");
    l.self_attn = make_attention(rng, p + ".self");
    l.ln2_g = ones({cfg_.d_model}, p + ".ln2.g");
    l.ln2_b = zeros({cfg_.d_model}, p + ".ln2.b");
    l.w1 = parameter<Real>({cfg_.d_model, cfg_.d_ff}, rng, std, p + ".ff.w1");
    l.b1 = zeros({cfg_.d_ff}, p + ".ff.b1");
    l.w2 = parameter<Real>({cfg_.d_ff, cfg_.d_model}, rng,
                           1.0 / std::sqrt(static_cast<double>(cfg_.d_ff)), p + ".ff.w2");
    l.b2 = zeros({cfg_.d_model}, p + ".ff.b2");
    return l;
  }

  DecoderLayer make_decoder_layer(Rng& rng, int64_t i) {
    const std::string p = "dec." + std::to_string(i);
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    DecoderLayer l;
    l.ln1_g = ones({cfg_.d_model}, p + ".ln1.g");
    l.ln1_b = zeros({cfg_.d_model}, p + ".ln1.b");
    l.self_attn = make_attention(rng, p + ".self");
    l.ln2_g = ones({cfg_.d_model}, p + ".ln2.g");
    l.ln2_b = zeros({cfg_.d_model}, p + ".ln2.b");
    l.cross_attn = make_attention(rng, p + ".cross");
    l.ln3_g = ones({cfg_.d_model}, p + ".ln3.g");
    l.ln3_b = zeros({cfg_.d_model}, p + ".ln3.b");
    l.w1 = parameter<Real>({cfg_.d_model, cfg_.d_ff}, rng, std, p + ".ff.w1");
    l.b1 = zeros({cfg_.d_ff}, p + ".ff.b1");
    l.w2 = parameter<Real>({cfg_.d_ff, cfg_.d_model}, rng,
                           1.0 / std::sqrt(static_cast<double>(cfg_.d_ff)), p + ".ff.w2");
    l.b2 = zeros({cfg_.d_model}, p + ".ff.b2");
    return l;
  }

  void build_positional() {
    pos_enc_.assign(static_cast<size_t>(cfg_.max_len * cfg_.d_model), Real(0));
    for (int64_t pos = 0; pos < cfg_.max_len; ++pos) {
      for (int64_t i = 0; i < cfg_.d_model; i += 2) {
        const double angle =
            static_cast<double>(pos) /
            std::pow(10000.0, static_cast<double>(i) / static_cast<double>(cfg_.d_model));
        pos_enc_[static_cast<size_t>(pos * cfg_.d_model + i)] = static_cast<Real>(std::sin(angle));
        if (i + 1 < cfg_.d_model)
          pos_enc_[static_cast<size_t>(pos * cfg_.d_model + i + 1)] =
              static_cast<Real>(std::cos(angle));
      }
    }
  }

  void collect_params() {
    params_.clear();
    std::unordered_set<const void*> seen;
    auto push = [&](const Tensor& t) {
      if (seen.insert(t.node().get()).second) params_.push_back(t);
    };
    push(src_table_);
    push(tgt_table_);
    auto push_attn = [&](const Attention& a) {
      push(a.wq), push(a.bq), push(a.wk), push(a.bk);
      push(a.wv), push(a.bv), push(a.wo), push(a.bo);
    };
    for (auto& l : encoder_) {
      push(l.ln1_g), push(l.ln1_b);
      push_attn(l.self_attn);
      push(l.ln2_g), push(l.ln2_b);
      push(l.w1), push(l.b1), push(l.w2), push(l.b2);
    }
    for (auto& l : decoder_) {
      push(l.ln1_g), push(l.ln1_b);
      push_attn(l.self_attn);
      push(l.ln2_g), push(l.ln2_b);
      push_attn(l.cross_attn);
      push(l.ln3_g), push(l.ln3_b);
      push(l.w1), push(l.b1), push(l.w2), push(l.b2);
    }
    push(enc_ln_g_), push(enc_ln_b_), push(dec_ln_g_), push(dec_ln_b_);
    if (!cfg_.tie_output) push(out_proj_);
    push(out_bias_);
  }

  void check_embedded(const EmbeddedBatchT<Real>& e, const char* side) const {
    const auto& s = e.values.shape();
    if (s.size() != 3 || s[2] != cfg_.d_model)
      throw std::runtime_error(std::string("forward: ") + side + " embeddings " + shape_str(s) +
                               " do not match d_model " + std::to_string(cfg_.d_model));
    if (s[0] != e.mask.rows || s[1] != e.mask.cols)
      throw std::runtime_error(std::string("forward: ") + side + " mask does not match values");
    if (s[1] > cfg_.max_len)
      throw std::runtime_error(std::string("forward: ") + side + " length " +
                               std::to_string(s[1]) + " exceeds max_len " +
                               std::to_string(cfg_.max_len));
  }

  // Embedding scale, positional encoding, input dropout.
  Tensor input_stage(const Tensor& emb, bool train, Rng* dropout_rng) {
    const int64_t b = emb.shape()[0], l = emb.shape()[1], d = emb.shape()[2];
    Tensor x = scale(emb, std::sqrt(static_cast<double>(cfg_.d_model)));
    std::vector<Real> pe(static_cast<size_t>(b * l * d));
    for (int64_t r = 0; r < b; ++r)
      std::copy_n(pos_enc_.data(), l * d, pe.data() + r * l * d);
    x = add(x, Tensor({b, l, d}, std::move(pe)));
    return dropout(x, train, dropout_rng);
  }

  Tensor dropout(const Tensor& x, bool train, Rng* rng) {
    if (!train || cfg_.dropout <= 0.0) return x;
    if (!rng) throw std::runtime_error("forward: train mode requires a dropout rng");
    const Real keep_scale = static_cast<Real>(1.0 / (1.0 - cfg_.dropout));
    std::vector<Real> mask(x.data().size());
    for (auto& v : mask) v = rng->bernoulli(cfg_.dropout) ? Real(0) : keep_scale;
    return mul(x, Tensor(x.shape(), std::move(mask)));
  }

  // Additive attention bias: 0 on allowed pairs, -1e9 on blocked ones.
  // key_mask == nullptr means keys use `mask` itself (self-attention).
  Tensor attn_bias(const BoolMat& mask, int64_t b, int64_t lq, bool causal,
                   const BoolMat* key_mask) {
    const BoolMat& keys = key_mask ? *key_mask : mask;
    const int64_t lk = keys.cols;
    const int64_t h = cfg_.n_heads;
    std::vector<Real> bias(static_cast<size_t>(b * h * lq * lk), Real(0));
    constexpr Real kBlock = Real(-1e9);
    for (int64_t r = 0; r < b; ++r) {
      for (int64_t q = 0; q < lq; ++q) {
        for (int64_t k = 0; k < lk; ++k) {
          const bool blocked = !keys.at(r, k) || (causal && k > q);
          if (!blocked) continue;
          for (int64_t head = 0; head < h; ++head)
            bias[static_cast<size_t>(((r * h + head) * lq + q) * lk + k)] = kBlock;
        }
      }
    }
    return Tensor({b, h, lq, lk}, std::move(bias));
  }

  Tensor split_heads(const Tensor& x) {
    const int64_t b = x.shape()[0], l = x.shape()[1];
    const int64_t dh = cfg_.d_model / cfg_.n_heads;
    return transpose(reshape(x, {b, l, cfg_.n_heads, dh}), 1, 2);  // [B, H, L, dh]
  }

  Tensor merge_heads(const Tensor& x) {
    const int64_t b = x.shape()[0], l = x.shape()[2];
    return reshape(transpose(x, 1, 2), {b, l, cfg_.d_model});
  }

  Tensor attention(const Attention& a, const Tensor& x_q, const Tensor& x_kv,
                   const Tensor& bias) {
    const int64_t dh = cfg_.d_model / cfg_.n_heads;
    Tensor q = split_heads(add(matmul(x_q, a.wq), a.bq));
    Tensor k = split_heads(add(matmul(x_kv, a.wk), a.bk));
    Tensor v = split_heads(add(matmul(x_kv, a.wv), a.bv));
    Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax(add(scores, bias));
    Tensor ctx = merge_heads(matmul(attn, v));
    return add(matmul(ctx, a.wo), a.bo);
  }

  Tensor feed_forward(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                      const Tensor& x) {
    return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2);
  }

  ModelConfig cfg_;
  Tensor src_table_, tgt_table_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Tensor enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
  Tensor out_proj_, out_bias_;
  std::vector<Real> pos_enc_;
  std::vector<Tensor> params_;
};

using Transformer = TransformerT<float>;

}  // namespace admix
