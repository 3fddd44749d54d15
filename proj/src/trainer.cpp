#include "admix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "admix/bleu.hpp"
#include "admix/checkpoint.hpp"
#include "admix/noise.hpp"
#include "admix/objective.hpp"
#include "admix/optim.hpp"

namespace fs = std::filesystem;

namespace admix {

namespace {

// Rebuilds the batch from freshly noised copies of its pairs (token-level
// baselines modify the data itself, labels included).
Batch noised_batch(const std::vector<SentencePair>& pairs, const Batch& batch, Method method,
                   const TrainConfig& cfg, const Vocab& vocab, Rng& noise_rng) {
  std::vector<SentencePair> noised;
  noised.reserve(batch.pair_index.size());
  for (const auto idx : batch.pair_index) {
    SentencePair p = pairs[static_cast<size_t>(idx)];
    switch (method) {
      case Method::swap:
        p.src = word_swap(p.src, cfg.baseline_gamma, noise_rng);
        p.tgt = word_swap(p.tgt, cfg.baseline_gamma, noise_rng);
        break;
      case Method::worddrop:
        p.src = word_drop(p.src, cfg.baseline_gamma, noise_rng, DropMode::remove);
        p.tgt = word_drop(p.tgt, cfg.baseline_gamma, noise_rng, DropMode::remove);
        break;
      case Method::switchout:
        p.src = switchout_baseline(p.src, cfg.switchout_tau, noise_rng, vocab);
        p.tgt = switchout_baseline(p.tgt, cfg.switchout_tau, noise_rng, vocab);
        break;
      default:
        break;
    }
    noised.push_back(std::move(p));
  }
  std::vector<int64_t> order(noised.size());
  std::iota(order.begin(), order.end(), 0);
  return make_batch(noised, order);
}

IdMat permute_rows(const IdMat& m, const std::vector<int64_t>& perm) {
  IdMat out(m.rows, m.cols);
  for (int64_t r = 0; r < m.rows; ++r)
    std::copy_n(m.v.begin() + perm[static_cast<size_t>(r)] * m.cols, m.cols,
                out.v.begin() + r * m.cols);
  return out;
}

BoolMat permute_rows(const BoolMat& m, const std::vector<int64_t>& perm) {
  BoolMat out(m.rows, m.cols);
  for (int64_t r = 0; r < m.rows; ++r)
    std::copy_n(m.v.begin() + perm[static_cast<size_t>(r)] * m.cols, m.cols,
                out.v.begin() + r * m.cols);
  return out;
}

BoolMat union_mask(const BoolMat& a, const BoolMat& b) {
  BoolMat out(a.rows, a.cols);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = (a.v[i] || b.v[i]) ? 1 : 0;
  return out;
}

// SeqMix over the whole batch: each row is interpolated with a permuted
// partner row; the loss is the lambda-weighted mixture of the two CE losses.
LossReport seqmix_step(Transformer& model, const Batch& batch, double beta, Rng& mix_rng,
                       Rng& dropout_rng) {
  const int64_t b = batch.rows();
  std::vector<int64_t> perm(static_cast<size_t>(b));
  std::iota(perm.begin(), perm.end(), 0);
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<size_t>(mix_rng.uniform_int(i))]);
  const double lambda = mix_rng.beta(beta);

  auto mix_side = [&](const IdMat& ids, const BoolMat& mask, TensorT<float>& table,
                      BoolMat& out_mask) {
    const auto ids_b = permute_rows(ids, perm);
    const auto mask_b = permute_rows(mask, perm);
    auto ea = zero_padded_rows(gather_rows(table, ids), mask);
    auto eb = zero_padded_rows(gather_rows(table, ids_b), mask_b);
    out_mask = union_mask(mask, mask_b);
    return add(scale(ea, lambda), scale(eb, 1.0 - lambda));
  };

  EmbeddedBatchT<float> src, tgt;
  src.values = mix_side(batch.src_ids, batch.src_mask, model.src_table(), src.mask);
  tgt.values = mix_side(batch.tgt_in, batch.tgt_mask, model.tgt_table(), tgt.mask);

  auto logits = model.forward_embedded(src, tgt, true, &dropout_rng);
  auto ce_a = cross_entropy(logits, batch.tgt_out, batch.tgt_mask);
  auto ce_b = cross_entropy(logits, permute_rows(batch.tgt_out, perm),
                            permute_rows(batch.tgt_mask, perm));
  auto total = add(scale(ce_a, lambda), scale(ce_b, 1.0 - lambda));

  LossReport report;
  report.ce = static_cast<double>(total.item());
  report.total = report.ce;
  report.token_count = batch.token_count();
  total.backward();
  return report;
}

LossReport gaussian_step(Transformer& model, const Batch& batch, double sigma, Rng& mix_rng,
                         Rng& dropout_rng) {
  EmbeddedBatchT<float> src{model.embed_src(batch.src_ids), batch.src_mask};
  EmbeddedBatchT<float> tgt{model.embed_tgt(batch.tgt_in), batch.tgt_mask};
  src = gaussian_perturb(src, sigma, mix_rng);
  tgt = gaussian_perturb(tgt, sigma, mix_rng);
  auto logits = model.forward_embedded(src, tgt, true, &dropout_rng);
  auto total = cross_entropy(logits, batch.tgt_out, batch.tgt_mask);
  LossReport report;
  report.ce = static_cast<double>(total.item());
  report.total = report.ce;
  report.token_count = batch.token_count();
  total.backward();
  return report;
}

LossReport ce_step(Transformer& model, const Batch& batch, Rng& dropout_rng) {
  auto logits = model.forward_ids(batch, true, &dropout_rng);
  auto total = cross_entropy(logits, batch.tgt_out, batch.tgt_mask);
  LossReport report;
  report.ce = static_cast<double>(total.item());
  report.total = report.ce;
  report.token_count = batch.token_count();
  total.backward();
  return report;
}

}  // namespace

double validation_bleu(Transformer& model, const std::vector<SentencePair>& pairs,
                       const Vocab& vocab) {
  std::vector<std::vector<int32_t>> srcs;
  srcs.reserve(pairs.size());
  int64_t max_tgt = 1;
  for (const auto& p : pairs) {
    srcs.push_back(p.src);
    max_tgt = std::max(max_tgt, static_cast<int64_t>(p.tgt.size()));
  }
  const int64_t decode_len = std::min(model.config().max_len, max_tgt * 2 + 5);
  const auto hyps = model.greedy_decode(srcs, decode_len);
  TokenSentences hyp_tok, ref_tok;
  hyp_tok.reserve(hyps.size());
  ref_tok.reserve(pairs.size());
  for (const auto& h : hyps) {
    std::vector<std::string> toks;
    for (const auto id : h) toks.push_back(vocab.token(id));
    hyp_tok.push_back(std::move(toks));
  }
  for (const auto& p : pairs) {
    std::vector<std::string> toks;
    for (const auto id : p.tgt) toks.push_back(vocab.token(id));
    ref_tok.push_back(std::move(toks));
  }
  return corpus_bleu(hyp_tok, ref_tok).bleu;
}

TrainResult train(const TrainConfig& cfg_in, const TrainPaths& paths) {
  TrainConfig cfg = cfg_in;
  cfg.validate();

  const Vocab vocab = Vocab::load(paths.vocab_path);
  cfg.model.vocab_size = vocab.size();
  cfg.model.validate();

  const auto train_pairs = load_parallel_corpus(paths.train_prefix, vocab);
  const auto valid_pairs = load_parallel_corpus(paths.valid_prefix, vocab);

  fs::create_directories(paths.out_dir);
  TrainResult result;
  result.log_path = (fs::path(paths.out_dir) / "train.log").string();
  result.best_ckpt = (fs::path(paths.out_dir) / "best.ckpt").string();
  result.final_ckpt = (fs::path(paths.out_dir) / "final.ckpt").string();
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write " + result.log_path);

  Rng master(cfg.seed);
  Rng init_rng = master.stream("init");
  Rng noise_rng = master.stream("noise");
  Rng mix_rng = master.stream("mixing");
  Rng dropout_rng = master.stream("dropout");

  Transformer model(cfg.model, init_rng);
  AdamT<float> adam(cfg.optimizer.lr_base, cfg.optimizer.warmup_steps, cfg.optimizer.beta1,
                    cfg.optimizer.beta2, cfg.optimizer.eps);

  int64_t step = 0;
  int64_t bad_validations = 0;
  bool stop = false;
  char line[256];

  for (int64_t epoch = 0; !stop && step < cfg.max_steps; ++epoch) {
    Rng batch_rng = master.stream("batching:" + std::to_string(epoch));
    auto batches = make_batches(train_pairs, cfg.batch_tokens, batch_rng);
    for (const auto& batch : batches) {
      if (stop || step >= cfg.max_steps) break;
      ++step;

      LossReport report;
      switch (cfg.method) {
        case Method::baseline:
          report = ce_step(model, batch, dropout_rng);
          break;
        case Method::admix:
          report = admix_loss(model, batch, vocab, cfg.admix, noise_rng, mix_rng, dropout_rng);
          break;
        case Method::swap:
        case Method::worddrop:
        case Method::switchout: {
          const Batch nb = noised_batch(train_pairs, batch, cfg.method, cfg, vocab, noise_rng);
          report = ce_step(model, nb, dropout_rng);
          break;
        }
        case Method::seqmix:
          report = seqmix_step(model, batch, cfg.admix.beta, mix_rng, dropout_rng);
          break;
        case Method::gaussian:
          report = gaussian_step(model, batch, cfg.gaussian_sigma, mix_rng, dropout_rng);
          break;
      }

      if (!std::isfinite(report.total)) {
        std::cerr << "train: non-finite loss at step " << step
                  << "; aborting with last good checkpoint retained\n";
        result.nan_abort = true;
        result.steps = step;
        return result;
      }

      if (cfg.clip_norm > 0) AdamT<float>::clip_grad_norm(model.params(), cfg.clip_norm);
      adam.step(model.params());

      const double lr = adam.lr(step);
      const bool validate = step % cfg.val_interval == 0 || step == cfg.max_steps;
      if (validate) {
        const double bleu = validation_bleu(model, valid_pairs, vocab);
        if (bleu > result.best_val_bleu) {
          result.best_val_bleu = bleu;
          result.best_step = step;
          bad_validations = 0;
          save_checkpoint(result.best_ckpt, model, vocab.hash());
        } else {
          ++bad_validations;
          if (cfg.patience > 0 && bad_validations >= cfg.patience) stop = true;
        }
        std::snprintf(line, sizeof(line),
                      "step=%lld ce=%.6f js=%.6f total=%.6f lr=%.8f val_bleu=%.2f",
                      static_cast<long long>(step), report.ce, report.js, report.total, lr, bleu);
      } else {
        std::snprintf(line, sizeof(line), "step=%lld ce=%.6f js=%.6f total=%.6f lr=%.8f",
                      static_cast<long long>(step), report.ce, report.js, report.total, lr);
      }
      log << line << '\n';
    }
  }
  log.flush();

  save_checkpoint(result.final_ckpt, model, vocab.hash());
  if (result.best_val_bleu < 0) {
    // no validation ever ran (max_steps < val_interval); keep final as best
    save_checkpoint(result.best_ckpt, model, vocab.hash());
  }
  result.steps = step;
  return result;
}

std::vector<SweepRow> sweep(const TrainConfig& base, const TrainPaths& paths,
                            const std::string& axis, const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: values must be nonempty");
  if (axis != "lambda" && axis != "gamma")
    throw std::invalid_argument("sweep: axis must be lambda or gamma, got '" + axis + "'");
  std::vector<SweepRow> rows;
  for (const auto v : values) {
    TrainConfig cfg = base;
    if (axis == "lambda")
      cfg.admix.lambda = v;
    else
      cfg.admix.gamma = v;
    TrainPaths run_paths = paths;
    char sub[64];
    std::snprintf(sub, sizeof(sub), "%s_%g", axis.c_str(), v);
    run_paths.out_dir = (fs::path(paths.out_dir) / sub).string();
    const auto res = train(cfg, run_paths);
    rows.push_back({v, res.best_val_bleu});
  }
  return rows;
}

}  // namespace admix
