#include "admix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace admix {

int32_t nearest_by_cosine(const std::vector<float>& table, int64_t vocab_size, int64_t d_model,
                          int32_t query_id) {
  if (vocab_size - Vocab::kNumSpecial < 2)
    throw std::invalid_argument("nearest_by_cosine: need at least two content tokens");
  if (static_cast<int64_t>(table.size()) != vocab_size * d_model)
    throw std::invalid_argument("nearest_by_cosine: table size does not match [V, d]");
  const float* q = table.data() + static_cast<int64_t>(query_id) * d_model;
  double qn = 0.0;
  for (int64_t j = 0; j < d_model; ++j) qn += static_cast<double>(q[j]) * q[j];
  qn = std::sqrt(qn);
  int32_t best = -1;
  double best_sim = -2.0;
  for (int32_t id = Vocab::kNumSpecial; id < vocab_size; ++id) {
    if (id == query_id) continue;
    const float* c = table.data() + static_cast<int64_t>(id) * d_model;
    double dot = 0.0, cn = 0.0;
    for (int64_t j = 0; j < d_model; ++j) {
      dot += static_cast<double>(q[j]) * c[j];
      cn += static_cast<double>(c[j]) * c[j];
    }
    const double denom = qn * std::sqrt(cn);
    const double sim = denom > 0.0 ? dot / denom : -1.0;
    if (sim > best_sim) {
      best_sim = sim;
      best = id;
    }
  }
  return best;
}

NoisySet make_noisy_set(const std::vector<SentencePair>& base, const std::vector<float>& src_table,
                        int64_t vocab_size, int64_t d_model, int num_ops, Rng& rng) {
  if (num_ops < 0) throw std::invalid_argument("make_noisy_set: num_ops must be >= 0");
  NoisySet out;
  out.num_ops = num_ops;
  out.pairs = base;
  if (num_ops == 0) return out;
  if (vocab_size - Vocab::kNumSpecial < 2)
    throw std::invalid_argument("make_noisy_set: need at least two content tokens");

  std::unordered_map<int32_t, int32_t> nn_cache;
  for (size_t s = 0; s < out.pairs.size(); ++s) {
    auto& src = out.pairs[s].src;
    const auto l = static_cast<int32_t>(src.size());
    for (const auto pos : rng.sample_positions(l, num_ops)) {
      const int32_t old_id = src[static_cast<size_t>(pos)];
      auto it = nn_cache.find(old_id);
      if (it == nn_cache.end())
        it = nn_cache.emplace(old_id, nearest_by_cosine(src_table, vocab_size, d_model, old_id))
                 .first;
      src[static_cast<size_t>(pos)] = it->second;
      out.trace.push_back({static_cast<int64_t>(s), pos, old_id, it->second});
    }
  }
  return out;
}

std::vector<RobustnessCell> robustness_sweep(
    const std::vector<std::pair<std::string, Transformer*>>& models,
    const std::vector<SentencePair>& base, const std::vector<float>& embed_table,
    int64_t vocab_size, int64_t d_model, const std::vector<int>& ops, const Vocab& vocab,
    uint64_t noise_seed) {
  if (models.empty()) throw std::invalid_argument("robustness_sweep: no models");
  if (ops.empty()) throw std::invalid_argument("robustness_sweep: no op levels");

  // Shared noisy sets: one per severity level, identical for every model.
  std::vector<NoisySet> sets;
  sets.reserve(ops.size());
  for (const auto n : ops) {
    Rng rng = Rng(noise_seed).stream("noisy-set:" + std::to_string(n));
    sets.push_back(make_noisy_set(base, embed_table, vocab_size, d_model, n, rng));
  }

  TokenSentences refs;
  refs.reserve(base.size());
  for (const auto& p : base) {
    std::vector<std::string> toks;
    for (const auto id : p.tgt) toks.push_back(vocab.token(id));
    refs.push_back(std::move(toks));
  }

  std::vector<RobustnessCell> cells;
  for (const auto& [name, model] : models) {
    for (size_t i = 0; i < sets.size(); ++i) {
      std::vector<std::vector<int32_t>> srcs;
      srcs.reserve(sets[i].pairs.size());
      int64_t max_tgt = 1;
      for (const auto& p : sets[i].pairs) {
        srcs.push_back(p.src);
        max_tgt = std::max(max_tgt, static_cast<int64_t>(p.tgt.size()));
      }
      const int64_t decode_len = std::min(model->config().max_len, max_tgt * 2 + 5);
      const auto hyps = model->greedy_decode(srcs, decode_len);
      TokenSentences hyp_tok;
      hyp_tok.reserve(hyps.size());
      for (const auto& h : hyps) {
        std::vector<std::string> toks;
        for (const auto id : h) toks.push_back(vocab.token(id));
        hyp_tok.push_back(std::move(toks));
      }
      cells.push_back({name, ops[i], corpus_bleu(hyp_tok, refs).bleu});
    }
  }
  return cells;
}

std::string robustness_table(const std::vector<RobustnessCell>& cells) {
  std::set<int> op_levels;
  std::vector<std::string> model_order;
  std::map<std::pair<std::string, int>, double> value;
  for (const auto& c : cells) {
    op_levels.insert(c.num_ops);
    if (std::find(model_order.begin(), model_order.end(), c.model) == model_order.end())
      model_order.push_back(c.model);
    value[{c.model, c.num_ops}] = c.bleu;
  }
  size_t name_w = 6;
  for (const auto& m : model_order) name_w = std::max(name_w, m.size());

  std::ostringstream os;
  os << std::string(name_w, ' ');
  for (const auto op : op_levels) {
    char h[16];
    std::snprintf(h, sizeof(h), "  Op-%d", op);
    os << h << std::string(4, ' ');
  }
  os << '\n';
  for (const auto& m : model_order) {
    os << m << std::string(name_w - m.size(), ' ');
    for (const auto op : op_levels) {
      char b[24];
      std::snprintf(b, sizeof(b), "  %8.2f", value[{m, op}]);
      os << b;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace admix
