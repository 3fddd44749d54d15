#include "admix/bleu.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_map>

#include "admix/vocab.hpp"

namespace admix {

namespace {

constexpr int kMaxOrder = 4;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// n-grams keyed by their joined tokens; '\x1f' cannot appear inside a token
// produced by whitespace splitting.
void count_ngrams(const std::vector<std::string>& sent, int n,
                  std::unordered_map<std::string, int64_t>& out) {
  if (static_cast<int>(sent.size()) < n) return;
  for (size_t i = 0; i + static_cast<size_t>(n) <= sent.size(); ++i) {
    std::string key = sent[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += sent[i + static_cast<size_t>(j)];
    }
    ++out[key];
  }
}

}  // namespace

BleuReport corpus_bleu(const TokenSentences& hypotheses, const TokenSentences& references,
                       bool smooth, bool lowercase) {
  if (hypotheses.size() != references.size())
    throw std::runtime_error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                             std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw std::runtime_error("bleu: empty corpus");

  std::array<int64_t, kMaxOrder> clipped{};
  std::array<int64_t, kMaxOrder> total{};
  int64_t hyp_len = 0, ref_len = 0;

  for (size_t s = 0; s < hypotheses.size(); ++s) {
    std::vector<std::string> hyp = hypotheses[s];
    std::vector<std::string> ref = references[s];
    if (lowercase) {
      for (auto& t : hyp) t = lower(t);
      for (auto& t : ref) t = lower(t);
    }
    hyp_len += static_cast<int64_t>(hyp.size());
    ref_len += static_cast<int64_t>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      std::unordered_map<std::string, int64_t> hyp_counts, ref_counts;
      count_ngrams(hyp, n, hyp_counts);
      count_ngrams(ref, n, ref_counts);
      for (const auto& [gram, c] : hyp_counts) {
        total[static_cast<size_t>(n - 1)] += c;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          clipped[static_cast<size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }

  BleuReport rep;
  rep.hyp_len = hyp_len;
  rep.ref_len = ref_len;
  double log_prec_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < kMaxOrder; ++n) {
    int64_t num = clipped[static_cast<size_t>(n)];
    int64_t den = total[static_cast<size_t>(n)];
    if (smooth && n > 0 && num == 0) {
      num += 1;
      den += 1;
    }
    const double p = den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
    rep.precisions[static_cast<size_t>(n)] = p;
    if (p <= 0.0)
      zero = true;
    else
      log_prec_sum += std::log(p);
  }
  rep.brevity_penalty =
      (hyp_len < ref_len && hyp_len > 0)
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
          : (hyp_len == 0 ? 0.0 : 1.0);
  rep.bleu = (zero || hyp_len == 0)
                 ? 0.0
                 : rep.brevity_penalty * std::exp(log_prec_sum / kMaxOrder) * 100.0;
  return rep;
}

BleuReport corpus_bleu_lines(const std::vector<std::string>& hyp_lines,
                             const std::vector<std::string>& ref_lines, bool smooth,
                             bool lowercase) {
  TokenSentences hyp, ref;
  hyp.reserve(hyp_lines.size());
  ref.reserve(ref_lines.size());
  for (const auto& l : hyp_lines) hyp.push_back(split_ws(l));
  for (const auto& l : ref_lines) ref.push_back(split_ws(l));
  return corpus_bleu(hyp, ref, smooth, lowercase);
}

std::string BleuReport::to_string() const {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, ratio=%.3f, hyp_len=%lld, ref_len=%lld)",
                bleu, precisions[0] * 100.0, precisions[1] * 100.0, precisions[2] * 100.0,
                precisions[3] * 100.0, brevity_penalty,
                ref_len > 0 ? static_cast<double>(hyp_len) / static_cast<double>(ref_len) : 0.0,
                static_cast<long long>(hyp_len), static_cast<long long>(ref_len));
  return buf;
}

}  // namespace admix
