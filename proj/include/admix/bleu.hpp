#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace admix {

// Corpus-level 4-gram BLEU with multi-bleu semantics: n-gram counts are
// pooled over the corpus before taking ratios, the brevity penalty is
// exp(1 - r/h) when the hypothesis is shorter, and a zero n-gram precision
// zeroes the score (unsmoothed by default).
struct BleuReport {
  double bleu = 0.0;                         // in [0, 100]
  std::array<double, 4> precisions{};        // p1..p4
  double brevity_penalty = 1.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  std::string to_string() const;
};

using TokenSentences = std::vector<std::vector<std::string>>;

// `smooth` applies add-one smoothing to the 2..4-gram counts whose clipped
// numerator is zero (useful on tiny corpora; off matches multi-bleu).
BleuReport corpus_bleu(const TokenSentences& hypotheses, const TokenSentences& references,
                       bool smooth = false, bool lowercase = false);

// Convenience on raw lines (whitespace tokenization).
BleuReport corpus_bleu_lines(const std::vector<std::string>& hyp_lines,
                             const std::vector<std::string>& ref_lines, bool smooth = false,
                             bool lowercase = false);

}  // namespace admix
