#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "admix/bleu.hpp"
#include "admix/corpus.hpp"
#include "admix/rng.hpp"
#include "admix/transformer.hpp"
#include "admix/vocab.hpp"

namespace admix {

struct NoisySubstitution {
  int64_t sentence = 0;
  int32_t position = 0;
  int32_t old_id = 0;
  int32_t new_id = 0;
};

// A noisy copy of a validation set: per sentence, num_ops distinct source
// positions replaced by the embedding-nearest alternative token.
struct NoisySet {
  std::vector<SentencePair> pairs;
  int num_ops = 0;
  std::vector<NoisySubstitution> trace;
};

// Nearest content token by cosine similarity over the rows of a [V, d]
// embedding table, never the query itself. Ties break toward the lowest id.
int32_t nearest_by_cosine(const std::vector<float>& table, int64_t vocab_size, int64_t d_model,
                          int32_t query_id);

// Applies num_ops substitutions per sentence (sampled without replacement;
// shorter sentences receive one per available position). num_ops = 0 returns
// the clean set unchanged.
NoisySet make_noisy_set(const std::vector<SentencePair>& base, const std::vector<float>& src_table,
                        int64_t vocab_size, int64_t d_model, int num_ops, Rng& rng);

struct RobustnessCell {
  std::string model;
  int num_ops = 0;
  double bleu = 0.0;
};

// BLEU of each model on shared noisy sets at each severity level. The noisy
// sets are built once from `embed_table` (by convention the first /
// baseline checkpoint) so every model faces identical substitutions.
std::vector<RobustnessCell> robustness_sweep(
    const std::vector<std::pair<std::string, Transformer*>>& models,
    const std::vector<SentencePair>& base, const std::vector<float>& embed_table,
    int64_t vocab_size, int64_t d_model, const std::vector<int>& ops, const Vocab& vocab,
    uint64_t noise_seed);

// Aligned text table (rows = models, columns = Op-N).
std::string robustness_table(const std::vector<RobustnessCell>& cells);

}  // namespace admix
