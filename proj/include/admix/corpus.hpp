#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "admix/rng.hpp"
#include "admix/tensor.hpp"
#include "admix/vocab.hpp"

namespace admix {

// One parallel example as raw token ids (no BOS/EOS/PAD).
struct SentencePair {
  std::vector<int32_t> src;
  std::vector<int32_t> tgt;
  int64_t line = 0;  // 1-based line number in the source files
};

// Padded training batch. Decoder input is BOS-prefixed and decoder labels are
// EOS-suffixed, both [B, T_max+1]; tgt_in[t] predicts tgt_out[t]. Masks mark
// exactly the non-PAD positions.
struct Batch {
  IdMat src_ids;   // [B, S_max]
  IdMat tgt_in;    // [B, T_max+1]
  IdMat tgt_out;   // [B, T_max+1]
  BoolMat src_mask;
  BoolMat tgt_mask;
  std::vector<int32_t> src_len;  // real token counts per row
  std::vector<int32_t> tgt_len;
  std::vector<int64_t> pair_index;  // position in the epoch's pair list

  int64_t rows() const { return src_ids.rows; }
  int64_t token_count() const { return tgt_mask.count_true(); }
};

// Loads <prefix>.src / <prefix>.tgt (line-aligned UTF-8, one sentence per
// line). Pairs with an empty side are skipped.
std::vector<SentencePair> load_parallel_corpus(const std::string& prefix, const Vocab& vocab);

// Builds a padded batch from the given pairs (order preserved).
Batch make_batch(const std::vector<SentencePair>& pairs, const std::vector<int64_t>& indices);

// Length-bucketed batching under a padded-target token budget: within each
// batch B * (T_max+1) <= max_tokens. Batch order is shuffled; contents are
// deterministic under the rng seed. Every pair lands in exactly one batch.
std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, int64_t max_tokens,
                                Rng& rng);

}  // namespace admix
