#pragma once

#include <string>
#include <vector>

#include "admix/config.hpp"
#include "admix/corpus.hpp"
#include "admix/vocab.hpp"

namespace admix {

struct TrainPaths {
  std::string train_prefix;
  std::string valid_prefix;
  std::string vocab_path;
  std::string out_dir;
};

struct TrainResult {
  double best_val_bleu = -1.0;
  int64_t best_step = 0;
  int64_t steps = 0;
  bool nan_abort = false;
  std::string best_ckpt;
  std::string final_ckpt;
  std::string log_path;
};

// Deterministic training loop: corpus -> augmentation -> transformer ->
// objective -> Adam, with per-step logging, periodic validation BLEU via
// greedy decoding, best/final checkpoints, and early stopping. Identical
// config + seed reproduce the log byte for byte.
TrainResult train(const TrainConfig& cfg, const TrainPaths& paths);

struct SweepRow {
  double value = 0.0;
  double val_bleu = 0.0;
};

// Trains one model per value of the chosen axis ("lambda" or "gamma"),
// sharing the seed, and reports the best validation BLEU per value.
std::vector<SweepRow> sweep(const TrainConfig& base, const TrainPaths& paths,
                            const std::string& axis, const std::vector<double>& values);

// Greedy-decodes every source and scores against the references.
double validation_bleu(Transformer& model, const std::vector<SentencePair>& pairs,
                       const Vocab& vocab);

}  // namespace admix
