#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "admix/mixing.hpp"
#include "admix/transformer.hpp"

namespace admix {

enum class Method { baseline, admix, swap, worddrop, switchout, seqmix, gaussian };

Method method_from_name(const std::string& name);
const char* method_name(Method m);

struct OptimizerConfig {
  double lr_base = 5e-4;
  int64_t warmup_steps = 400;  // 0 selects a constant learning rate
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Full experiment configuration. Config-file keys mirror the field names
// (nested fields use dotted keys, e.g. model.d_model, admix.lambda);
// unknown keys are an error.
struct TrainConfig {
  ModelConfig model;     // vocab_size is filled in from the vocabulary
  AdmixConfig admix;
  OptimizerConfig optimizer;
  int64_t max_steps = 2000;
  int64_t batch_tokens = 1024;
  uint64_t seed = 1;
  int64_t val_interval = 200;
  int64_t patience = 5;           // non-improving validations before stopping; 0 disables
  Method method = Method::baseline;
  double baseline_gamma = 0.15;   // swap / worddrop noise probability
  double switchout_tau = 1.0;
  double gaussian_sigma = 0.01;
  double clip_norm = 1.0;         // 0 disables clipping

  void validate() const;
};

TrainConfig parse_train_config(const std::string& path);

// Applies one `key = value` assignment (the config file grammar; also used
// for CLI overrides). Throws on unknown keys or malformed values.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

std::string config_to_string(const TrainConfig& cfg);

}  // namespace admix
