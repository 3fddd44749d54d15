#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "admix/transformer.hpp"

namespace admix {

// Versioned binary checkpoint: magic "ADMIXCK1", a u32 format version, a
// length-prefixed JSON header (model config, vocab hash, parameter manifest),
// then the raw little-endian float32 parameter data in manifest order.
// docs/checkpoint.md describes the exact layout.
void save_checkpoint(const std::string& path, const Transformer& model, uint64_t vocab_hash);

struct LoadedCheckpoint {
  std::unique_ptr<Transformer> model;
  uint64_t vocab_hash = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace admix
