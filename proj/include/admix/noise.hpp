#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "admix/rng.hpp"
#include "admix/vocab.hpp"

namespace admix {

enum class NoiseOp { replace, swap, drop };
enum class DropMode { remove, blank };

const char* noise_op_name(NoiseOp op);
NoiseOp noise_op_from_name(const std::string& name);

// round-half-up of gamma * l; governs how many words WR/WS touch.
int32_t noise_count(double gamma, size_t len);

// Replaces exactly round(gamma*l) distinct positions with a uniform draw over
// content ids, never the original token. Length preserved.
std::vector<int32_t> word_replace(const std::vector<int32_t>& seq, double gamma, Rng& rng,
                                  const Vocab& vocab);

// Performs round(gamma*l) swap moves, each exchanging two distinct uniform
// positions. Token multiset and length preserved; identity when l < 2.
std::vector<int32_t> word_swap(const std::vector<int32_t>& seq, double gamma, Rng& rng);

// Selects each position independently with probability gamma. remove deletes
// the selected tokens; blank substitutes the BLANK id in place (length
// preserved). If every position is selected, one uniform position survives.
std::vector<int32_t> word_drop(const std::vector<int32_t>& seq, double gamma, Rng& rng,
                               DropMode mode);

// SwitchOut-style baseline: draws a replacement count n with P(n) proportional
// to exp(-n/tau) over n in [0, l], then replaces n distinct uniform positions
// with uniform content ids (never the original token).
std::vector<int32_t> switchout_baseline(const std::vector<int32_t>& seq, double tau, Rng& rng,
                                        const Vocab& vocab);

// Dispatch helper for the AdMix variant loop (WD runs in blank mode there).
std::vector<int32_t> apply_noise(NoiseOp op, const std::vector<int32_t>& seq, double gamma,
                                 Rng& rng, const Vocab& vocab, DropMode drop_mode);

}  // namespace admix
