#include "admix/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace admix {

const char* noise_op_name(NoiseOp op) {
  switch (op) {
    case NoiseOp::replace: return "replace";
    case NoiseOp::swap: return "swap";
    case NoiseOp::drop: return "drop";
  }
  return "?";
}

NoiseOp noise_op_from_name(const std::string& name) {
  if (name == "replace") return NoiseOp::replace;
  if (name == "swap") return NoiseOp::swap;
  if (name == "drop") return NoiseOp::drop;
  throw std::invalid_argument("unknown noise op '" + name + "' (expected replace|swap|drop)");
}

int32_t noise_count(double gamma, size_t len) {
  return static_cast<int32_t>(std::floor(gamma * static_cast<double>(len) + 0.5));
}

namespace {

// Uniform content id different from `original` in a single draw.
int32_t draw_replacement(Rng& rng, const Vocab& vocab, int32_t original) {
  const int32_t content = vocab.n_content();
  if (content < 1)
    throw std::invalid_argument("word_replace: vocabulary has no content tokens");
  int32_t candidates = content;
  if (original >= Vocab::kNumSpecial) --candidates;
  if (candidates < 1)
    throw std::invalid_argument("word_replace: no alternative token exists for '" +
                                vocab.token(original) + "'");
  auto id = Vocab::kNumSpecial + static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(candidates)));
  if (original >= Vocab::kNumSpecial && id >= original) ++id;
  return id;
}

std::vector<int32_t> replace_positions(const std::vector<int32_t>& seq, int32_t n, Rng& rng,
                                       const Vocab& vocab) {
  std::vector<int32_t> out = seq;
  const auto l = static_cast<int32_t>(seq.size());
  for (const auto pos : rng.sample_positions(l, n))
    out[static_cast<size_t>(pos)] = draw_replacement(rng, vocab, seq[static_cast<size_t>(pos)]);
  return out;
}

}  // namespace

std::vector<int32_t> word_replace(const std::vector<int32_t>& seq, double gamma, Rng& rng,
                                  const Vocab& vocab) {
  return replace_positions(seq, noise_count(gamma, seq.size()), rng, vocab);
}

std::vector<int32_t> word_swap(const std::vector<int32_t>& seq, double gamma, Rng& rng) {
  std::vector<int32_t> out = seq;
  const auto l = static_cast<int64_t>(seq.size());
  if (l < 2) return out;
  const int32_t n = noise_count(gamma, seq.size());
  for (int32_t k = 0; k < n; ++k) {
    const auto i = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(l)));
    auto j = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(l - 1)));
    if (j >= i) ++j;
    std::swap(out[static_cast<size_t>(i)], out[static_cast<size_t>(j)]);
  }
  return out;
}

std::vector<int32_t> word_drop(const std::vector<int32_t>& seq, double gamma, Rng& rng,
                               DropMode mode) {
  const auto l = seq.size();
  std::vector<uint8_t> selected(l, 0);
  size_t n_selected = 0;
  for (size_t i = 0; i < l; ++i) {
    if (rng.bernoulli(gamma)) {
      selected[i] = 1;
      ++n_selected;
    }
  }
  if (l > 0 && n_selected == l) {
    // never drop the whole sentence
    selected[rng.uniform_int(static_cast<uint64_t>(l))] = 0;
  }
  std::vector<int32_t> out;
  if (mode == DropMode::blank) {
    out = seq;
    for (size_t i = 0; i < l; ++i)
      if (selected[i]) out[i] = Vocab::kBlank;
  } else {
    out.reserve(l);
    for (size_t i = 0; i < l; ++i)
      if (!selected[i]) out.push_back(seq[i]);
  }
  return out;
}

std::vector<int32_t> switchout_baseline(const std::vector<int32_t>& seq, double tau, Rng& rng,
                                        const Vocab& vocab) {
  if (!(tau > 0.0)) throw std::invalid_argument("switchout: tau must be positive");
  const auto l = static_cast<int32_t>(seq.size());
  // P(n) proportional to exp(-n / tau), n in [0, l]
  double z = 0.0;
  std::vector<double> w(static_cast<size_t>(l) + 1);
  for (int32_t n = 0; n <= l; ++n) {
    w[static_cast<size_t>(n)] = std::exp(-static_cast<double>(n) / tau);
    z += w[static_cast<size_t>(n)];
  }
  const double u = rng.uniform() * z;
  double acc = 0.0;
  int32_t n = l;
  for (int32_t k = 0; k <= l; ++k) {
    acc += w[static_cast<size_t>(k)];
    if (u < acc) {
      n = k;
      break;
    }
  }
  return replace_positions(seq, n, rng, vocab);
}

std::vector<int32_t> apply_noise(NoiseOp op, const std::vector<int32_t>& seq, double gamma,
                                 Rng& rng, const Vocab& vocab, DropMode drop_mode) {
  switch (op) {
    case NoiseOp::replace: return word_replace(seq, gamma, rng, vocab);
    case NoiseOp::swap: return word_swap(seq, gamma, rng);
    case NoiseOp::drop: return word_drop(seq, gamma, rng, drop_mode);
  }
  throw std::logic_error("apply_noise: bad op");
}

}  // namespace admix
