#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "admix/noise.hpp"
#include "admix/vocab.hpp"

using namespace admix;

namespace {

Vocab toy_vocab(int n_content) {
  std::vector<std::string> toks;
  for (int i = 0; i < n_content; ++i) toks.push_back("w" + std::to_string(i));
  return Vocab::from_tokens(toks);
}

std::vector<int32_t> seq_of(int l, int32_t base = 5) {
  std::vector<int32_t> s(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) s[static_cast<size_t>(i)] = base + i % 20;
  return s;
}

int count_diffs(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  int n = 0;
  for (size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

}  // namespace

TEST_CASE("noise_count rounds half up") {
  CHECK(noise_count(0.0, 17) == 0);
  CHECK(noise_count(0.1, 20) == 2);
  CHECK(noise_count(0.1, 5) == 1);   // 0.5 rounds up
  CHECK(noise_count(0.1, 4) == 0);   // 0.4 rounds down
  CHECK(noise_count(0.15, 10) == 2); // 1.5 rounds up
}

TEST_CASE("gamma=0 is the identity for every operator") {
  const auto vocab = toy_vocab(30);
  const auto seq = seq_of(12);
  Rng rng(1);
  CHECK(word_replace(seq, 0.0, rng, vocab) == seq);
  CHECK(word_swap(seq, 0.0, rng) == seq);
  CHECK(word_drop(seq, 0.0, rng, DropMode::remove) == seq);
  CHECK(word_drop(seq, 0.0, rng, DropMode::blank) == seq);
}

TEST_CASE("word_replace changes exactly round(gamma*l) positions") {
  const auto vocab = toy_vocab(30);
  Rng rng(2);
  const auto seq = seq_of(20);
  for (int rep = 0; rep < 200; ++rep) {
    const auto out = word_replace(seq, 0.1, rng, vocab);
    CHECK(out.size() == seq.size());
    CHECK(count_diffs(seq, out) == 2);  // round(0.1 * 20)
  }
}

TEST_CASE("word_replace never emits specials and never keeps the original") {
  const auto vocab = toy_vocab(10);
  Rng rng(3);
  const auto seq = seq_of(10);
  for (int rep = 0; rep < 500; ++rep) {
    const auto out = word_replace(seq, 0.5, rng, vocab);
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= Vocab::kNumSpecial);
      if (out[i] != seq[i]) CHECK(out[i] < vocab.size());
    }
  }
}

TEST_CASE("word_replace positions are chosen uniformly (chi-square)") {
  const auto vocab = toy_vocab(30);
  Rng rng(4);
  const auto seq = seq_of(10);
  const int trials = 10000;
  int counts[10] = {};
  for (int t = 0; t < trials; ++t) {
    const auto out = word_replace(seq, 0.1, rng, vocab);  // n = 1
    for (int i = 0; i < 10; ++i)
      if (out[static_cast<size_t>(i)] != seq[static_cast<size_t>(i)]) ++counts[i];
  }
  const double expected = trials / 10.0;
  double chi2 = 0.0;
  for (const auto c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-square with 9 dof at p = 0.001
  CHECK(chi2 <= 27.877);
}

TEST_CASE("word_replace on a vocab with no alternatives is a configuration error") {
  const auto empty = toy_vocab(0);
  const auto one = toy_vocab(1);
  Rng rng(5);
  CHECK_THROWS_AS(word_replace({3}, 0.9, rng, empty), std::invalid_argument);
  // single content token that is also the original: no valid replacement
  CHECK_THROWS_AS(word_replace({5}, 0.9, rng, one), std::invalid_argument);
  // but replacing a non-content token works with one candidate
  CHECK(word_replace({Vocab::kUnk}, 0.9, rng, one) == std::vector<int32_t>{5});
}

TEST_CASE("word_swap preserves the token multiset") {
  Rng rng(6);
  for (int rep = 0; rep < 10000; ++rep) {
    const auto l = 2 + rng.uniform_int(15);
    std::vector<int32_t> seq;
    for (size_t i = 0; i < l; ++i)
      seq.push_back(static_cast<int32_t>(5 + rng.uniform_int(10)));
    const auto out = word_swap(seq, 0.3, rng);
    auto a = seq, b = out;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    CHECK(out.size() == seq.size());
  }
}

TEST_CASE("word_swap on a single token is the identity") {
  Rng rng(7);
  const std::vector<int32_t> seq{9};
  CHECK(word_swap(seq, 0.9, rng) == seq);
}

TEST_CASE("word_swap actually moves tokens when n >= 1") {
  Rng rng(8);
  const auto seq = seq_of(10);
  int changed = 0;
  for (int rep = 0; rep < 200; ++rep) changed += word_swap(seq, 0.2, rng) != seq;
  CHECK(changed > 150);  // a swap of distinct values always changes the sequence
}

TEST_CASE("word_drop blank mode preserves length and uses BLANK") {
  Rng rng(9);
  const auto seq = seq_of(15);
  for (int rep = 0; rep < 300; ++rep) {
    const auto out = word_drop(seq, 0.3, rng, DropMode::blank);
    REQUIRE(out.size() == seq.size());
    for (size_t i = 0; i < out.size(); ++i)
      CHECK((out[i] == seq[i] || out[i] == Vocab::kBlank));
  }
}

TEST_CASE("word_drop mean drop count matches the binomial within 3 sigma") {
  Rng rng(10);
  const auto seq = seq_of(20);
  const int trials = 100000;
  int64_t dropped = 0;
  for (int t = 0; t < trials; ++t) {
    const auto out = word_drop(seq, 0.1, rng, DropMode::remove);
    dropped += static_cast<int64_t>(seq.size() - out.size());
  }
  const double mean = static_cast<double>(dropped) / trials;
  const double sigma = std::sqrt(20 * 0.1 * 0.9) / std::sqrt(static_cast<double>(trials));
  CHECK(std::abs(mean - 2.0) <= 3.0 * sigma);
}

TEST_CASE("word_drop never empties the sequence") {
  Rng rng(11);
  const std::vector<int32_t> seq{7, 8};
  for (int rep = 0; rep < 2000; ++rep) {
    const auto out = word_drop(seq, 0.95, rng, DropMode::remove);
    CHECK(out.size() >= 1);
    const auto blank = word_drop(seq, 0.95, rng, DropMode::blank);
    int real = 0;
    for (const auto id : blank) real += id != Vocab::kBlank;
    CHECK(real >= 1);
  }
}

TEST_CASE("switchout matches the exp(-n/tau) count distribution within 3 sigma") {
  const auto vocab = toy_vocab(50);
  Rng rng(12);
  const auto seq = seq_of(5);
  const int trials = 100000;
  int counts[6] = {};
  for (int t = 0; t < trials; ++t) {
    const auto out = switchout_baseline(seq, 1.0, rng, vocab);
    ++counts[count_diffs(seq, out)];
  }
  double z = 0.0;
  for (int n = 0; n <= 5; ++n) z += std::exp(-n);
  for (int n = 0; n <= 5; ++n) {
    const double p = std::exp(-n) / z;
    const double sigma = std::sqrt(trials * p * (1 - p));
    CHECK(std::abs(counts[n] - trials * p) <= 3.0 * sigma);
  }
}

TEST_CASE("switchout with tiny tau approaches the identity") {
  const auto vocab = toy_vocab(50);
  Rng rng(13);
  const auto seq = seq_of(5);
  for (int rep = 0; rep < 300; ++rep) CHECK(switchout_baseline(seq, 1e-9, rng, vocab) == seq);
}

TEST_CASE("switchout rejects nonpositive tau") {
  const auto vocab = toy_vocab(50);
  Rng rng(14);
  CHECK_THROWS_AS(switchout_baseline(seq_of(5), 0.0, rng, vocab), std::invalid_argument);
  CHECK_THROWS_AS(switchout_baseline(seq_of(5), -1.0, rng, vocab), std::invalid_argument);
}

TEST_CASE("no operator ever emits PAD, BOS, or EOS") {
  const auto vocab = toy_vocab(12);
  Rng rng(15);
  const auto seq = seq_of(9);
  for (int rep = 0; rep < 2000; ++rep) {
    for (const auto& out :
         {word_replace(seq, 0.4, rng, vocab), word_swap(seq, 0.4, rng),
          word_drop(seq, 0.4, rng, DropMode::blank), word_drop(seq, 0.4, rng, DropMode::remove),
          switchout_baseline(seq, 1.0, rng, vocab)}) {
      for (const auto id : out) {
        CHECK(id != Vocab::kPad);
        CHECK(id != Vocab::kBos);
        CHECK(id != Vocab::kEos);
      }
    }
  }
}

TEST_CASE("operators are deterministic under a fixed seed") {
  const auto vocab = toy_vocab(25);
  const auto seq = seq_of(14);
  Rng a(77), b(77);
  for (int rep = 0; rep < 50; ++rep) {
    CHECK(word_replace(seq, 0.3, a, vocab) == word_replace(seq, 0.3, b, vocab));
    CHECK(word_swap(seq, 0.3, a) == word_swap(seq, 0.3, b));
    CHECK(word_drop(seq, 0.3, a, DropMode::blank) == word_drop(seq, 0.3, b, DropMode::blank));
    CHECK(switchout_baseline(seq, 1.0, a, vocab) == switchout_baseline(seq, 1.0, b, vocab));
  }
}
