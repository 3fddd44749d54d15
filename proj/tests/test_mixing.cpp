#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "admix/mixing.hpp"
#include "testutil.hpp"

using namespace admix;

namespace {

Vocab toy_vocab(int n_content) {
  std::vector<std::string> toks;
  for (int i = 0; i < n_content; ++i) toks.push_back("w" + std::to_string(i));
  return Vocab::from_tokens(toks);
}

std::vector<SentencePair> toy_pairs(Rng& rng, int n, int max_len, int32_t vocab_size) {
  std::vector<SentencePair> pairs;
  for (int i = 0; i < n; ++i) {
    SentencePair p;
    const auto sl = 1 + rng.uniform_int(static_cast<uint64_t>(max_len));
    const auto tl = 1 + rng.uniform_int(static_cast<uint64_t>(max_len));
    for (size_t j = 0; j < sl; ++j)
      p.src.push_back(static_cast<int32_t>(5 + rng.uniform_int(static_cast<uint64_t>(vocab_size - 5))));
    for (size_t j = 0; j < tl; ++j)
      p.tgt.push_back(static_cast<int32_t>(5 + rng.uniform_int(static_cast<uint64_t>(vocab_size - 5))));
    p.line = i + 1;
    pairs.push_back(p);
  }
  return pairs;
}

template <class Real>
TensorT<Real> random_table(int32_t v, int64_t d, Rng& rng) {
  TensorT<Real> t({v, d});
  for (auto& x : t.data()) x = static_cast<Real>(rng.normal(0.0, 1.0));
  return t;
}

Batch batch_of(const std::vector<SentencePair>& pairs) {
  std::vector<int64_t> idx(pairs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  return make_batch(pairs, idx);
}

}  // namespace

TEST_CASE("config defaults match the method's settings and validate() guards them") {
  AdmixConfig cfg;
  CHECK(cfg.alpha == 1.0);
  CHECK(cfg.beta == 1.0);
  CHECK(cfg.gamma == 0.1);
  CHECK(cfg.lambda == 10.0);
  CHECK(cfg.k() == 3);
  CHECK(cfg.sides == Sides::both);
  CHECK(cfg.residual);
  cfg.validate();

  AdmixConfig bad = cfg;
  bad.ops.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forced m=0 reproduces the clean embeddings exactly") {
  const auto vocab = toy_vocab(20);
  Rng data_rng(1), table_rng(2), noise(3), mix(4);
  const auto pairs = toy_pairs(data_rng, 4, 6, vocab.size());
  const auto batch = batch_of(pairs);
  auto src_table = random_table<float>(vocab.size(), 8, table_rng);
  auto tgt_table = random_table<float>(vocab.size(), 8, table_rng);

  AdmixConfig cfg;
  const double zero = 0.0;
  const auto res = admix_batch(batch, src_table, tgt_table, vocab, cfg, noise, mix, &zero);
  const auto clean_src = gather_rows(src_table, batch.src_ids);
  const auto clean_tgt = gather_rows(tgt_table, batch.tgt_in);
  REQUIRE(res.src.values.data().size() == clean_src.data().size());
  for (size_t i = 0; i < clean_src.data().size(); ++i)
    CHECK(res.src.values.data()[i] == clean_src.data()[i]);
  for (size_t i = 0; i < clean_tgt.data().size(); ++i)
    CHECK(res.tgt.values.data()[i] == clean_tgt.data()[i]);
}

TEST_CASE("k=1, w=[1], m=1 reduces to the embedding of the single noised variant") {
  const auto vocab = toy_vocab(20);
  Rng data_rng(5), table_rng(6);
  const auto pairs = toy_pairs(data_rng, 3, 5, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 4, table_rng);

  AdmixConfig cfg;
  cfg.ops = {NoiseOp::swap};  // k = 1
  cfg.residual = false;       // m = 1
  const std::vector<double> w1{1.0};

  // replay the same noise stream to know the variant
  Rng noise_a(7), noise_b(7), mix(8);
  const auto res =
      admix_batch(batch, table, table, vocab, cfg, noise_a, mix, nullptr, &w1);
  REQUIRE(res.m[0] == 1.0);

  // replay order: the source side noises all rows before the target side
  IdMat src_variant = batch.src_ids;
  IdMat tgt_variant = batch.tgt_in;
  for (int64_t r = 0; r < batch.rows(); ++r) {
    std::vector<int32_t> span(batch.src_ids.v.begin() + r * batch.src_ids.cols,
                              batch.src_ids.v.begin() + r * batch.src_ids.cols + batch.src_len[static_cast<size_t>(r)]);
    auto noised = word_swap(span, cfg.gamma, noise_b);
    std::copy(noised.begin(), noised.end(), src_variant.v.begin() + r * src_variant.cols);
  }
  for (int64_t r = 0; r < batch.rows(); ++r) {
    std::vector<int32_t> tspan(batch.tgt_in.v.begin() + r * batch.tgt_in.cols + 1,
                               batch.tgt_in.v.begin() + r * batch.tgt_in.cols + 1 + batch.tgt_len[static_cast<size_t>(r)]);
    auto tnoised = word_swap(tspan, cfg.gamma, noise_b);
    std::copy(tnoised.begin(), tnoised.end(), tgt_variant.v.begin() + r * tgt_variant.cols + 1);
  }
  const auto expect_src = gather_rows(table, src_variant);
  const auto expect_tgt = gather_rows(table, tgt_variant);
  for (size_t i = 0; i < expect_src.data().size(); ++i) {
    // w = [1]: scale by 1.0 is exact, PAD rows carry the clean embedding
    CHECK(res.src.values.data()[i] == expect_src.data()[i]);
  }
  for (size_t i = 0; i < expect_tgt.data().size(); ++i)
    CHECK(res.tgt.values.data()[i] == expect_tgt.data()[i]);
}

TEST_CASE("mixed output stays in the coordinatewise hull of clean + variants (B=2, L=4, d=3)") {
  Rng rng(9);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<TensorT<double>> variants;
    for (int i = 0; i < 3; ++i) variants.push_back(testutil::random_tensor({2, 4, 3}, rng));
    auto clean = testutil::random_tensor({2, 4, 3}, rng);
    const auto w = rng.dirichlet(3, 1.0);
    const double m = rng.beta(1.0);
    const auto mixed = detail::mix_variants(variants, clean, w, m);
    for (size_t c = 0; c < mixed.data().size(); ++c) {
      double lo = clean.data()[c], hi = clean.data()[c];
      for (const auto& v : variants) {
        lo = std::min(lo, v.data()[c]);
        hi = std::max(hi, v.data()[c]);
      }
      CHECK(mixed.data()[c] >= lo - 1e-12);
      CHECK(mixed.data()[c] <= hi + 1e-12);
    }
  }
}

TEST_CASE("identity chain: gamma=0 makes the mixed batch equal the clean one (1e-6, 32-bit)") {
  const auto vocab = toy_vocab(25);
  Rng data_rng(10), table_rng(11), noise(12), mix(13);
  const auto pairs = toy_pairs(data_rng, 6, 7, vocab.size());
  const auto batch = batch_of(pairs);
  auto src_table = random_table<float>(vocab.size(), 16, table_rng);
  auto tgt_table = random_table<float>(vocab.size(), 16, table_rng);

  AdmixConfig cfg;
  cfg.gamma = 0.0;
  const auto res = admix_batch(batch, src_table, tgt_table, vocab, cfg, noise, mix);
  const auto clean_src = gather_rows(src_table, batch.src_ids);
  const auto clean_tgt = gather_rows(tgt_table, batch.tgt_in);
  for (size_t i = 0; i < clean_src.data().size(); ++i)
    CHECK(std::abs(res.src.values.data()[i] - clean_src.data()[i]) <= 1e-6f);
  for (size_t i = 0; i < clean_tgt.data().size(); ++i)
    CHECK(std::abs(res.tgt.values.data()[i] - clean_tgt.data()[i]) <= 1e-6f);
}

TEST_CASE("residual=false returns the pure mixture E_ad exactly") {
  const auto vocab = toy_vocab(15);
  Rng data_rng(14), table_rng(15), noise(16), mix(17);
  const auto pairs = toy_pairs(data_rng, 3, 5, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 4, table_rng);

  AdmixConfig cfg;
  cfg.gamma = 0.0;  // variants equal the original, so E_ad is computable
  cfg.residual = false;
  const auto res = admix_batch(batch, table, table, vocab, cfg, noise, mix);
  REQUIRE(res.m[0] == 1.0);
  const auto& w = res.w[0];

  const auto clean = gather_rows(table, batch.src_ids);
  // same association order as the mixer: ((E*w0 + E*w1) + E*w2)
  for (int64_t i = 0; i < static_cast<int64_t>(clean.data().size()); ++i) {
    const int64_t row = i / (batch.src_ids.cols * 4);
    const int64_t col = (i / 4) % batch.src_ids.cols;
    float expect;
    const float e = clean.data()[static_cast<size_t>(i)];
    if (batch.src_mask.at(row, col)) {
      expect = e * static_cast<float>(w[0]);
      expect += e * static_cast<float>(w[1]);
      expect += e * static_cast<float>(w[2]);
    } else {
      expect = e;  // PAD positions carry the clean PAD embedding
    }
    CHECK(res.src.values.data()[static_cast<size_t>(i)] == expect);
  }
}

TEST_CASE("sides=source_only leaves target embeddings bit-for-bit clean") {
  const auto vocab = toy_vocab(18);
  Rng data_rng(18), table_rng(19), noise(20), mix(21);
  const auto pairs = toy_pairs(data_rng, 5, 6, vocab.size());
  const auto batch = batch_of(pairs);
  auto src_table = random_table<float>(vocab.size(), 8, table_rng);
  auto tgt_table = random_table<float>(vocab.size(), 8, table_rng);

  AdmixConfig cfg;
  cfg.sides = Sides::source_only;
  const auto res = admix_batch(batch, src_table, tgt_table, vocab, cfg, noise, mix);
  const auto clean_tgt = gather_rows(tgt_table, batch.tgt_in);
  CHECK(std::memcmp(res.tgt.values.data().data(), clean_tgt.data().data(),
                    clean_tgt.data().size() * sizeof(float)) == 0);

  cfg.sides = Sides::target_only;
  Rng noise2(20), mix2(21);
  const auto res2 = admix_batch(batch, src_table, tgt_table, vocab, cfg, noise2, mix2);
  const auto clean_src = gather_rows(src_table, batch.src_ids);
  CHECK(std::memcmp(res2.src.values.data().data(), clean_src.data().data(),
                    clean_src.data().size() * sizeof(float)) == 0);
}

TEST_CASE("admix_batch is deterministic under fixed seeds") {
  const auto vocab = toy_vocab(22);
  Rng data_rng(22), table_rng(23);
  const auto pairs = toy_pairs(data_rng, 4, 6, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 6, table_rng);
  AdmixConfig cfg;
  Rng n1(30), m1(31), n2(30), m2(31);
  const auto a = admix_batch(batch, table, table, vocab, cfg, n1, m1);
  const auto b = admix_batch(batch, table, table, vocab, cfg, n2, m2);
  CHECK(a.m == b.m);
  CHECK(a.w == b.w);
  CHECK(a.src.values.data() == b.src.values.data());
  CHECK(a.tgt.values.data() == b.tgt.values.data());
}

TEST_CASE("per-sentence draws differ across rows and are shared between sides") {
  const auto vocab = toy_vocab(22);
  Rng data_rng(24), table_rng(25), noise(26), mix(27);
  const auto pairs = toy_pairs(data_rng, 5, 6, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 6, table_rng);
  AdmixConfig cfg;
  cfg.per_sentence = true;
  const auto res = admix_batch(batch, table, table, vocab, cfg, noise, mix);
  REQUIRE(res.m.size() == static_cast<size_t>(batch.rows()));
  REQUIRE(res.w.size() == static_cast<size_t>(batch.rows()));
  bool any_diff = false;
  for (size_t i = 1; i < res.m.size(); ++i) any_diff = any_diff || res.m[i] != res.m[0];
  CHECK(any_diff);
}

TEST_CASE("gradients flow into the embedding table through the mixed path") {
  const auto vocab = toy_vocab(12);
  Rng data_rng(28), table_rng(29), noise(30), mix(31);
  const auto pairs = toy_pairs(data_rng, 3, 5, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 4, table_rng);
  table.set_requires_grad(true);
  table.set_name("embed");

  AdmixConfig cfg;
  const auto res = admix_batch(batch, table, table, vocab, cfg, noise, mix);
  auto loss = sum_all(add(res.src.values, res.tgt.values));
  loss.backward();
  REQUIRE(table.has_grad());
  // every clean token must receive gradient (m < 1 keeps the clean anchor)
  for (int64_t r = 0; r < batch.rows(); ++r)
    for (int64_t c = 0; c < batch.src_len[static_cast<size_t>(r)]; ++c) {
      const auto id = batch.src_ids.at(r, c);
      double g = 0.0;
      for (int64_t j = 0; j < 4; ++j)
        g += std::abs(table.grad()[static_cast<size_t>(id * 4 + j)]);
      CHECK(g > 0.0);
    }
}

TEST_CASE("seqmix: forced lambda=1 returns pair A zero-padded to the common length") {
  const auto vocab = toy_vocab(16);
  Rng table_rng(32), mix(33);
  std::vector<SentencePair> pairs(2);
  pairs[0].src = {5, 6};
  pairs[0].tgt = {7};
  pairs[1].src = {8, 9, 10, 11};
  pairs[1].tgt = {12, 13, 14};
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 4, table_rng);

  const double one = 1.0;
  const auto row = seqmix_pair(batch, 0, 1, 1.0, table, table, mix, &one);
  CHECK(row.lambda == 1.0);
  // positions 0..1 equal pair A's embeddings, the rest are zero
  for (int64_t c = 0; c < batch.src_ids.cols; ++c)
    for (int64_t j = 0; j < 4; ++j) {
      const float got = row.src.data()[static_cast<size_t>(c * 4 + j)];
      if (c < 2) {
        const auto id = pairs[0].src[static_cast<size_t>(c)];
        CHECK(got == table.data()[static_cast<size_t>(id * 4 + j)]);
      } else {
        CHECK(got == 0.0f);
      }
    }
  // union mask covers the longer pair
  CHECK(row.src_mask.at(0, 3));
}

TEST_CASE("seqmix of a pair with itself is idempotent at lambda=0.5") {
  const auto vocab = toy_vocab(16);
  Rng table_rng(34), mix(35);
  std::vector<SentencePair> pairs(1);
  pairs[0].src = {5, 6, 7};
  pairs[0].tgt = {8, 9};
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 4, table_rng);
  const double half = 0.5;
  const auto row = seqmix_pair(batch, 0, 0, 1.0, table, table, mix, &half);
  const auto clean = zero_padded_rows(gather_rows(table, batch.src_ids), batch.src_mask);
  for (size_t i = 0; i < clean.data().size(); ++i)
    CHECK(row.src.data()[i] == doctest::Approx(clean.data()[i]).epsilon(1e-6));
}

TEST_CASE("gaussian perturbation: tiny sigma vanishes, PAD untouched, variance matches") {
  const auto vocab = toy_vocab(16);
  Rng data_rng(36), table_rng(37);
  const auto pairs = toy_pairs(data_rng, 4, 5, vocab.size());
  const auto batch = batch_of(pairs);
  auto table = random_table<float>(vocab.size(), 8, table_rng);
  EmbeddedBatchT<float> emb{gather_rows(table, batch.src_ids), batch.src_mask};

  SUBCASE("sigma -> 0 gives max abs diff -> 0") {
    Rng rng(38);
    const auto out = gaussian_perturb(emb, 1e-9, rng);
    float max_diff = 0.0f;
    for (size_t i = 0; i < out.values.data().size(); ++i)
      max_diff = std::max(max_diff, std::abs(out.values.data()[i] - emb.values.data()[i]));
    CHECK(max_diff <= 1e-7f);
  }

  SUBCASE("PAD positions are bit-for-bit untouched") {
    Rng rng(39);
    const auto out = gaussian_perturb(emb, 0.5, rng);
    for (int64_t r = 0; r < batch.rows(); ++r)
      for (int64_t c = 0; c < batch.src_ids.cols; ++c) {
        if (batch.src_mask.at(r, c)) continue;
        for (int64_t j = 0; j < 8; ++j) {
          const auto idx = static_cast<size_t>((r * batch.src_ids.cols + c) * 8 + j);
          CHECK(std::memcmp(&out.values.data()[idx], &emb.values.data()[idx], sizeof(float)) == 0);
        }
      }
  }

  SUBCASE("per-coordinate variance of the perturbation matches sigma^2") {
    Rng rng(40);
    const double sigma = 0.3;
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (int rep = 0; rep < 40; ++rep) {
      const auto out = gaussian_perturb(emb, sigma, rng);
      for (int64_t r = 0; r < batch.rows(); ++r)
        for (int64_t c = 0; c < batch.src_ids.cols; ++c) {
          if (!batch.src_mask.at(r, c)) continue;
          for (int64_t j = 0; j < 8; ++j) {
            const auto idx = static_cast<size_t>((r * batch.src_ids.cols + c) * 8 + j);
            const double d = out.values.data()[idx] - emb.values.data()[idx];
            sum += d;
            sq += d * d;
            ++n;
          }
        }
    }
    REQUIRE(n > 100000);
    const double var = sq / n - (sum / n) * (sum / n);
    // 3-sigma band of the variance estimator: var * sqrt(2/n)
    CHECK(std::abs(var - sigma * sigma) <= 3.0 * sigma * sigma * std::sqrt(2.0 / n));
  }

  CHECK_THROWS_AS(gaussian_perturb(emb, 0.0, data_rng), std::invalid_argument);
}
