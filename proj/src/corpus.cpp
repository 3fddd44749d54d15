#include "admix/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace admix {

std::vector<SentencePair> load_parallel_corpus(const std::string& prefix, const Vocab& vocab) {
  const std::string src_path = prefix + ".src";
  const std::string tgt_path = prefix + ".tgt";
  std::ifstream src_in(src_path), tgt_in(tgt_path);
  if (!src_in) throw std::runtime_error("corpus: cannot open " + src_path);
  if (!tgt_in) throw std::runtime_error("corpus: cannot open " + tgt_path);

  std::vector<SentencePair> pairs;
  std::string src_line, tgt_line;
  int64_t line = 0;
  while (true) {
    const bool got_src = static_cast<bool>(std::getline(src_in, src_line));
    const bool got_tgt = static_cast<bool>(std::getline(tgt_in, tgt_line));
    if (!got_src && !got_tgt) break;
    if (got_src != got_tgt)
      throw std::runtime_error("corpus: " + src_path + " and " + tgt_path +
                               " have different line counts");
    ++line;
    SentencePair p;
    p.src = vocab.encode(src_line);
    p.tgt = vocab.encode(tgt_line);
    p.line = line;
    if (p.src.empty() || p.tgt.empty()) continue;  // skip signal
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw std::runtime_error("corpus: " + prefix + " has no usable pairs");
  return pairs;
}

Batch make_batch(const std::vector<SentencePair>& pairs, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw std::runtime_error("make_batch: empty index list");
  int64_t s_max = 0, t_max = 0;
  for (const auto i : indices) {
    s_max = std::max(s_max, static_cast<int64_t>(pairs[static_cast<size_t>(i)].src.size()));
    t_max = std::max(t_max, static_cast<int64_t>(pairs[static_cast<size_t>(i)].tgt.size()));
  }
  const int64_t b = static_cast<int64_t>(indices.size());
  Batch batch;
  batch.src_ids = IdMat(b, s_max, Vocab::kPad);
  batch.tgt_in = IdMat(b, t_max + 1, Vocab::kPad);
  batch.tgt_out = IdMat(b, t_max + 1, Vocab::kPad);
  batch.src_mask = BoolMat(b, s_max, false);
  batch.tgt_mask = BoolMat(b, t_max + 1, false);
  batch.pair_index = indices;
  for (int64_t r = 0; r < b; ++r) {
    const auto& p = pairs[static_cast<size_t>(indices[static_cast<size_t>(r)])];
    const auto sl = static_cast<int64_t>(p.src.size());
    const auto tl = static_cast<int64_t>(p.tgt.size());
    batch.src_len.push_back(static_cast<int32_t>(sl));
    batch.tgt_len.push_back(static_cast<int32_t>(tl));
    for (int64_t i = 0; i < sl; ++i) {
      batch.src_ids.at(r, i) = p.src[static_cast<size_t>(i)];
      batch.src_mask.at(r, i) = 1;
    }
    batch.tgt_in.at(r, 0) = Vocab::kBos;
    for (int64_t i = 0; i < tl; ++i) {
      batch.tgt_in.at(r, i + 1) = p.tgt[static_cast<size_t>(i)];
      batch.tgt_out.at(r, i) = p.tgt[static_cast<size_t>(i)];
    }
    batch.tgt_out.at(r, tl) = Vocab::kEos;
    for (int64_t i = 0; i <= tl; ++i) batch.tgt_mask.at(r, i) = 1;
  }
  return batch;
}

std::vector<Batch> make_batches(const std::vector<SentencePair>& pairs, int64_t max_tokens,
                                Rng& rng) {
  if (pairs.empty()) throw std::runtime_error("make_batches: no pairs");
  for (const auto& p : pairs) {
    const int64_t need = static_cast<int64_t>(p.tgt.size()) + 1;
    if (need > max_tokens)
      throw std::runtime_error("make_batches: pair at line " + std::to_string(p.line) +
                               " needs " + std::to_string(need) + " padded target tokens, budget " +
                               std::to_string(max_tokens));
  }

  // Length-bucket: sort by (tgt len, src len, index), then pack greedily.
  std::vector<int64_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    const auto& pa = pairs[static_cast<size_t>(a)];
    const auto& pb = pairs[static_cast<size_t>(b)];
    if (pa.tgt.size() != pb.tgt.size()) return pa.tgt.size() < pb.tgt.size();
    if (pa.src.size() != pb.src.size()) return pa.src.size() < pb.src.size();
    return a < b;
  });

  std::vector<std::vector<int64_t>> groups;
  std::vector<int64_t> cur;
  int64_t cur_tmax = 0;
  for (const auto i : order) {
    const int64_t t = static_cast<int64_t>(pairs[static_cast<size_t>(i)].tgt.size());
    const int64_t new_tmax = std::max(cur_tmax, t);
    const int64_t footprint = (static_cast<int64_t>(cur.size()) + 1) * (new_tmax + 1);
    if (!cur.empty() && footprint > max_tokens) {
      groups.push_back(std::move(cur));
      cur.clear();
      cur_tmax = 0;
    }
    cur.push_back(i);
    cur_tmax = std::max(cur_tmax, t);
  }
  if (!cur.empty()) groups.push_back(std::move(cur));

  // Shuffle batch order (Fisher-Yates over the group list).
  for (size_t i = groups.size(); i > 1; --i) {
    const auto j = static_cast<size_t>(rng.uniform_int(i));
    std::swap(groups[i - 1], groups[j]);
  }

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& g : groups) batches.push_back(make_batch(pairs, g));
  return batches;
}

}  // namespace admix
