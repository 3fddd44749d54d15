#include "admix/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "admix/rng.hpp"

namespace admix {

namespace {
const char* kSpecialTokens[Vocab::kNumSpecial] = {"<pad>", "<bos>", "<eos>", "<unk>", "<blank>"};
const char* kHeader = "#specials PAD BOS EOS UNK BLANK";
}  // namespace

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

Vocab::Vocab() {
  for (const auto* s : kSpecialTokens) add_token(s);
}

void Vocab::add_token(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int32_t>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::string>& corpus_paths, int64_t min_freq,
                   int64_t max_size) {
  std::unordered_map<std::string, int64_t> freq;
  int64_t total_tokens = 0;
  for (const auto& path : corpus_paths) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("build_vocab: cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
      for (auto& tok : split_ws(line)) {
        ++freq[tok];
        ++total_tokens;
      }
    }
  }
  if (total_tokens == 0) throw std::runtime_error("build_vocab: corpus is empty");

  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (const auto& [tok, n] : items) {
    if (n < min_freq) continue;
    if (max_size > 0 && v.size() >= max_size) break;
    v.add_token(tok);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& content_tokens) {
  Vocab v;
  for (const auto& tok : content_tokens) {
    if (v.contains(tok)) throw std::runtime_error("vocab: duplicate token '" + tok + "'");
    v.add_token(tok);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw std::runtime_error("vocab: " + path + " missing header '" + kHeader + "'");
  Vocab v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.contains(line)) throw std::runtime_error("vocab: duplicate token '" + line + "' in " + path);
    v.add_token(line);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocab: cannot write " + path);
  out << kHeader << '\n';
  for (int32_t i = kNumSpecial; i < size(); ++i) out << id_to_token_[static_cast<size_t>(i)] << '\n';
  if (!out) throw std::runtime_error("vocab: write failed for " + path);
}

int32_t Vocab::id(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int32_t id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range [0," +
                            std::to_string(size()) + ")");
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int32_t> Vocab::encode(const std::string& line) const {
  std::vector<int32_t> ids;
  for (const auto& tok : split_ws(line)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(const std::vector<int32_t>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

uint64_t Vocab::hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& tok : id_to_token_) {
    h ^= Rng::fnv1a64(tok);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace admix
