#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace admix {

// Bidirectional token <-> id map. Ids 0..4 are reserved specials; content
// tokens start at id 5 in frequency order (descending, lexicographic ties).
class Vocab {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kBlank = 4;
  static constexpr int32_t kNumSpecial = 5;

  Vocab();

  // min_freq filters rare tokens; max_size caps the total size V including
  // the five specials (0 = unlimited).
  static Vocab build(const std::vector<std::string>& corpus_paths, int64_t min_freq = 1,
                     int64_t max_size = 0);
  static Vocab from_tokens(const std::vector<std::string>& content_tokens);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int32_t size() const { return static_cast<int32_t>(id_to_token_.size()); }
  int32_t n_content() const { return size() - kNumSpecial; }

  // Lookup with UNK fallback.
  int32_t id(const std::string& token) const;
  const std::string& token(int32_t id) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  static bool is_special(int32_t id) { return id >= 0 && id < kNumSpecial; }

  // Whitespace-splits and maps each token (UNK fallback). No BOS/EOS added.
  // An all-whitespace line encodes to an empty sequence (skip signal).
  std::vector<int32_t> encode(const std::string& line) const;
  std::string decode(const std::vector<int32_t>& ids) const;

  // Order-sensitive content hash used to bind checkpoints to a vocabulary.
  uint64_t hash() const;

 private:
  void add_token(const std::string& token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int32_t> token_to_id_;
};

std::vector<std::string> split_ws(const std::string& line);

}  // namespace admix
