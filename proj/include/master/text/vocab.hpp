#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace master::text {

// Word-level vocabulary. Ids are dense, specials first. Tokens below the
// build-time frequency floor map to [UNK].
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  Vocab();

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(std::string_view token) const;                 // kUnk when absent
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  // Appends a non-special token; id is size() before the call.
  int add_token(const std::string& token);

  void save_tsv(const std::string& path) const;
  static Vocab load_tsv(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Lowercased whitespace/punctuation word split. Punctuation separates and is
// dropped; bytes >= 0x80 are kept as word characters.
std::vector<std::string> tokenize_words(std::string_view text);

// tokenize_words mapped through the vocab (no specials added).
std::vector<int> encode_text(const Vocab& vocab, std::string_view text);

// Space-joined token strings for the given ids; inverse of encode_text for
// whitespace-separated in-vocab text.
std::string detokenize(const Vocab& vocab, const std::vector<int>& ids);

// Frequency-ranked vocab over the documents: rank by count desc then token
// asc, capped at max_vocab entries including specials, tokens with
// count < min_freq dropped. Empty document list is an error.
Vocab build_vocab(const std::vector<std::string>& documents, int max_vocab, int min_freq);

}  // namespace master::text
