#include "master/text/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "master/util/error.hpp"
#include "master/util/io.hpp"

namespace master::text {

namespace {
const char* kSpecialNames[Vocab::kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
}

Vocab::Vocab() {
  for (int i = 0; i < kNumSpecials; ++i) {
    id_to_token_.emplace_back(kSpecialNames[i]);
    token_to_id_[kSpecialNames[i]] = i;
  }
}

int Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) fail("internal", "token id out of range: " + std::to_string(id));
  return id_to_token_[id];
}

bool Vocab::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

int Vocab::add_token(const std::string& token) {
  if (contains(token)) fail("internal", "duplicate vocab token: " + token);
  int new_id = size();
  id_to_token_.push_back(token);
  token_to_id_[token] = new_id;
  return new_id;
}

void Vocab::save_tsv(const std::string& path) const {
  std::ostringstream out;
  for (int i = 0; i < size(); ++i) out << id_to_token_[i] << '\t' << i << '\n';
  write_file(path, out.str());
}

Vocab Vocab::load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  Vocab vocab;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail("format", path + ":" + std::to_string(lineno) + ": expected token<TAB>id");
    std::string token = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id < Vocab::kNumSpecials) {
      if (token != kSpecialNames[id])
        fail("format", path + ":" + std::to_string(lineno) + ": special token mismatch");
      continue;  // specials are preloaded
    }
    if (id != vocab.size())
      fail("format", path + ":" + std::to_string(lineno) + ": ids must be dense and ordered");
    vocab.add_token(token);
  }
  return vocab;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    bool separator = c < 0x80 && (std::isspace(c) || std::ispunct(c));
    if (separator) {
      if (!current.empty()) {
        words.push_back(current);
        current.clear();
      }
      continue;
    }
    current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

std::vector<int> encode_text(const Vocab& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const auto& w : tokenize_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& documents, int max_vocab, int min_freq) {
  if (documents.empty()) fail("empty_corpus", "empty corpus");
  if (max_vocab <= Vocab::kNumSpecials)
    fail("bad_args", "max_vocab must exceed the special token count");

  std::unordered_map<std::string, long long> counts;
  for (const auto& doc : documents)
    for (auto& w : tokenize_words(doc)) ++counts[w];

  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  int capacity = max_vocab - Vocab::kNumSpecials;
  for (const auto& [token, count] : ranked) {
    if (vocab.size() - Vocab::kNumSpecials >= capacity) break;
    if (count < min_freq) break;  // ranked by count, rest are below too
    vocab.add_token(token);
  }
  return vocab;
}

}  // namespace master::text
