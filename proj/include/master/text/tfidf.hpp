#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "master/text/corpus.hpp"

namespace master::text {

// Passage-level statistics used to weight informative tokens during masking.
// idf(t) = ln((N + 1) / (df(t) + 1)) + 1, always positive thanks to smoothing.
class TfIdfTable {
 public:
  TfIdfTable() = default;

  long long num_passages() const { return num_passages_; }
  long long df(int token) const {
    auto it = df_.find(token);
    return it == df_.end() ? 0 : it->second;
  }

  // Tokens never seen at build time fall back to the smallest idf in the
  // table, so they are maskable but never preferred over known rare tokens.
  double idf(int token) const;

  // tf(t, p) * idf(t) where tf is the raw count of t among content tokens.
  double weight(int token, const Passage& passage) const;

  // Weights aligned with passage.content(); special tokens never appear there.
  std::vector<double> content_weights(const Passage& passage) const;

  void save(const std::string& path) const;
  static TfIdfTable load(const std::string& path);

  friend TfIdfTable compute_tfidf(const std::vector<Passage>& passages);

 private:
  long long num_passages_ = 0;
  std::unordered_map<int, long long> df_;
  double min_idf_ = 1.0;
};

TfIdfTable compute_tfidf(const std::vector<Passage>& passages);

}  // namespace master::text
