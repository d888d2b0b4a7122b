#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "master/text/vocab.hpp"

namespace master::text {

struct Document {
  std::string id;
  std::string doc_id;  // defaults to id
  std::vector<int> tokens;
};

// A fixed-length span of a document, stored as [CLS] tokens... [SEP].
struct Passage {
  std::string pid;
  std::string doc_id;
  int position_in_doc = 0;
  std::vector<int> token_ids;

  // Tokens between CLS and SEP.
  int content_size() const { return static_cast<int>(token_ids.size()) - 2; }
  std::vector<int> content() const {
    return {token_ids.begin() + 1, token_ids.end() - 1};
  }
};

struct PassagePair {
  Passage left;
  Passage right;
};

struct PassageCorpus {
  std::vector<Passage> passages;  // document order
  std::unordered_map<std::string, int> pid_index;

  const Passage* find(const std::string& pid) const {
    auto it = pid_index.find(pid);
    return it == pid_index.end() ? nullptr : &passages[it->second];
  }
  void rebuild_index();
};

inline constexpr int kDefaultMinSpanLen = 8;

// One document per line: {"id": ..., "text": ..., "doc_id"?: ...}.
std::vector<Document> read_corpus_jsonl(const std::string& path, const Vocab& vocab);

// Non-overlapping windows of max_span_len tokens, in order. A trailing
// window shorter than min_span_len is dropped; everything else partitions
// the document token stream exactly. Pids are "<doc id>:<position>".
std::vector<Passage> split_spans(const Document& doc, int max_span_len,
                                 int min_span_len = kDefaultMinSpanLen);

// Adjacent pairs (s1,s2), (s2,s3), ... from one document's ordered spans.
std::vector<PassagePair> make_pairs(const std::vector<Passage>& spans);

// Prepared-passage serialization: {"pid","doc_id","pos","tokens":[ids]}.
void save_passages_jsonl(const std::string& path, const std::vector<Passage>& passages);
PassageCorpus load_passages_jsonl(const std::string& path);

// Pair serialization: {"left": pid, "right": pid}.
void save_pairs_jsonl(const std::string& path, const std::vector<PassagePair>& pairs);
std::vector<PassagePair> load_pairs_jsonl(const std::string& path, const PassageCorpus& corpus);

}  // namespace master::text
