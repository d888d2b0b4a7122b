#include "master/text/corpus.hpp"

#include <sstream>
#include <unordered_set>

#include "master/util/error.hpp"
#include "master/util/io.hpp"

namespace master::text {

void PassageCorpus::rebuild_index() {
  pid_index.clear();
  for (size_t i = 0; i < passages.size(); ++i) pid_index[passages[i].pid] = static_cast<int>(i);
}

std::vector<Document> read_corpus_jsonl(const std::string& path, const Vocab& vocab) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen_ids;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    Document doc;
    doc.id = require_string(obj, "id", where);
    if (!seen_ids.insert(doc.id).second) fail("format", where + ": duplicate id '" + doc.id + "'");
    std::string text = require_string(obj, "text", where);
    doc.doc_id = obj.contains("doc_id") ? require_string(obj, "doc_id", where) : doc.id;
    doc.tokens = encode_text(vocab, text);
    docs.push_back(std::move(doc));
  });
  return docs;
}

std::vector<Passage> split_spans(const Document& doc, int max_span_len, int min_span_len) {
  if (max_span_len < 1) fail("bad_args", "max_span_len must be >= 1");
  std::vector<Passage> spans;
  const int n = static_cast<int>(doc.tokens.size());
  for (int start = 0, pos = 0; start < n; start += max_span_len, ++pos) {
    int len = std::min(max_span_len, n - start);
    bool is_tail = start + len == n && len < max_span_len;
    if (is_tail && len < min_span_len) break;
    Passage p;
    p.pid = doc.id + ":" + std::to_string(pos);
    p.doc_id = doc.doc_id;
    p.position_in_doc = pos;
    p.token_ids.reserve(len + 2);
    p.token_ids.push_back(Vocab::kCls);
    p.token_ids.insert(p.token_ids.end(), doc.tokens.begin() + start, doc.tokens.begin() + start + len);
    p.token_ids.push_back(Vocab::kSep);
    spans.push_back(std::move(p));
  }
  return spans;
}

std::vector<PassagePair> make_pairs(const std::vector<Passage>& spans) {
  std::vector<PassagePair> pairs;
  for (size_t i = 0; i + 1 < spans.size(); ++i) {
    if (spans[i].doc_id != spans[i + 1].doc_id ||
        spans[i + 1].position_in_doc != spans[i].position_in_doc + 1)
      fail("bad_args", "make_pairs: spans must be ordered adjacent spans of one document");
    pairs.push_back(PassagePair{spans[i], spans[i + 1]});
  }
  return pairs;
}

void save_passages_jsonl(const std::string& path, const std::vector<Passage>& passages) {
  std::ostringstream out;
  for (const auto& p : passages) {
    json obj;
    obj["pid"] = p.pid;
    obj["doc_id"] = p.doc_id;
    obj["pos"] = p.position_in_doc;
    obj["tokens"] = p.token_ids;
    out << obj.dump() << '\n';
  }
  write_file(path, out.str());
}

PassageCorpus load_passages_jsonl(const std::string& path) {
  PassageCorpus corpus;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    Passage p;
    p.pid = require_string(obj, "pid", where);
    p.doc_id = require_string(obj, "doc_id", where);
    if (!obj.contains("pos") || !obj["pos"].is_number_integer())
      fail("format", where + ": missing integer field 'pos'");
    p.position_in_doc = obj["pos"].get<int>();
    if (!obj.contains("tokens") || !obj["tokens"].is_array())
      fail("format", where + ": missing array field 'tokens'");
    p.token_ids = obj["tokens"].get<std::vector<int>>();
    if (p.token_ids.size() < 3 || p.token_ids.front() != Vocab::kCls || p.token_ids.back() != Vocab::kSep)
      fail("format", where + ": passage tokens must be [CLS] ... [SEP]");
    corpus.passages.push_back(std::move(p));
  });
  corpus.rebuild_index();
  return corpus;
}

void save_pairs_jsonl(const std::string& path, const std::vector<PassagePair>& pairs) {
  std::ostringstream out;
  for (const auto& pr : pairs) {
    json obj;
    obj["left"] = pr.left.pid;
    obj["right"] = pr.right.pid;
    out << obj.dump() << '\n';
  }
  write_file(path, out.str());
}

std::vector<PassagePair> load_pairs_jsonl(const std::string& path, const PassageCorpus& corpus) {
  std::vector<PassagePair> pairs;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    std::string left_pid = require_string(obj, "left", where);
    std::string right_pid = require_string(obj, "right", where);
    const Passage* left = corpus.find(left_pid);
    const Passage* right = corpus.find(right_pid);
    if (!left || !right)
      fail("unknown_pid", where + ": pair references unknown pid '" + (left ? right_pid : left_pid) + "'");
    pairs.push_back(PassagePair{*left, *right});
  });
  return pairs;
}

}  // namespace master::text
