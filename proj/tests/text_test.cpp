#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "master/text/corpus.hpp"
#include "master/text/plm_outputs.hpp"
#include "master/text/tfidf.hpp"
#include "master/util/io.hpp"
#include "support/synth.hpp"

using namespace master;
using namespace master::text;

namespace {

Vocab vocab_of(const std::vector<std::string>& words) {
  Vocab v;
  for (const auto& w : words) v.add_token(w);
  return v;
}

Passage passage_of(const Vocab& v, const std::string& pid, const std::string& words) {
  Passage p;
  p.pid = pid;
  p.doc_id = pid;
  p.token_ids.push_back(Vocab::kCls);
  for (int id : encode_text(v, words)) p.token_ids.push_back(id);
  p.token_ids.push_back(Vocab::kSep);
  return p;
}

}  // namespace

TEST_CASE("tokenizer lowercases, strips punctuation, keeps non-ascii bytes") {
  auto words = tokenize_words("Hello, World! don't stop\tnow\n  x2");
  std::vector<std::string> want = {"hello", "world", "don", "t", "stop", "now", "x2"};
  CHECK(words == want);
  auto utf = tokenize_words("caf\xC3\xA9 time");
  CHECK(utf == std::vector<std::string>{"caf\xC3\xA9", "time"});
  CHECK(tokenize_words("!!! ...").empty());
}

TEST_CASE("vocab specials are fixed and unknown maps to unk") {
  Vocab v;
  CHECK(v.size() == Vocab::kNumSpecials);
  CHECK(v.token(Vocab::kPad) == "[PAD]");
  CHECK(v.token(Vocab::kUnk) == "[UNK]");
  CHECK(v.token(Vocab::kCls) == "[CLS]");
  CHECK(v.token(Vocab::kSep) == "[SEP]");
  CHECK(v.token(Vocab::kMask) == "[MASK]");
  CHECK(v.id("nope") == Vocab::kUnk);
  int id = v.add_token("word");
  CHECK(id == Vocab::kNumSpecials);
  CHECK(v.id("word") == id);
}

TEST_CASE("build_vocab orders by count then token and honors the cap") {
  std::vector<std::string> docs = {"b b b a a c", "a c z"};
  Vocab v = build_vocab(docs, 7, 1);
  CHECK(v.size() == 7);  // 5 specials + 2 slots
  CHECK(v.id("a") == Vocab::kNumSpecials);      // count 3, ties broken before b? a=3,b=3 -> token asc
  CHECK(v.id("b") == Vocab::kNumSpecials + 1);
  CHECK(v.id("c") == Vocab::kUnk);  // capped out
  Vocab full = build_vocab(docs, 100, 1);
  CHECK(full.size() == Vocab::kNumSpecials + 4);
  CHECK(full.id("z") != Vocab::kUnk);
  Vocab min2 = build_vocab(docs, 100, 2);
  CHECK(min2.id("z") == Vocab::kUnk);
  CHECK(min2.id("c") != Vocab::kUnk);
}

TEST_CASE("vocab tsv round trip") {
  std::vector<std::string> docs = {"alpha beta beta gamma"};
  Vocab v = build_vocab(docs, 50, 1);
  std::string dir = testsup::make_tmpdir("text-vocab");
  v.save_tsv(dir + "/v.tsv");
  Vocab w = Vocab::load_tsv(dir + "/v.tsv");
  REQUIRE(w.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(w.token(i) == v.token(i));
}

TEST_CASE("split_spans partitions and drops short tails") {
  Vocab v;
  Document doc;
  doc.id = "d1";
  doc.doc_id = "d1";
  for (int i = 0; i < 23; ++i) doc.tokens.push_back(v.add_token("w" + std::to_string(i)));

  auto spans = split_spans(doc, 10, 4);
  REQUIRE(spans.size() == 2);  // 10 + 10, tail of 3 dropped
  CHECK(spans[0].pid == "d1:0");
  CHECK(spans[1].pid == "d1:1");
  CHECK(spans[0].content_size() == 10);
  CHECK(spans[1].content_size() == 10);
  CHECK(spans[0].token_ids.front() == Vocab::kCls);
  CHECK(spans[0].token_ids.back() == Vocab::kSep);
  CHECK(spans[0].content()[0] == doc.tokens[0]);
  CHECK(spans[1].content()[9] == doc.tokens[19]);

  auto spans2 = split_spans(doc, 10, 3);
  REQUIRE(spans2.size() == 3);  // tail of 3 kept when min is 3
  CHECK(spans2[2].content_size() == 3);

  Document tiny;
  tiny.id = "t";
  tiny.doc_id = "t";
  tiny.tokens = {5, 6};
  CHECK(split_spans(tiny, 10, 3).empty());
  CHECK(split_spans(tiny, 10, 2).size() == 1);
}

TEST_CASE("make_pairs yields n-1 adjacent pairs per document") {
  Vocab v;
  Document doc;
  doc.id = "d";
  doc.doc_id = "d";
  for (int i = 0; i < 40; ++i) doc.tokens.push_back(v.add_token("w" + std::to_string(i)));
  auto spans = split_spans(doc, 10, 4);
  REQUIRE(spans.size() == 4);
  auto pairs = make_pairs(spans);
  REQUIRE(pairs.size() == 3);
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].left.pid == spans[i].pid);
    CHECK(pairs[i].right.pid == spans[i + 1].pid);
  }
  CHECK(make_pairs({spans[0]}).empty());
}

TEST_CASE("passage and pair serialization round trips") {
  std::string dir = testsup::make_tmpdir("text-corpus");
  Vocab v;
  Document doc;
  doc.id = "d9";
  doc.doc_id = "d9";
  for (int i = 0; i < 30; ++i) doc.tokens.push_back(v.add_token("w" + std::to_string(i)));
  auto spans = split_spans(doc, 10, 4);
  auto pairs = make_pairs(spans);

  save_passages_jsonl(dir + "/p.jsonl", spans);
  PassageCorpus corpus = load_passages_jsonl(dir + "/p.jsonl");
  REQUIRE(corpus.passages.size() == spans.size());
  for (size_t i = 0; i < spans.size(); ++i) {
    CHECK(corpus.passages[i].pid == spans[i].pid);
    CHECK(corpus.passages[i].token_ids == spans[i].token_ids);
  }
  CHECK(corpus.find("d9:1") != nullptr);
  CHECK(corpus.find("nope") == nullptr);

  save_pairs_jsonl(dir + "/pairs.jsonl", pairs);
  auto loaded = load_pairs_jsonl(dir + "/pairs.jsonl", corpus);
  REQUIRE(loaded.size() == pairs.size());
  CHECK(loaded[0].left.pid == pairs[0].left.pid);
  CHECK(loaded[0].right.token_ids == pairs[0].right.token_ids);

  write_file(dir + "/bad_pairs.jsonl", "{\"left\":\"d9:0\",\"right\":\"ghost\"}\n");
  try {
    load_pairs_jsonl(dir + "/bad_pairs.jsonl", corpus);
    FAIL("expected unknown pid");
  } catch (const Error& e) {
    CHECK(e.code() == "unknown_pid");
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("read_corpus_jsonl validates and falls back doc_id to id") {
  std::string dir = testsup::make_tmpdir("text-read");
  write_file(dir + "/c.jsonl",
             "{\"id\":\"a\",\"text\":\"x y z\"}\n"
             "{\"id\":\"b\",\"doc_id\":\"grp\",\"text\":\"y z\"}\n");
  Vocab v = vocab_of({"x", "y", "z"});
  auto docs = read_corpus_jsonl(dir + "/c.jsonl", v);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].doc_id == "a");
  CHECK(docs[1].doc_id == "grp");
  CHECK(docs[0].tokens.size() == 3);

  write_file(dir + "/dup.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
  CHECK_THROWS_AS(read_corpus_jsonl(dir + "/dup.jsonl", v), Error);
}

TEST_CASE("tfidf idf and weight match hand-computed values") {
  Vocab v = vocab_of({"rare", "common", "other"});
  std::vector<Passage> ps = {passage_of(v, "p1", "rare common"),
                             passage_of(v, "p2", "common other"),
                             passage_of(v, "p3", "common other other")};
  TfIdfTable t = compute_tfidf(ps);
  CHECK(t.num_passages() == 3);
  // N=3, df=1 -> ln(4/2)+1
  CHECK(t.idf(v.id("rare")) == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
  CHECK(t.idf(v.id("rare")) == doctest::Approx(1.6931).epsilon(1e-4));
  CHECK(t.idf(v.id("common")) == doctest::Approx(std::log(4.0 / 4.0) + 1.0));
  // tf=2 within p3 for "other"
  CHECK(t.weight(v.id("other"), ps[2]) ==
        doctest::Approx(2.0 * (std::log(4.0 / 3.0) + 1.0)).epsilon(1e-12));
  // frozen product example: tf=2 with idf 1.6931
  CHECK(2.0 * 1.69314718 == doctest::Approx(3.3863).epsilon(1e-4));
  // unknown token gets the minimum idf in the table
  double min_idf = std::log(4.0 / 4.0) + 1.0;
  CHECK(t.idf(v.id("rare") + 100) == doctest::Approx(min_idf));

  auto w = t.content_weights(ps[0]);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(t.weight(v.id("rare"), ps[0])));
}

TEST_CASE("tfidf table json round trip") {
  Vocab v = vocab_of({"a", "b"});
  std::vector<Passage> ps = {passage_of(v, "p1", "a a b"), passage_of(v, "p2", "b")};
  TfIdfTable t = compute_tfidf(ps);
  std::string dir = testsup::make_tmpdir("text-tfidf");
  t.save(dir + "/t.json");
  TfIdfTable u = TfIdfTable::load(dir + "/t.json");
  CHECK(u.num_passages() == t.num_passages());
  CHECK(u.idf(v.id("a")) == doctest::Approx(t.idf(v.id("a"))).epsilon(1e-15));
  CHECK(u.idf(9999) == doctest::Approx(t.idf(9999)).epsilon(1e-15));
}

TEST_CASE("plm outputs join queries with sep and record k") {
  std::string dir = testsup::make_tmpdir("text-plm");
  Vocab v = vocab_of({"q", "a", "b", "c"});
  write_file(dir + "/gq.jsonl",
             "{\"pid\":\"p1\",\"queries\":[\"q a\",\"q b\",\"q c\"]}\n");
  write_file(dir + "/gc.jsonl", "{\"pid\":\"p1\",\"text\":\"a b\"}\n");
  PlmOutputs out = load_plm_outputs(dir + "/gq.jsonl", dir + "/gc.jsonl", v);
  REQUIRE(out.has_queries("p1"));
  std::vector<int> want = {v.id("q"), v.id("a"), Vocab::kSep, v.id("q"),
                           v.id("b"), Vocab::kSep, v.id("q"), v.id("c")};
  CHECK(out.gen_queries.at("p1") == want);
  CHECK(out.k_queries.at("p1") == 3);
  CHECK(out.gen_continuations.at("p1") == std::vector<int>{v.id("a"), v.id("b")});
}

TEST_CASE("plm outputs partial coverage and absence") {
  std::string dir = testsup::make_tmpdir("text-plm2");
  Vocab v = vocab_of({"q"});
  write_file(dir + "/gq.jsonl", "{\"pid\":\"p1\",\"queries\":[\"q\"]}\n");
  PlmOutputs out = load_plm_outputs(dir + "/gq.jsonl", "", v);
  CHECK(out.has_queries("p1"));
  CHECK_FALSE(out.has_continuation("p1"));
  PlmOutputs none = load_plm_outputs("", "", v);
  CHECK_FALSE(none.has_queries("p1"));
}

TEST_CASE("plm outputs reject empty generations and unknown pids") {
  std::string dir = testsup::make_tmpdir("text-plm3");
  Vocab v = vocab_of({"q"});
  write_file(dir + "/empty.jsonl", "{\"pid\":\"p1\",\"queries\":[]}\n");
  try {
    load_plm_outputs(dir + "/empty.jsonl", "", v);
    FAIL("expected empty_generation");
  } catch (const Error& e) {
    CHECK(e.code() == "empty_generation");
  }
  write_file(dir + "/blank.jsonl", "{\"pid\":\"p1\",\"text\":\"...\"}\n");
  CHECK_THROWS_AS(load_plm_outputs("", dir + "/blank.jsonl", v), Error);

  write_file(dir + "/gq.jsonl",
             "{\"pid\":\"zz\",\"queries\":[\"q\"]}\n{\"pid\":\"aa\",\"queries\":[\"q\"]}\n");
  std::unordered_set<std::string> known = {"p1"};
  try {
    load_plm_outputs(dir + "/gq.jsonl", "", v, &known);
    FAIL("expected unknown_pid");
  } catch (const Error& e) {
    CHECK(e.code() == "unknown_pid");
    std::string msg = e.what();
    CHECK(msg.find("aa") != std::string::npos);
    CHECK(msg.find("zz") != std::string::npos);
    CHECK(msg.find("aa") < msg.find("zz"));  // sorted listing
  }
  write_file(dir + "/dup.jsonl",
             "{\"pid\":\"p1\",\"queries\":[\"q\"]}\n{\"pid\":\"p1\",\"queries\":[\"q\"]}\n");
  try {
    load_plm_outputs(dir + "/dup.jsonl", "", v);
    FAIL("expected duplicate pid error");
  } catch (const Error& e) {
    CHECK(e.code() == "format");
  }
}
