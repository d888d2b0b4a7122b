#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "master/mask/masking.hpp"
#include "master/util/io.hpp"
#include "support/synth.hpp"

using namespace master;
using namespace master::mask;
using text::Vocab;

namespace {

std::vector<int> content_seq(int n, int first_id = Vocab::kNumSpecials) {
  std::vector<int> seq;
  seq.push_back(Vocab::kCls);
  for (int i = 0; i < n; ++i) seq.push_back(first_id + i);
  seq.push_back(Vocab::kSep);
  return seq;
}

// A df table crafted so idf(token)=ln(N+1)+1 for df=0 entries and 1.0 for
// df=N entries. N = round(e^19 - 1) puts the df=0 idf at 20.
text::TfIdfTable make_skew_table(const std::string& dir, const std::vector<int>& rare,
                                 const std::vector<int>& common) {
  const long long n = 178482300;
  std::string df = "{";
  bool first = true;
  for (int t : rare) {
    df += (first ? "" : ",") + ("\"" + std::to_string(t) + "\":0");
    first = false;
  }
  for (int t : common) {
    df += (first ? "" : ",") + ("\"" + std::to_string(t) + "\":" + std::to_string(n));
    first = false;
  }
  df += "}";
  std::string path = dir + "/skew.json";
  write_file(path, "{\"num_passages\":" + std::to_string(n) + ",\"df\":" + df + "}\n");
  return text::TfIdfTable::load(path);
}

}  // namespace

TEST_CASE("mask count follows ceil with floor one and exhaustion cap") {
  Rng rng(7);
  CHECK(mask_uniform(content_seq(10), 0.3, rng).masked_positions.size() == 3);
  CHECK(mask_uniform(content_seq(7), 0.5, rng).masked_positions.size() == 4);
  CHECK(mask_uniform(content_seq(10), 0.001, rng).masked_positions.size() == 1);
  CHECK(mask_uniform(content_seq(10), 0.95, rng).masked_positions.size() == 10);
  CHECK(mask_uniform(content_seq(3), 0.99, rng).masked_positions.size() == 3);
}

TEST_CASE("masked view replaces chosen positions with MASK and keeps source") {
  Rng rng(11);
  auto seq = content_seq(12);
  MaskedView v = mask_uniform(seq, 0.5, rng);
  CHECK(v.source == seq);
  CHECK(v.rate == 0.5);
  CHECK(std::is_sorted(v.masked_positions.begin(), v.masked_positions.end()));
  std::set<int> masked(v.masked_positions.begin(), v.masked_positions.end());
  for (size_t i = 0; i < seq.size(); ++i) {
    if (masked.count(static_cast<int>(i)))
      CHECK(v.input_tokens[i] == Vocab::kMask);
    else
      CHECK(v.input_tokens[i] == seq[i]);
  }
}

TEST_CASE("special tokens are never masked") {
  std::vector<int> seq = {Vocab::kCls, Vocab::kUnk, 7, Vocab::kPad, 9, Vocab::kSep};
  auto maskable = maskable_positions(seq);
  CHECK(maskable == std::vector<int>{2, 4});
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    MaskedView v = mask_uniform(seq, 0.9, rng);
    for (int pos : v.masked_positions) CHECK((pos == 2 || pos == 4));
  }
  std::vector<int> all_special = {Vocab::kCls, Vocab::kSep};
  CHECK_THROWS_AS(mask_uniform(all_special, 0.5, rng), Error);
  try {
    mask_uniform(all_special, 0.5, rng);
  } catch (const Error& e) {
    CHECK(e.code() == "nothing_to_mask");
  }
}

TEST_CASE("same seed reproduces the same mask") {
  auto seq = content_seq(20);
  Rng a(42), b(42);
  MaskedView va = mask_uniform(seq, 0.3, a);
  MaskedView vb = mask_uniform(seq, 0.3, b);
  CHECK(va.masked_positions == vb.masked_positions);
  Rng c(43);
  bool differs = false;
  for (int t = 0; t < 16 && !differs; ++t)
    differs = mask_uniform(seq, 0.3, c).masked_positions != va.masked_positions;
  CHECK(differs);
}

TEST_CASE("uniform masking hits every position at its expected frequency") {
  const int kTrials = 10000;
  auto seq = content_seq(10);
  std::vector<int> hits(seq.size(), 0);
  Rng rng(101);
  for (int t = 0; t < kTrials; ++t)
    for (int pos : mask_uniform(seq, 0.3, rng).masked_positions) ++hits[pos];
  for (int pos = 1; pos <= 10; ++pos) {
    double freq = static_cast<double>(hits[pos]) / kTrials;
    CHECK(freq == doctest::Approx(0.3).epsilon(0.1));
    CHECK(std::abs(freq - 0.3) < 0.03);
  }
}

TEST_CASE("tfidf masking with equal weights is uniform within three percent") {
  std::string dir = testsup::make_tmpdir("mask-flat");
  std::vector<int> tokens;
  for (int i = 0; i < 10; ++i) tokens.push_back(Vocab::kNumSpecials + i);
  text::TfIdfTable table = make_skew_table(dir, {}, tokens);
  auto seq = content_seq(10);
  const int kTrials = 10000;
  std::vector<int> hits(seq.size(), 0);
  Rng rng(202);
  for (int t = 0; t < kTrials; ++t)
    for (int pos : mask_tfidf(seq, 0.3, table, rng).masked_positions) ++hits[pos];
  for (int pos = 1; pos <= 10; ++pos) {
    double freq = static_cast<double>(hits[pos]) / kTrials;
    CHECK(std::abs(freq - 0.3) < 0.03);
  }
}

TEST_CASE("tfidf single draw probability matches weight over total weight") {
  std::string dir = testsup::make_tmpdir("mask-law");
  int heavy = Vocab::kNumSpecials;
  std::vector<int> commons;
  for (int i = 1; i <= 9; ++i) commons.push_back(Vocab::kNumSpecials + i);
  text::TfIdfTable table = make_skew_table(dir, {heavy}, commons);
  double w_heavy = table.idf(heavy);
  CHECK(w_heavy == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(table.idf(commons[0]) == doctest::Approx(1.0));

  auto seq = content_seq(10);  // heavy at position 1, commons after
  double p_heavy = w_heavy / (w_heavy + 9.0);
  const int kTrials = 10000;
  int heavy_hits = 0;
  Rng rng(303);
  for (int t = 0; t < kTrials; ++t) {
    MaskedView v = mask_tfidf(seq, 0.05, table, rng);  // ceil(0.5) -> one draw
    REQUIRE(v.masked_positions.size() == 1);
    if (v.masked_positions[0] == 1) ++heavy_hits;
  }
  double freq = static_cast<double>(heavy_hits) / kTrials;
  CHECK(std::abs(freq - p_heavy) < 0.02);
}

TEST_CASE("heavily weighted token dominates tfidf masking") {
  std::string dir = testsup::make_tmpdir("mask-heavy");
  int heavy = Vocab::kNumSpecials;
  std::vector<int> commons;
  for (int i = 1; i <= 9; ++i) commons.push_back(Vocab::kNumSpecials + i);
  text::TfIdfTable table = make_skew_table(dir, {heavy}, commons);

  // Two heavy occurrences: weight(heavy) = tf * idf = 40 per position against
  // nine positions of weight 1. Eleven maskable, rate 0.1 -> two draws.
  std::vector<int> seq = {Vocab::kCls, heavy, heavy};
  for (int c : commons) seq.push_back(c);
  seq.push_back(Vocab::kSep);

  const int kTrials = 10000;
  int token_masked = 0;
  Rng rng(404);
  for (int t = 0; t < kTrials; ++t) {
    MaskedView v = mask_tfidf(seq, 0.1, table, rng);
    REQUIRE(v.masked_positions.size() == 2);
    for (int pos : v.masked_positions)
      if (pos == 1 || pos == 2) {
        ++token_masked;
        break;
      }
  }
  CHECK(static_cast<double>(token_masked) / kTrials >= 0.85);
}

TEST_CASE("high rate masks every maskable position regardless of weights") {
  std::string dir = testsup::make_tmpdir("mask-exhaust");
  int heavy = Vocab::kNumSpecials;
  std::vector<int> commons;
  for (int i = 1; i <= 9; ++i) commons.push_back(Vocab::kNumSpecials + i);
  text::TfIdfTable table = make_skew_table(dir, {heavy}, commons);
  auto seq = content_seq(10);
  Rng rng(505);
  MaskedView v = mask_tfidf(seq, 0.999, table, rng);
  std::vector<int> want = maskable_positions(seq);
  CHECK(v.masked_positions == want);
}

TEST_CASE("complement masks exactly the untouched maskable positions") {
  auto seq = content_seq(8);
  MaskedView enc;
  enc.source = seq;
  enc.input_tokens = seq;
  enc.masked_positions = {2, 5};
  enc.input_tokens[2] = Vocab::kMask;
  enc.input_tokens[5] = Vocab::kMask;
  enc.rate = 0.25;
  MaskedView dec = mask_complement(enc);
  CHECK(dec.masked_positions == std::vector<int>{1, 3, 4, 6, 7, 8});
  CHECK(dec.rate == doctest::Approx(6.0 / 8.0));
  for (int pos : dec.masked_positions) CHECK(dec.input_tokens[pos] == Vocab::kMask);
  CHECK(dec.input_tokens[2] == seq[2]);
  CHECK(dec.input_tokens[5] == seq[5]);
}

TEST_CASE("encoder and complement views partition the maskable set") {
  auto seq = content_seq(17);
  auto maskable = maskable_positions(seq);
  Rng rng(606);
  for (int t = 0; t < 500; ++t) {
    MaskedView enc = mask_uniform(seq, 0.3, rng);
    MaskedView dec = mask_complement(enc);
    std::set<int> u(enc.masked_positions.begin(), enc.masked_positions.end());
    for (int pos : dec.masked_positions) {
      CHECK(u.count(pos) == 0);
      u.insert(pos);
    }
    CHECK(u.size() == maskable.size());
  }
}

TEST_CASE("masking config bounds") {
  MaskingConfig ok;
  CHECK_NOTHROW(ok.validate());
  MaskingConfig bad_alpha;
  bad_alpha.alpha = 0.0;
  CHECK_THROWS_AS(bad_alpha.validate(), Error);
  MaskingConfig bad_beta;
  bad_beta.beta = 0.4;
  try {
    bad_beta.validate();
    FAIL("expected bad_config");
  } catch (const Error& e) {
    CHECK(e.code() == "bad_config");
  }
}

TEST_CASE("task names round trip") {
  for (Task t : kAllTasks) CHECK(task_from_name(task_name(t)) == t);
  CHECK_THROWS_AS(task_from_name("xyz"), Error);
}

TEST_CASE("assembled example carries one view per available task") {
  std::string dir = testsup::make_tmpdir("mask-assemble");
  text::Vocab v;
  for (int i = 0; i < 30; ++i) v.add_token("w" + std::to_string(i));

  text::Document doc;
  doc.id = "d";
  doc.doc_id = "d";
  for (int i = 0; i < 24; ++i) doc.tokens.push_back(Vocab::kNumSpecials + (i % 30));
  auto spans = text::split_spans(doc, 12, 4);
  auto pairs = text::make_pairs(spans);
  REQUIRE(pairs.size() == 1);
  text::TfIdfTable tfidf = text::compute_tfidf(spans);

  text::PlmOutputs plm;
  plm.gen_queries["d:0"] = {6, 7, Vocab::kSep, 8, 9};
  plm.k_queries["d:0"] = 2;
  plm.gen_continuations["d:0"] = {10, 11, 12, 13};

  MaskingConfig cfg;
  Rng rng(707);
  PretrainExample ex = assemble_pretrain_example(pairs[0], plm, cfg, tfidf, rng);
  CHECK(ex.pid == "d:0");
  CHECK(ex.decoder_views.size() == 5);
  CHECK(ex.encoder_view.source == pairs[0].left.token_ids);
  CHECK(ex.decoder_views.at(Task::Mkp).source == pairs[0].left.token_ids);
  CHECK(ex.decoder_views.at(Task::Npr).source == pairs[0].right.token_ids);
  CHECK(ex.decoder_views.at(Task::Dor).source == plm.gen_queries["d:0"]);
  CHECK(ex.decoder_views.at(Task::Gor).source == plm.gen_continuations["d:0"]);

  // CMP is the complement of this example's encoder view.
  std::set<int> enc(ex.encoder_view.masked_positions.begin(),
                    ex.encoder_view.masked_positions.end());
  for (int pos : ex.decoder_views.at(Task::Cmp).masked_positions) CHECK(enc.count(pos) == 0);

  text::PlmOutputs partial;
  partial.gen_continuations["d:0"] = {10, 11, 12, 13};
  Rng rng2(707);
  PretrainExample ex2 = assemble_pretrain_example(pairs[0], partial, cfg, tfidf, rng2);
  CHECK(ex2.decoder_views.count(Task::Dor) == 0);
  CHECK(ex2.decoder_views.count(Task::Gor) == 1);

  // Absent tasks consume no randomness: replaying the draw order by hand
  // lands the GOR view on the same positions.
  Rng replay(707);
  mask_uniform(pairs[0].left.token_ids, cfg.alpha, replay);
  mask_tfidf(pairs[0].left.token_ids, cfg.beta, tfidf, replay);
  mask_tfidf(pairs[0].right.token_ids, cfg.beta, tfidf, replay);
  MaskedView gor = mask_uniform(partial.gen_continuations["d:0"], cfg.beta, replay);
  CHECK(gor.masked_positions == ex2.decoder_views.at(Task::Gor).masked_positions);

  // Error paths keep the view tag in front.
  text::PassagePair empty_pair = pairs[0];
  empty_pair.left.token_ids = {Vocab::kCls, Vocab::kSep};
  Rng rng3(1);
  try {
    assemble_pretrain_example(empty_pair, plm, cfg, tfidf, rng3);
    FAIL("expected nothing_to_mask");
  } catch (const Error& e) {
    CHECK(e.code() == "nothing_to_mask");
    CHECK(std::string(e.what()).find("encoder:") == 0);
  }

  std::vector<PretrainExample> examples = {ex, ex2};
  dump_examples_jsonl(dir + "/ex.jsonl", examples);
  std::string text = read_file(dir + "/ex.jsonl");
  size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == 2);
  json first = json::parse(text.substr(0, text.find('\n')));
  CHECK(first["pid"] == "d:0");
  CHECK(first["views"].contains("encoder"));
  CHECK(first["views"].contains("mkp"));
  CHECK(first["views"]["gor"]["positions"].size() ==
        ex.decoder_views.at(Task::Gor).masked_positions.size());
}
