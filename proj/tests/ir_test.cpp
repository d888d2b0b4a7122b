#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "master/ir/index.hpp"
#include "master/ir/metrics.hpp"
#include "master/util/rng.hpp"
#include "support/synth.hpp"

using namespace master;
using ir::DenseIndex;
using ir::Qrels;
using ir::Run;
using nn::Mat;

namespace {

DenseIndex random_index(int n, int dim, uint64_t seed) {
  DenseIndex index;
  index.vectors.resize(n, dim);
  index.pids.resize(static_cast<size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) index.vectors(i, j) = static_cast<float>(rng.normal(0.0, 1.0));
    index.pids[static_cast<size_t>(i)] = "p" + std::to_string(i);
  }
  index.fingerprint = "deadbeefdeadbeef";
  return index;
}

std::vector<ir::SearchHit> naive_search(const DenseIndex& index, const Mat<float>& q, int k) {
  std::vector<std::pair<float, std::string>> scored;
  for (Eigen::Index i = 0; i < index.size(); ++i)
    scored.emplace_back(q.row(0).dot(index.vectors.row(i)), index.pids[static_cast<size_t>(i)]);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  scored.resize(std::min<size_t>(scored.size(), static_cast<size_t>(k)));
  std::vector<ir::SearchHit> hits;
  for (auto& [s, pid] : scored) hits.push_back({pid, s});
  return hits;
}

}  // namespace

TEST_CASE("search agrees with a naive scan") {
  DenseIndex index = random_index(60, 8, 1);
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    Mat<float> q(1, 8);
    for (int j = 0; j < 8; ++j) q(0, j) = static_cast<float>(rng.normal(0.0, 1.0));
    int k = 1 + static_cast<int>(rng.below(60));
    auto fast = ir::search(index, q, k);
    auto slow = naive_search(index, q, k);
    REQUIRE(fast.size() == slow.size());
    for (size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i].pid == slow[i].pid);
      CHECK(fast[i].score == slow[i].score);
    }
  }
}

TEST_CASE("ties break by ascending pid and k clamps to the index") {
  DenseIndex index;
  index.vectors = Mat<float>::Zero(4, 2);
  index.vectors << 1, 0, 1, 0, 0, 1, 1, 0;
  index.pids = {"zz", "aa", "mm", "bb"};
  Mat<float> q(1, 2);
  q << 1, 0;
  auto hits = ir::search(index, q, 10);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].pid == "aa");
  CHECK(hits[1].pid == "bb");
  CHECK(hits[2].pid == "zz");
  CHECK(hits[3].pid == "mm");

  CHECK(ir::search(index, q, 2).size() == 2);
  CHECK_THROWS_AS(ir::search(index, q, 0), Error);
  Mat<float> wrong(1, 3);
  wrong << 1, 0, 0;
  try {
    ir::search(index, wrong, 1);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == "shape");
  }
}

TEST_CASE("index round trips through disk") {
  std::string dir = testsup::make_tmpdir("ir-index");
  DenseIndex index = random_index(12, 6, 3);
  ir::save_index(dir, index);
  DenseIndex back = ir::load_index(dir);
  CHECK(back.vectors == index.vectors);
  CHECK(back.pids == index.pids);
  CHECK(back.fingerprint == index.fingerprint);

  // corrupting the blob is caught by the size check
  write_file(dir + "/vectors.f32", read_file(dir + "/vectors.f32") + "x");
  CHECK_THROWS_AS(ir::load_index(dir), Error);
}

TEST_CASE("mrr oracle values") {
  Qrels qrels;
  qrels.grades["q1"]["rel"] = 1;
  qrels.grades["q2"]["rel2"] = 2;
  Run run;
  run["q1"] = {{"a", 9}, {"b", 8}, {"rel", 7}, {"c", 6}};
  run["q2"] = {{"rel2", 5}, {"x", 4}};
  auto report = ir::evaluate(run, qrels, {10});
  CHECK(report.per_query["q1"]["mrr"][10] == doctest::Approx(1.0 / 3.0));
  CHECK(report.per_query["q2"]["mrr"][10] == doctest::Approx(1.0));
  // mean of rank-3 and rank-1 reciprocal ranks
  CHECK(report.mrr(10) == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0));

  // ranks 1 and 4 average to 0.625
  Run run2;
  run2["q1"] = {{"rel", 9}, {"b", 8}, {"c", 7}, {"d", 6}};
  run2["q2"] = {{"x", 9}, {"y", 8}, {"z", 7}, {"rel2", 6}};
  auto r2 = ir::evaluate(run2, qrels, {10});
  CHECK(r2.mrr(10) == doctest::Approx(0.625));

  // outside the cutoff the reciprocal rank is zero
  auto r3 = ir::evaluate(run, qrels, {2});
  CHECK(r3.per_query["q1"]["mrr"][2] == 0.0);
}

TEST_CASE("recall oracle values") {
  Qrels qrels;
  qrels.grades["q"]["r1"] = 1;
  qrels.grades["q"]["r2"] = 2;
  qrels.grades["q"]["r3"] = 1;
  qrels.grades["q"]["junk"] = 0;  // judged nonrelevant does not count
  Run run;
  run["q"] = {{"r1", 9}, {"x", 8}, {"r2", 7}, {"y", 6}, {"r3", 5}};
  auto report = ir::evaluate(run, qrels, {1, 3, 5, 100});
  CHECK(report.recall(1) == doctest::Approx(1.0 / 3.0));
  CHECK(report.recall(3) == doctest::Approx(2.0 / 3.0));
  CHECK(report.recall(5) == doctest::Approx(1.0));
  CHECK(report.recall(100) == doctest::Approx(1.0));
  // recall is monotone in the cutoff
  CHECK(report.recall(1) <= report.recall(3));
  CHECK(report.recall(3) <= report.recall(5));
}

TEST_CASE("ndcg oracle values") {
  // single relevant grade-1 passage at rank 2: dcg = 1/log2(3), idcg = 1
  Qrels qrels;
  qrels.grades["q"]["rel"] = 1;
  Run run;
  run["q"] = {{"x", 9}, {"rel", 8}};
  auto report = ir::evaluate(run, qrels, {10});
  CHECK(report.ndcg(10) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(report.ndcg(10) == doctest::Approx(0.6309).epsilon(1e-3));

  // graded: perfect ordering scores 1, inverted less
  Qrels graded;
  graded.grades["q"]["hi"] = 2;
  graded.grades["q"]["lo"] = 1;
  Run perfect, inverted;
  perfect["q"] = {{"hi", 9}, {"lo", 8}};
  inverted["q"] = {{"lo", 9}, {"hi", 8}};
  CHECK(ir::evaluate(perfect, graded, {10}).ndcg(10) == doctest::Approx(1.0));
  double inv = ir::evaluate(inverted, graded, {10}).ndcg(10);
  CHECK(inv < 1.0);
  // hand value: dcg = 1 + 3/log2(3), idcg = 3 + 1/log2(3)
  double want = (1.0 + 3.0 / std::log2(3.0)) / (3.0 + 1.0 / std::log2(3.0));
  CHECK(inv == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("evaluate is invariant to score scale and counts skips") {
  Qrels qrels;
  qrels.grades["q1"]["rel"] = 1;
  qrels.grades["q3"]["other"] = 0;  // judged, nothing relevant
  Run run;
  run["q1"] = {{"rel", 0.001}, {"x", 0.0005}};
  run["q2"] = {{"y", 9}};  // unjudged
  run["q3"] = {{"other", 3}};
  auto report = ir::evaluate(run, qrels, {10});
  CHECK(report.evaluated == 1);
  CHECK(report.skipped_unjudged == 1);
  CHECK(report.skipped_no_relevant == 1);
  CHECK(report.mrr(10) == doctest::Approx(1.0));

  Run scaled;
  scaled["q1"] = {{"rel", 1000.0}, {"x", 500.0}};
  CHECK(ir::evaluate(scaled, qrels, {10}).mrr(10) == report.mrr(10));

  Qrels empty;
  try {
    ir::evaluate(run, empty, {10});
    FAIL("expected no_queries");
  } catch (const Error& e) {
    CHECK(e.code() == "no_queries");
  }
  CHECK_THROWS_AS(ir::evaluate(run, qrels, {}), Error);
  CHECK_THROWS_AS(ir::evaluate(run, qrels, {0}), Error);

  json j = report.to_json();
  CHECK(j["evaluated"] == 1);
  CHECK(j["mean"]["mrr"]["10"] == doctest::Approx(1.0));
}

TEST_CASE("run and qrels files round trip in trec format") {
  std::string dir = testsup::make_tmpdir("ir-trec");
  Run run;
  run["q2"] = {{"pa", 3.5}, {"pb", 2.25}};
  run["q1"] = {{"pc", -1.0}};
  ir::save_run_trec(dir + "/run.txt", run, "master");
  Run back = ir::load_run_trec(dir + "/run.txt");
  REQUIRE(back.size() == 2);
  REQUIRE(back["q2"].size() == 2);
  CHECK(back["q2"][0].first == "pa");
  CHECK(back["q2"][0].second == doctest::Approx(3.5));
  CHECK(back["q1"][0].second == doctest::Approx(-1.0));

  std::string text = read_file(dir + "/run.txt");
  CHECK(text.find("q2 Q0 pa 1 ") != std::string::npos);
  CHECK(text.find(" master\n") != std::string::npos);

  Qrels qrels;
  qrels.grades["q1"]["pa"] = 2;
  qrels.grades["q1"]["pb"] = 0;
  qrels.save_trec(dir + "/qrels.txt");
  Qrels qback = Qrels::load_trec(dir + "/qrels.txt");
  CHECK(qback.grades == qrels.grades);
  CHECK(qback.has_relevant("q1"));
  qback.grades["q1"]["pa"] = 0;
  CHECK_FALSE(qback.has_relevant("q1"));

  write_file(dir + "/bad.txt", "q1 Q0 pa notarank 1.0 tag\n");
  try {
    ir::load_run_trec(dir + "/bad.txt");
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.code() == "format");
  }
  CHECK_THROWS_AS(Qrels::load_trec(dir + "/missing.txt"), Error);
}

TEST_CASE("encode_corpus is thread-count invariant and stamps the fingerprint") {
  model::ModelConfig cfg;
  cfg.vocab = 30;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.max_positions = 16;
  model::BottleneckModel<float> m(cfg);
  m.init_random(44);

  text::PassageCorpus corpus;
  Rng rng(45);
  for (int i = 0; i < 9; ++i) {
    text::Passage p;
    p.pid = "p" + std::to_string(i);
    p.doc_id = p.pid;
    p.token_ids.push_back(text::Vocab::kCls);
    for (int t = 0; t < 6; ++t)
      p.token_ids.push_back(text::Vocab::kNumSpecials + static_cast<int>(rng.below(25)));
    p.token_ids.push_back(text::Vocab::kSep);
    corpus.passages.push_back(std::move(p));
  }
  corpus.rebuild_index();

  DenseIndex one = ir::encode_corpus(m, corpus, "fp1234", 1);
  DenseIndex three = ir::encode_corpus(m, corpus, "fp1234", 3);
  CHECK(one.vectors == three.vectors);
  CHECK(one.pids == three.pids);
  CHECK(one.fingerprint == "fp1234");
  CHECK(one.dim() == 8);
  CHECK(one.size() == 9);
  CHECK(one.vectors.row(2) == Mat<float>(m.encode_vector(corpus.passages[2].token_ids)).row(0));
}
