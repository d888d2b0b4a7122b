#include "master/ir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "master/util/error.hpp"

namespace master::ir {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

bool Qrels::has_relevant(const std::string& qid) const {
  auto it = grades.find(qid);
  if (it == grades.end()) return false;
  for (const auto& [pid, g] : it->second)
    if (g >= 1) return true;
  return false;
}

Qrels Qrels::load_trec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  Qrels q;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_ws(line);
    if (f.size() != 4)
      fail("format", path + ":" + std::to_string(lineno) + ": expected 'qid 0 pid rel'");
    int rel;
    try {
      rel = std::stoi(f[3]);
    } catch (const std::exception&) {
      fail("format", path + ":" + std::to_string(lineno) + ": bad relevance '" + f[3] + "'");
    }
    if (rel < 0) fail("format", path + ":" + std::to_string(lineno) + ": negative relevance");
    q.grades[f[0]][f[2]] = rel;
  }
  return q;
}

void Qrels::save_trec(const std::string& path) const {
  std::ostringstream out;
  for (const auto& [qid, pids] : grades)
    for (const auto& [pid, g] : pids) out << qid << " 0 " << pid << ' ' << g << '\n';
  write_file(path, out.str());
}

void save_run_trec(const std::string& path, const Run& run, const std::string& tag) {
  std::ostringstream out;
  char score[32];
  for (const auto& [qid, hits] : run) {
    int rank = 1;
    for (const auto& [pid, s] : hits) {
      std::snprintf(score, sizeof(score), "%.6f", s);
      out << qid << " Q0 " << pid << ' ' << rank << ' ' << score << ' ' << tag << '\n';
      ++rank;
    }
  }
  write_file(path, out.str());
}

Run load_run_trec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open " + path);
  Run run;
  std::map<std::string, std::vector<std::pair<int, std::pair<std::string, double>>>> staged;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_ws(line);
    if (f.size() != 6)
      fail("format", path + ":" + std::to_string(lineno) + ": expected 'qid Q0 pid rank score tag'");
    try {
      staged[f[0]].push_back({std::stoi(f[3]), {f[2], std::stod(f[4])}});
    } catch (const std::exception&) {
      fail("format", path + ":" + std::to_string(lineno) + ": bad rank or score");
    }
  }
  for (auto& [qid, hits] : staged) {
    std::sort(hits.begin(), hits.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& out = run[qid];
    out.reserve(hits.size());
    for (auto& [rank, hit] : hits) out.push_back(std::move(hit));
  }
  return run;
}

MetricsReport evaluate(const Run& run, const Qrels& qrels, const std::vector<int>& cutoffs) {
  if (cutoffs.empty()) fail("bad_args", "evaluate: no cutoffs");
  for (int k : cutoffs)
    if (k < 1) fail("bad_args", "evaluate: cutoffs must be >= 1");
  MetricsReport report;
  report.cutoffs = cutoffs;
  for (const char* m : {"mrr", "recall", "ndcg"})
    for (int k : cutoffs) report.mean[m][k] = 0.0;

  for (const auto& [qid, hits] : run) {
    auto jt = qrels.grades.find(qid);
    if (jt == qrels.grades.end()) {
      ++report.skipped_unjudged;
      continue;
    }
    const auto& judged = jt->second;
    std::vector<int> rel_grades;
    for (const auto& [pid, g] : judged)
      if (g >= 1) rel_grades.push_back(g);
    if (rel_grades.empty()) {
      ++report.skipped_no_relevant;
      continue;
    }
    std::sort(rel_grades.begin(), rel_grades.end(), std::greater<int>());
    ++report.evaluated;

    auto grade_of = [&](const std::string& pid) {
      auto it = judged.find(pid);
      return it == judged.end() ? 0 : it->second;
    };

    for (int k : cutoffs) {
      size_t depth = std::min(hits.size(), static_cast<size_t>(k));
      double mrr = 0.0, dcg = 0.0;
      int found_rel = 0;
      for (size_t i = 0; i < depth; ++i) {
        int g = grade_of(hits[i].first);
        if (g >= 1) {
          if (mrr == 0.0) mrr = 1.0 / static_cast<double>(i + 1);
          ++found_rel;
        }
        if (g > 0)
          dcg += (std::pow(2.0, g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
      }
      double idcg = 0.0;
      for (size_t i = 0; i < std::min(rel_grades.size(), static_cast<size_t>(k)); ++i)
        idcg += (std::pow(2.0, rel_grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
      double recall = static_cast<double>(found_rel) / static_cast<double>(rel_grades.size());
      double ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
      report.per_query[qid]["mrr"][k] = mrr;
      report.per_query[qid]["recall"][k] = recall;
      report.per_query[qid]["ndcg"][k] = ndcg;
      report.mean["mrr"][k] += mrr;
      report.mean["recall"][k] += recall;
      report.mean["ndcg"][k] += ndcg;
    }
  }
  if (report.evaluated == 0) fail("no_queries", "evaluate: no judged query with relevant passages");
  for (auto& [m, by_k] : report.mean)
    for (auto& [k, v] : by_k) v /= static_cast<double>(report.evaluated);
  return report;
}

json MetricsReport::to_json() const {
  json j;
  j["cutoffs"] = cutoffs;
  json means = json::object();
  for (const auto& [m, by_k] : mean) {
    json mk = json::object();
    for (const auto& [k, v] : by_k) mk[std::to_string(k)] = v;
    means[m] = mk;
  }
  j["mean"] = means;
  json pq = json::object();
  for (const auto& [qid, metrics] : per_query) {
    json qj = json::object();
    for (const auto& [m, by_k] : metrics) {
      json mk = json::object();
      for (const auto& [k, v] : by_k) mk[std::to_string(k)] = v;
      qj[m] = mk;
    }
    pq[qid] = qj;
  }
  j["per_query"] = pq;
  j["evaluated"] = evaluated;
  j["skipped_unjudged"] = skipped_unjudged;
  j["skipped_no_relevant"] = skipped_no_relevant;
  return j;
}

}  // namespace master::ir
