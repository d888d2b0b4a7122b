#pragma once

#include <map>
#include <string>
#include <vector>

#include "master/util/io.hpp"

namespace master::ir {

struct Qrels {
  // qid -> pid -> grade (>= 0)
  std::map<std::string, std::map<std::string, int>> grades;

  bool has_relevant(const std::string& qid) const;
  static Qrels load_trec(const std::string& path);
  void save_trec(const std::string& path) const;
};

// qid -> ranked (pid, score), best first.
using Run = std::map<std::string, std::vector<std::pair<std::string, double>>>;

void save_run_trec(const std::string& path, const Run& run, const std::string& tag);
Run load_run_trec(const std::string& path);

struct MetricsReport {
  std::vector<int> cutoffs;
  // metric -> cutoff -> mean over evaluated queries
  std::map<std::string, std::map<int, double>> mean;
  // qid -> metric -> cutoff -> value
  std::map<std::string, std::map<std::string, std::map<int, double>>> per_query;
  int evaluated = 0;
  int skipped_unjudged = 0;     // in run, absent from qrels
  int skipped_no_relevant = 0;  // judged but no grade >= 1

  double mrr(int k) const { return mean.at("mrr").at(k); }
  double recall(int k) const { return mean.at("recall").at(k); }
  double ndcg(int k) const { return mean.at("ndcg").at(k); }

  json to_json() const;
};

// MRR@k: 1/rank of the first grade>=1 hit within top-k, else 0.
// Recall@k: fraction of grade>=1 pids retrieved in top-k.
// nDCG@k: gain 2^grade - 1, discount log2(rank + 1), normalized by the ideal.
MetricsReport evaluate(const Run& run, const Qrels& qrels, const std::vector<int>& cutoffs);

}  // namespace master::ir
