#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "master/ir/index.hpp"
#include "master/ir/metrics.hpp"
#include "master/model/model.hpp"
#include "master/pretrain/pretrain.hpp"
#include "master/util/log.hpp"

namespace master::ft {

struct TrainingExample {
  std::string qid;
  std::string query_text;
  std::vector<int> query_tokens;  // bare content tokens, no specials
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  std::map<std::string, double> teacher_scores;
};

struct FinetuneConfig {
  double tau = 1.0;
  int negatives = 8;  // mined / lexical negatives per query
  bool in_batch = true;
  bool in_batch_distil = false;
  int batch_size = 8;
  int epochs_retriever = 2;
  int epochs_reranker = 2;
  int epochs_distil = 2;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 1;
  int eval_mrr_cutoff = 10;
  int eval_recall_cutoff = 50;

  void validate() const {
    if (tau <= 0) fail("bad_config", "tau must be positive");
    if (negatives < 1) fail("bad_config", "negatives must be >= 1");
    if (batch_size < 1) fail("bad_config", "batch_size must be >= 1");
    if (epochs_retriever < 1 || epochs_reranker < 1 || epochs_distil < 1)
      fail("bad_config", "epoch counts must be >= 1");
    if (lr <= 0) fail("bad_config", "lr must be positive");
    if (eval_mrr_cutoff < 1 || eval_recall_cutoff < 1) fail("bad_config", "cutoffs must be >= 1");
  }
};

inline std::vector<TrainingExample> load_training_examples(const std::string& path,
                                                           const text::Vocab& vocab,
                                                           bool require_positives) {
  std::vector<TrainingExample> out;
  std::set<std::string> seen_qids;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    TrainingExample ex;
    ex.qid = require_string(obj, "qid", where);
    if (!seen_qids.insert(ex.qid).second) fail("format", where + ": duplicate qid '" + ex.qid + "'");
    ex.query_text = require_string(obj, "query", where);
    ex.query_tokens = text::encode_text(vocab, ex.query_text);
    if (ex.query_tokens.empty()) fail("format", where + ": query tokenizes to nothing");
    if (obj.contains("positives")) {
      if (!obj["positives"].is_array()) fail("format", where + ": 'positives' must be an array");
      ex.positives = obj["positives"].get<std::vector<std::string>>();
    }
    if (require_positives && ex.positives.empty())
      fail("format", where + ": at least one positive required");
    if (obj.contains("negatives")) {
      if (!obj["negatives"].is_array()) fail("format", where + ": 'negatives' must be an array");
      ex.negatives = obj["negatives"].get<std::vector<std::string>>();
    }
    for (const auto& pid : ex.negatives)
      if (std::find(ex.positives.begin(), ex.positives.end(), pid) != ex.positives.end())
        fail("format", where + ": pid '" + pid + "' listed as both positive and negative");
    if (obj.contains("teacher_scores")) {
      if (!obj["teacher_scores"].is_object()) fail("format", where + ": 'teacher_scores' must be an object");
      for (const auto& [pid, v] : obj["teacher_scores"].items())
        ex.teacher_scores[pid] = v.get<double>();
      for (const auto& pid : ex.positives)
        if (!ex.teacher_scores.count(pid))
          fail("format", where + ": teacher_scores missing pid '" + pid + "'");
      for (const auto& pid : ex.negatives)
        if (!ex.teacher_scores.count(pid))
          fail("format", where + ": teacher_scores missing pid '" + pid + "'");
    }
    out.push_back(std::move(ex));
  });
  return out;
}

inline std::vector<int> wrap_query(const std::vector<int>& tokens) {
  std::vector<int> out;
  out.reserve(tokens.size() + 2);
  out.push_back(text::Vocab::kCls);
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.push_back(text::Vocab::kSep);
  return out;
}

// Per-tape cache so each unique text is encoded once per batch graph.
template <typename S>
class TapeEncoder {
 public:
  using Var = typename nn::Tape<S>::Var;

  TapeEncoder(nn::Tape<S>& tape, model::BottleneckModel<S>& m, const text::PassageCorpus& corpus)
      : tape_(tape), m_(m), corpus_(corpus) {}

  Var passage(const std::string& pid) {
    auto it = cache_.find(pid);
    if (it != cache_.end()) return it->second;
    const text::Passage* p = corpus_.find(pid);
    if (!p) fail("unknown_pid", "unknown pid '" + pid + "'");
    Var h = m_.encode_h(tape_, p->token_ids);
    cache_.emplace(pid, h);
    return h;
  }

  Var query(const std::vector<int>& tokens) { return m_.encode_h(tape_, wrap_query(tokens)); }

  nn::Tape<S>& tape() { return tape_; }

 private:
  nn::Tape<S>& tape_;
  model::BottleneckModel<S>& m_;
  const text::PassageCorpus& corpus_;
  std::map<std::string, Var> cache_;
};

// InfoNCE over {positive} + deduplicated negatives, averaged over positives.
// Negatives are the explicit list plus in-batch passages, deduplicated by pid
// with every positive of this query excluded.
template <typename S>
typename nn::Tape<S>::Var contrastive_loss(TapeEncoder<S>& enc, typename nn::Tape<S>::Var hq,
                                           const std::vector<std::string>& positives,
                                           const std::vector<std::string>& explicit_negs,
                                           const std::vector<std::string>& in_batch, double tau) {
  using Var = typename nn::Tape<S>::Var;
  if (positives.empty()) fail("bad_args", "contrastive_loss: no positive");
  std::set<std::string> seen(positives.begin(), positives.end());
  std::vector<std::string> negs;
  for (const auto* list : {&explicit_negs, &in_batch})
    for (const auto& pid : *list)
      if (seen.insert(pid).second) negs.push_back(pid);

  nn::Tape<S>& tape = enc.tape();
  Var total = -1;
  for (size_t pi = 0; pi < positives.size(); ++pi) {
    std::vector<Var> rows;
    rows.reserve(1 + negs.size());
    rows.push_back(enc.passage(positives[pi]));
    for (const auto& pid : negs) rows.push_back(enc.passage(pid));
    Var cand = rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
    Var scores = tape.matmul_nt(hq, cand);
    if (tau != 1.0) scores = tape.scale(scores, 1.0 / tau);
    Var l = tape.cross_entropy_rows(scores, {0});
    total = pi == 0 ? l : tape.add(total, l);
  }
  if (positives.size() > 1) total = tape.scale(total, 1.0 / static_cast<double>(positives.size()));
  return total;
}

// Convenience entry matching the documented operation shape; encodes on a
// private tape and returns the value only.
template <typename S>
S contrastive_loss_value(model::BottleneckModel<S>& m, const text::PassageCorpus& corpus,
                         const std::vector<int>& query_tokens, const std::string& pos,
                         const std::vector<std::string>& explicit_negs,
                         const std::vector<std::string>& in_batch, double tau) {
  nn::Tape<S> tape;
  TapeEncoder<S> enc(tape, m, corpus);
  auto l = contrastive_loss(enc, enc.query(query_tokens), {pos}, explicit_negs, in_batch, tau);
  return tape.scalar(l);
}

// KL(softmax(teacher/tau) || softmax(student/tau)), teacher treated as constant.
template <typename S>
typename nn::Tape<S>::Var kd_loss(nn::Tape<S>& tape, typename nn::Tape<S>::Var student_scores,
                                  const std::vector<double>& teacher_scores, double tau) {
  const nn::Mat<S>& sv = tape.value(student_scores);
  if (sv.rows() != 1 || sv.cols() != static_cast<Eigen::Index>(teacher_scores.size()))
    fail("shape", "kd_loss: student " + nn::shape_str(sv) + " vs " +
                      std::to_string(teacher_scores.size()) + " teacher scores");
  if (teacher_scores.empty()) fail("bad_args", "kd_loss: empty candidate list");
  double mx = *std::max_element(teacher_scores.begin(), teacher_scores.end());
  std::vector<double> t(teacher_scores.size());
  double z = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    t[i] = std::exp((teacher_scores[i] - mx) / tau);
    z += t[i];
  }
  double neg_entropy = 0;
  nn::Mat<S> trow(1, static_cast<Eigen::Index>(t.size()));
  for (size_t i = 0; i < t.size(); ++i) {
    t[i] /= z;
    if (t[i] > 0) neg_entropy += t[i] * std::log(t[i]);
    trow(0, static_cast<Eigen::Index>(i)) = static_cast<S>(t[i]);
  }
  auto scaled = tau == 1.0 ? student_scores : tape.scale(student_scores, 1.0 / tau);
  auto sce = tape.soft_cross_entropy(scaled, std::move(trow));
  return tape.add(sce, tape.constant(static_cast<S>(neg_entropy)));
}

// Unique query tokens shared with the passage content, ties by ascending pid.
inline std::vector<std::string> lexical_negatives(const std::vector<int>& query_tokens,
                                                  const text::PassageCorpus& corpus, int k,
                                                  const std::set<std::string>& exclude) {
  std::set<int> qset(query_tokens.begin(), query_tokens.end());
  std::vector<std::pair<int, const std::string*>> scored;
  scored.reserve(corpus.passages.size());
  for (const auto& p : corpus.passages) {
    if (exclude.count(p.pid)) continue;
    std::set<int> pset;
    for (int t : p.content()) pset.insert(t);
    int overlap = 0;
    for (int t : pset)
      if (qset.count(t)) ++overlap;
    scored.push_back({overlap, &p.pid});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<std::string> out;
  for (size_t i = 0; i < scored.size() && static_cast<int>(out.size()) < k; ++i)
    out.push_back(*scored[i].second);
  return out;
}

struct MiningLine {
  std::string qid;
  std::vector<std::string> negatives;
  int excluded = 0;
  bool empty = false;
};

// Top-k search results minus judged positives, in rank order; the search depth
// is extended by the number of judged positives so exclusions backfill.
template <typename S>
std::vector<MiningLine> mine_hard_negatives(const ir::DenseIndex& index,
                                            model::BottleneckModel<S>& m,
                                            const std::vector<TrainingExample>& queries,
                                            int top_k, const ir::Qrels& qrels, int threads) {
  if (index.size() == 0) fail("empty_pool", "mine_hard_negatives: empty passage pool");
  if (top_k < 1) fail("bad_args", "mine_hard_negatives: top_k must be >= 1");
  std::vector<MiningLine> lines(queries.size());
  parallel_for(queries.size(), threads, [&](size_t i) {
    const TrainingExample& ex = queries[i];
    std::set<std::string> judged(ex.positives.begin(), ex.positives.end());
    auto jt = qrels.grades.find(ex.qid);
    if (jt != qrels.grades.end())
      for (const auto& [pid, g] : jt->second)
        if (g >= 1) judged.insert(pid);
    int depth = top_k + static_cast<int>(judged.size());
    nn::Mat<S> hq = m.encode_vector(wrap_query(ex.query_tokens));
    nn::Mat<float> qf = hq.template cast<float>();
    auto hits = ir::search(index, qf, depth);
    MiningLine line;
    line.qid = ex.qid;
    for (const auto& hit : hits) {
      if (static_cast<int>(line.negatives.size()) >= top_k) break;
      if (judged.count(hit.pid)) {
        ++line.excluded;
        continue;
      }
      line.negatives.push_back(hit.pid);
    }
    line.empty = line.negatives.empty();
    lines[i] = std::move(line);
  });
  return lines;
}

inline void save_mining_report(const std::string& path, const std::vector<MiningLine>& lines) {
  std::string out;
  for (const auto& line : lines) {
    json obj;
    obj["qid"] = line.qid;
    obj["negatives"] = line.negatives;
    obj["excluded"] = line.excluded;
    obj["empty"] = line.empty;
    out += obj.dump() + "\n";
  }
  write_file(path, out);
}

inline std::map<std::string, std::vector<std::string>> load_mining_report(const std::string& path) {
  std::map<std::string, std::vector<std::string>> out;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    std::string qid = require_string(obj, "qid", where);
    if (!obj.contains("negatives") || !obj["negatives"].is_array())
      fail("format", where + ": missing array field 'negatives'");
    out[qid] = obj["negatives"].get<std::vector<std::string>>();
  });
  return out;
}

template <typename S>
void train_contrastive_stage(model::BottleneckModel<S>& m,
                             const std::vector<TrainingExample>& examples,
                             const text::PassageCorpus& corpus, const FinetuneConfig& cfg,
                             const std::string& stage_tag) {
  cfg.validate();
  if (examples.empty()) fail("bad_args", "no training examples");
  nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  for (int epoch = 0; epoch < cfg.epochs_retriever; ++epoch) {
    Rng order_rng(mix_streams({cfg.seed, fnv1a("order"), fnv1a(stage_tag),
                               static_cast<uint64_t>(epoch)}));
    auto order = pretrain::sample_batch(examples.size(), examples.size(), order_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      nn::Tape<S> tape;
      TapeEncoder<S> enc(tape, m, corpus);
      typename nn::Tape<S>::Var total = -1;
      int count = 0;
      for (size_t bi = start; bi < end; ++bi) {
        const TrainingExample& ex = examples[order[bi]];
        std::vector<std::string> in_batch;
        if (cfg.in_batch) {
          for (size_t bj = start; bj < end; ++bj) {
            if (bj == bi) continue;
            const auto& other = examples[order[bj]];
            in_batch.insert(in_batch.end(), other.positives.begin(), other.positives.end());
          }
        }
        auto l = contrastive_loss(enc, enc.query(ex.query_tokens), ex.positives, ex.negatives,
                                  in_batch, cfg.tau);
        total = count == 0 ? l : tape.add(total, l);
        ++count;
      }
      tape.backward(tape.scale(total, 1.0 / count));
      nn::adam_step(m.params(), adam);
    }
  }
}

// Cross-entropy over cross-encoder scores of {positive} + negatives, one row
// per (query, positive); examples without negatives are skipped with a warning.
template <typename S>
void train_reranker(model::BottleneckModel<S>& m, const std::vector<TrainingExample>& examples,
                    const text::PassageCorpus& corpus, const FinetuneConfig& cfg) {
  cfg.validate();
  if (examples.empty()) fail("bad_args", "no training examples");
  nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  int skipped = 0;
  auto passage_content = [&](const std::string& pid) {
    const text::Passage* p = corpus.find(pid);
    if (!p) fail("unknown_pid", "unknown pid '" + pid + "'");
    return p->content();
  };
  for (int epoch = 0; epoch < cfg.epochs_reranker; ++epoch) {
    Rng order_rng(mix_streams({cfg.seed, fnv1a("order"), fnv1a("reranker"),
                               static_cast<uint64_t>(epoch)}));
    auto order = pretrain::sample_batch(examples.size(), examples.size(), order_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      nn::Tape<S> tape;
      typename nn::Tape<S>::Var total = -1;
      int count = 0;
      for (size_t bi = start; bi < end; ++bi) {
        const TrainingExample& ex = examples[order[bi]];
        if (ex.negatives.empty()) {
          if (epoch == 0) {
            log_info("reranker: skipping qid '" + ex.qid + "': no negatives");
            ++skipped;
          }
          continue;
        }
        for (const auto& pos : ex.positives) {
          std::vector<typename nn::Tape<S>::Var> scores;
          scores.reserve(1 + ex.negatives.size());
          scores.push_back(m.cross_encode(tape, ex.query_tokens, passage_content(pos)));
          for (const auto& neg : ex.negatives)
            scores.push_back(m.cross_encode(tape, ex.query_tokens, passage_content(neg)));
          auto l = tape.cross_entropy_rows(tape.concat_cols(scores), {0});
          total = count == 0 ? l : tape.add(total, l);
          ++count;
        }
      }
      if (count == 0) continue;
      tape.backward(tape.scale(total, 1.0 / count));
      nn::adam_step(m.params(), adam);
    }
  }
  if (skipped > 0)
    log_info("reranker: " + std::to_string(skipped) + " examples had no negatives and were skipped");
}

// Pure KD against fixed teacher scores over positives + mined negatives.
template <typename S>
void train_distil_stage(model::BottleneckModel<S>& m, const std::vector<TrainingExample>& examples,
                        const text::PassageCorpus& corpus, const FinetuneConfig& cfg,
                        model::BottleneckModel<S>* reranker) {
  cfg.validate();
  if (examples.empty()) fail("bad_args", "no training examples");
  if (cfg.in_batch_distil && !reranker)
    fail("state", "in-batch distillation needs the reranker to score in-batch candidates");
  nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  auto passage_content = [&](const std::string& pid) {
    const text::Passage* p = corpus.find(pid);
    if (!p) fail("unknown_pid", "unknown pid '" + pid + "'");
    return p->content();
  };
  auto teacher_score = [&](const TrainingExample& ex, const std::string& pid) {
    auto it = ex.teacher_scores.find(pid);
    if (it != ex.teacher_scores.end()) return it->second;
    if (!reranker) fail("state", "qid '" + ex.qid + "': no teacher score for pid '" + pid + "'");
    return static_cast<double>(reranker->cross_encode_value(ex.query_tokens, passage_content(pid)));
  };
  for (int epoch = 0; epoch < cfg.epochs_distil; ++epoch) {
    Rng order_rng(mix_streams({cfg.seed, fnv1a("order"), fnv1a("distil"),
                               static_cast<uint64_t>(epoch)}));
    auto order = pretrain::sample_batch(examples.size(), examples.size(), order_rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      nn::Tape<S> tape;
      TapeEncoder<S> enc(tape, m, corpus);
      typename nn::Tape<S>::Var total = -1;
      int count = 0;
      for (size_t bi = start; bi < end; ++bi) {
        const TrainingExample& ex = examples[order[bi]];
        std::vector<std::string> cands;
        std::set<std::string> seen;
        for (const auto* list : {&ex.positives, &ex.negatives})
          for (const auto& pid : *list)
            if (seen.insert(pid).second) cands.push_back(pid);
        if (cfg.in_batch_distil) {
          for (size_t bj = start; bj < end; ++bj) {
            if (bj == bi) continue;
            for (const auto& pid : examples[order[bj]].positives)
              if (seen.insert(pid).second) cands.push_back(pid);
          }
        }
        if (cands.empty()) continue;
        std::vector<typename nn::Tape<S>::Var> rows;
        std::vector<double> teacher;
        rows.reserve(cands.size());
        for (const auto& pid : cands) {
          rows.push_back(enc.passage(pid));
          teacher.push_back(teacher_score(ex, pid));
        }
        auto cand = rows.size() == 1 ? rows[0] : tape.concat_rows(rows);
        auto scores = tape.matmul_nt(enc.query(ex.query_tokens), cand);
        auto l = kd_loss(tape, scores, teacher, cfg.tau);
        total = count == 0 ? l : tape.add(total, l);
        ++count;
      }
      if (count == 0) continue;
      tape.backward(tape.scale(total, 1.0 / count));
      nn::adam_step(m.params(), adam);
    }
  }
}

inline std::vector<TrainingExample> with_mined_negatives(
    const std::vector<TrainingExample>& examples,
    const std::map<std::string, std::vector<std::string>>& mined) {
  std::vector<TrainingExample> out = examples;
  for (auto& ex : out) {
    auto it = mined.find(ex.qid);
    ex.negatives = it == mined.end() ? std::vector<std::string>{} : it->second;
  }
  return out;
}

inline void save_teacher_scores(const std::string& path,
                                const std::vector<TrainingExample>& examples,
                                const std::map<std::string, std::map<std::string, double>>& scores) {
  std::string out;
  for (const auto& ex : examples) {
    auto it = scores.find(ex.qid);
    if (it == scores.end()) continue;
    json obj;
    obj["qid"] = ex.qid;
    obj["scores"] = it->second;
    out += obj.dump() + "\n";
  }
  write_file(path, out);
}

inline std::map<std::string, std::map<std::string, double>> load_teacher_scores(
    const std::string& path) {
  std::map<std::string, std::map<std::string, double>> out;
  for_each_jsonl(path, [&](size_t lineno, const json& obj) {
    std::string where = path + ":" + std::to_string(lineno);
    std::string qid = require_string(obj, "qid", where);
    if (!obj.contains("scores") || !obj["scores"].is_object())
      fail("format", where + ": missing object field 'scores'");
    for (const auto& [pid, v] : obj["scores"].items()) out[qid][pid] = v.get<double>();
  });
  return out;
}

template <typename S>
std::map<std::string, std::map<std::string, double>> score_with_reranker(
    model::BottleneckModel<S>& reranker, const std::vector<TrainingExample>& examples,
    const text::PassageCorpus& corpus, int threads) {
  std::vector<std::map<std::string, double>> rows(examples.size());
  parallel_for(examples.size(), threads, [&](size_t i) {
    const TrainingExample& ex = examples[i];
    std::set<std::string> seen;
    for (const auto* list : {&ex.positives, &ex.negatives})
      for (const auto& pid : *list) {
        if (!seen.insert(pid).second) continue;
        const text::Passage* p = corpus.find(pid);
        if (!p) fail("unknown_pid", "unknown pid '" + pid + "'");
        rows[i][pid] =
            static_cast<double>(reranker.cross_encode_value(ex.query_tokens, p->content()));
      }
  });
  std::map<std::string, std::map<std::string, double>> out;
  for (size_t i = 0; i < examples.size(); ++i) out[examples[i].qid] = std::move(rows[i]);
  return out;
}

}  // namespace master::ft
