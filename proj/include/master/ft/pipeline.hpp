#pragma once

#include <filesystem>
#include <optional>

#include "master/ft/finetune.hpp"

namespace master::ft {

enum class Stage { Retriever1, Retriever2, Reranker, Distil };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Retriever1: return "retriever1";
    case Stage::Retriever2: return "retriever2";
    case Stage::Reranker: return "reranker";
    case Stage::Distil: return "distil";
  }
  fail("bad_args", "unknown stage");
}

inline std::vector<Stage> stages_from_name(const std::string& name) {
  if (name == "all")
    return {Stage::Retriever1, Stage::Retriever2, Stage::Reranker, Stage::Distil};
  for (Stage s : {Stage::Retriever1, Stage::Retriever2, Stage::Reranker, Stage::Distil})
    if (name == stage_name(s)) return {s};
  fail("bad_args", "unknown stage '" + name + "'");
}

struct PipelineData {
  const text::PassageCorpus* corpus = nullptr;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> dev;
  ir::Qrels qrels;
};

namespace detail {

inline json load_report(const std::string& out_dir) {
  std::string path = out_dir + "/stage_report.json";
  if (!std::filesystem::exists(path)) return json::object();
  json rep = json::parse(read_file(path));
  if (!rep.is_object()) fail("format", path + ": expected a JSON object");
  return rep;
}

inline void save_report(const std::string& out_dir, const json& rep) {
  write_file(out_dir + "/stage_report.json", rep.dump(2) + "\n");
}

inline void note_artifact(json& rep, const std::string& name) {
  if (!rep.contains("artifacts")) rep["artifacts"] = json::array();
  for (const auto& v : rep["artifacts"])
    if (v == name) return;
  rep["artifacts"].push_back(name);
}

template <typename S>
ir::DenseIndex ensure_index(const std::string& model_dir, const std::string& index_dir,
                            const text::PassageCorpus& corpus, int threads) {
  std::string fp = nn::read_checkpoint_fingerprint(model_dir);
  if (std::filesystem::exists(index_dir + "/index.json")) {
    ir::DenseIndex index = ir::load_index(index_dir);
    if (index.fingerprint == fp) return index;
  }
  auto m = model::load_model<S>(model_dir);
  ir::DenseIndex index = ir::encode_corpus<S>(m, corpus, fp, threads);
  ir::save_index(index_dir, index);
  return index;
}

template <typename S>
json eval_retriever(model::BottleneckModel<S>& m, const ir::DenseIndex& index,
                    const std::vector<TrainingExample>& dev, const ir::Qrels& qrels,
                    const FinetuneConfig& cfg, int threads, const std::string& run_path,
                    const std::string& metrics_path) {
  if (dev.empty()) fail("bad_args", "no dev queries");
  int depth = std::max(cfg.eval_mrr_cutoff, cfg.eval_recall_cutoff);
  std::vector<std::vector<ir::SearchHit>> hits(dev.size());
  parallel_for(dev.size(), threads, [&](size_t i) {
    nn::Mat<S> hq = m.encode_vector(wrap_query(dev[i].query_tokens));
    nn::Mat<float> qf = hq.template cast<float>();
    hits[i] = ir::search(index, qf, depth);
  });
  ir::Run run;
  for (size_t i = 0; i < dev.size(); ++i) {
    auto& rows = run[dev[i].qid];
    for (const auto& h : hits[i]) rows.push_back({h.pid, h.score});
  }
  ir::save_run_trec(run_path, run, "master");
  auto report = ir::evaluate(run, qrels, {cfg.eval_mrr_cutoff, cfg.eval_recall_cutoff});
  write_file(metrics_path, report.to_json().dump(2) + "\n");
  json dev_metrics;
  dev_metrics["mrr@" + std::to_string(cfg.eval_mrr_cutoff)] = report.mrr(cfg.eval_mrr_cutoff);
  dev_metrics["recall@" + std::to_string(cfg.eval_recall_cutoff)] =
      report.recall(cfg.eval_recall_cutoff);
  return dev_metrics;
}

template <typename S>
std::map<std::string, std::vector<std::string>> ensure_mining(
    const std::string& out_dir, const std::string& pass, const std::string& retriever_dir,
    const std::string& index_dir, const PipelineData& data, const FinetuneConfig& cfg,
    int threads) {
  std::string path = out_dir + "/mining_" + pass + ".jsonl";
  if (std::filesystem::exists(path)) return load_mining_report(path);
  if (!nn::checkpoint_exists(retriever_dir))
    fail("state", "mining pass " + pass + " needs a trained retriever at " + retriever_dir);
  auto m = model::load_model<S>(retriever_dir);
  ir::DenseIndex index = ensure_index<S>(retriever_dir, index_dir, *data.corpus, threads);
  auto lines = mine_hard_negatives(index, m, data.train, cfg.negatives, data.qrels, threads);
  save_mining_report(path, lines);
  std::map<std::string, std::vector<std::string>> out;
  for (auto& line : lines) out[line.qid] = std::move(line.negatives);
  return out;
}

}  // namespace detail

// Stages write under out_dir: <stage>/ holds the trained model; retriever
// stages also get index_<stage>/, run_<stage>.txt and metrics_<stage>.json.
// Mining passes land in mining_r1.jsonl / mining_r2.jsonl, reranker scores in
// teacher_scores.jsonl, and stage_report.json accumulates the summary.
template <typename S>
json run_pipeline(const std::string& pretrained_dir, const PipelineData& data,
                  const FinetuneConfig& cfg, const std::string& out_dir, int threads,
                  const std::vector<Stage>& stages) {
  cfg.validate();
  if (!data.corpus) fail("bad_args", "run_pipeline: no corpus");
  if (data.train.empty()) fail("bad_args", "run_pipeline: no training examples");
  if (!nn::checkpoint_exists(pretrained_dir))
    fail("state", "no pretrained model at " + pretrained_dir);

  std::filesystem::create_directories(out_dir);
  json rep = detail::load_report(out_dir);

  auto run_stage = [&](Stage stage) {
    std::string name = stage_name(stage);
    std::string stage_dir = out_dir + "/" + name;
    switch (stage) {
      case Stage::Retriever1: {
        auto m = model::load_model<S>(pretrained_dir);
        auto examples = data.train;
        parallel_for(examples.size(), threads, [&](size_t i) {
          auto& ex = examples[i];
          if (!ex.negatives.empty()) return;
          std::set<std::string> exclude(ex.positives.begin(), ex.positives.end());
          ex.negatives = lexical_negatives(ex.query_tokens, *data.corpus, cfg.negatives, exclude);
        });
        FinetuneConfig stage_cfg = cfg;
        stage_cfg.seed = mix_streams({cfg.seed, fnv1a(name)});
        train_contrastive_stage(m, examples, *data.corpus, stage_cfg, name);
        model::save_model(stage_dir, m);
        ir::DenseIndex index =
            detail::ensure_index<S>(stage_dir, out_dir + "/index_" + name, *data.corpus, threads);
        rep["dev_metrics"][name] =
            detail::eval_retriever(m, index, data.dev, data.qrels, cfg, threads,
                                   out_dir + "/run_" + name + ".txt",
                                   out_dir + "/metrics_" + name + ".json");
        detail::note_artifact(rep, name);
        break;
      }
      case Stage::Retriever2: {
        auto mined = detail::ensure_mining<S>(out_dir, "r1", out_dir + "/retriever1",
                                              out_dir + "/index_retriever1", data, cfg, threads);
        rep["mining_passes"] = json::array({"mining_r1.jsonl"});
        auto m = model::load_model<S>(pretrained_dir);
        auto examples = with_mined_negatives(data.train, mined);
        FinetuneConfig stage_cfg = cfg;
        stage_cfg.seed = mix_streams({cfg.seed, fnv1a(name)});
        train_contrastive_stage(m, examples, *data.corpus, stage_cfg, name);
        model::save_model(stage_dir, m);
        ir::DenseIndex index =
            detail::ensure_index<S>(stage_dir, out_dir + "/index_" + name, *data.corpus, threads);
        rep["dev_metrics"][name] =
            detail::eval_retriever(m, index, data.dev, data.qrels, cfg, threads,
                                   out_dir + "/run_" + name + ".txt",
                                   out_dir + "/metrics_" + name + ".json");
        detail::note_artifact(rep, name);
        break;
      }
      case Stage::Reranker: {
        auto mined = detail::ensure_mining<S>(out_dir, "r2", out_dir + "/retriever2",
                                              out_dir + "/index_retriever2", data, cfg, threads);
        rep["mining_passes"] = json::array({"mining_r1.jsonl", "mining_r2.jsonl"});
        auto m = model::load_model<S>(pretrained_dir);
        auto examples = with_mined_negatives(data.train, mined);
        FinetuneConfig stage_cfg = cfg;
        stage_cfg.seed = mix_streams({cfg.seed, fnv1a(name)});
        train_reranker(m, examples, *data.corpus, stage_cfg);
        model::save_model(stage_dir, m);
        auto scores = score_with_reranker(m, examples, *data.corpus, threads);
        save_teacher_scores(out_dir + "/teacher_scores.jsonl", examples, scores);
        detail::note_artifact(rep, name);
        break;
      }
      case Stage::Distil: {
        auto mined = detail::ensure_mining<S>(out_dir, "r2", out_dir + "/retriever2",
                                              out_dir + "/index_retriever2", data, cfg, threads);
        std::string scores_path = out_dir + "/teacher_scores.jsonl";
        if (!std::filesystem::exists(scores_path))
          fail("state", "distillation needs teacher scores at " + scores_path);
        auto teacher = load_teacher_scores(scores_path);
        auto examples = with_mined_negatives(data.train, mined);
        for (auto& ex : examples) {
          auto it = teacher.find(ex.qid);
          if (it != teacher.end()) ex.teacher_scores = it->second;
        }
        std::optional<model::BottleneckModel<S>> reranker;
        if (cfg.in_batch_distil) {
          if (!nn::checkpoint_exists(out_dir + "/reranker"))
            fail("state", "in-batch distillation needs the reranker at " + out_dir + "/reranker");
          reranker.emplace(model::load_model<S>(out_dir + "/reranker"));
        }
        auto m = model::load_model<S>(pretrained_dir);
        FinetuneConfig stage_cfg = cfg;
        stage_cfg.seed = mix_streams({cfg.seed, fnv1a(name)});
        train_distil_stage(m, examples, *data.corpus, stage_cfg,
                           reranker ? &*reranker : nullptr);
        model::save_model(stage_dir, m);
        ir::DenseIndex index =
            detail::ensure_index<S>(stage_dir, out_dir + "/index_" + name, *data.corpus, threads);
        rep["dev_metrics"][name] =
            detail::eval_retriever(m, index, data.dev, data.qrels, cfg, threads,
                                   out_dir + "/run_" + name + ".txt",
                                   out_dir + "/metrics_" + name + ".json");
        detail::note_artifact(rep, name);
        break;
      }
    }
  };

  for (Stage stage : stages) {
    try {
      run_stage(stage);
    } catch (const Error& e) {
      detail::save_report(out_dir, rep);
      fail(e.code(), std::string("stage ") + stage_name(stage) + ": " + e.what());
    }
    detail::save_report(out_dir, rep);
  }
  return rep;
}

}  // namespace master::ft
