#include "master/cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <unordered_set>

#include "CLI11.hpp"
#include "master/ft/pipeline.hpp"
#include "master/text/plm_outputs.hpp"

namespace master::cli {
namespace {

namespace fs = std::filesystem;

std::string parent_dir(const std::string& path) {
  fs::path p = fs::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

std::string need_path(const std::string& value, const std::string& what) {
  if (value.empty()) fail("bad_args", "no path for " + what + " (set it in the config or pass a flag)");
  return value;
}

struct Artifacts {
  text::Vocab vocab;
  text::PassageCorpus corpus;
};

Artifacts load_artifacts(const RunConfig& cfg) {
  std::string dir = need_path(cfg.paths.artifacts, "prepared artifacts");
  Artifacts a;
  a.vocab = text::Vocab::load_tsv(dir + "/vocab.tsv");
  a.corpus = text::load_passages_jsonl(dir + "/passages.jsonl");
  return a;
}

std::string default_if_exists(const std::string& path) {
  return fs::exists(path) ? path : std::string();
}

ft::PipelineData load_pipeline_data(const RunConfig& cfg, const Artifacts& a) {
  ft::PipelineData data;
  data.corpus = &a.corpus;
  data.train = ft::load_training_examples(need_path(cfg.paths.train, "training examples"), a.vocab,
                                          true);
  data.dev = ft::load_training_examples(need_path(cfg.paths.dev, "dev queries"), a.vocab, false);
  data.qrels = ir::Qrels::load_trec(need_path(cfg.paths.qrels, "qrels"));
  return data;
}

void print_dev_metrics(const json& rep) {
  if (!rep.contains("dev_metrics")) return;
  for (const auto& [stage, metrics] : rep["dev_metrics"].items())
    for (const auto& [name, value] : metrics.items())
      std::printf("%s %s %.4f\n", stage.c_str(), name.c_str(), value.get<double>());
}

}  // namespace

model::ModelConfig variant_model(const model::ModelConfig& base, const std::string& variant) {
  using mask::Task;
  model::ModelConfig m = base;
  m.shared_decoder = false;
  if (variant == "full") {
    m.tasks = {Task::Mkp, Task::Cmp, Task::Npr, Task::Dor, Task::Gor};
  } else if (variant == "wo_cpr") {
    m.tasks = {Task::Npr, Task::Dor, Task::Gor};
  } else if (variant == "wo_rpr") {
    m.tasks = {Task::Mkp, Task::Cmp, Task::Dor, Task::Gor};
  } else if (variant == "wo_por") {
    m.tasks = {Task::Mkp, Task::Cmp, Task::Npr};
  } else if (variant == "shared_dec") {
    m.tasks = {Task::Mkp, Task::Cmp, Task::Npr, Task::Dor, Task::Gor};
    m.shared_decoder = true;
  } else if (variant == "mlm_only") {
    m.tasks = {};
  } else {
    fail("bad_args", "unknown variant '" + variant + "'");
  }
  return m;
}

int cmd_prepare(const RunConfig& cfg, const std::string& out_dir) {
  std::string corpus_path = need_path(cfg.paths.corpus, "raw corpus");
  std::string out = need_path(out_dir, "output directory");
  fs::create_directories(out);

  std::vector<std::string> texts;
  for_each_jsonl(corpus_path, [&](size_t lineno, const json& obj) {
    texts.push_back(require_string(obj, "text", corpus_path + ":" + std::to_string(lineno)));
  });
  text::Vocab vocab = text::build_vocab(texts, cfg.prepare.vocab_size, 1);

  auto docs = text::read_corpus_jsonl(corpus_path, vocab);
  std::vector<text::Passage> passages;
  std::vector<text::PassagePair> pairs;
  for (const auto& doc : docs) {
    auto spans = text::split_spans(doc, cfg.prepare.max_span_len, cfg.prepare.min_span_len);
    auto doc_pairs = text::make_pairs(spans);
    passages.insert(passages.end(), spans.begin(), spans.end());
    pairs.insert(pairs.end(), doc_pairs.begin(), doc_pairs.end());
  }
  if (passages.empty()) fail("empty_corpus", "no passages produced from " + corpus_path);
  if (pairs.empty()) std::fprintf(stderr, "warning: no pairs\n");

  text::TfIdfTable tfidf = text::compute_tfidf(passages);

  vocab.save_tsv(out + "/vocab.tsv");
  text::save_passages_jsonl(out + "/passages.jsonl", passages);
  text::save_pairs_jsonl(out + "/pairs.jsonl", pairs);
  tfidf.save(out + "/tfidf.json");

  std::unordered_set<std::string> known;
  for (const auto& p : passages) known.insert(p.pid);
  bool has_gq = !cfg.paths.gen_queries.empty();
  bool has_gc = !cfg.paths.gen_continuations.empty();
  text::load_plm_outputs(cfg.paths.gen_queries, cfg.paths.gen_continuations, vocab, &known);
  if (has_gq) write_file(out + "/gen_queries.jsonl", read_file(cfg.paths.gen_queries));
  if (has_gc) write_file(out + "/gen_continuations.jsonl", read_file(cfg.paths.gen_continuations));
  json por;
  por["gen_queries"] = has_gq;
  por["gen_continuations"] = has_gc;
  write_file(out + "/por_status.json", por.dump(2) + "\n");
  if (!has_gq && !has_gc) std::fprintf(stderr, "warning: no generated outputs, POR unavailable\n");

  json hashes;
  std::vector<std::string> files = {"vocab.tsv", "passages.jsonl", "pairs.jsonl", "tfidf.json",
                                    "por_status.json"};
  if (has_gq) files.push_back("gen_queries.jsonl");
  if (has_gc) files.push_back("gen_continuations.jsonl");
  for (const auto& f : files) hashes[f] = file_fingerprint(out + "/" + f);
  write_file(out + "/hashes.json", hashes.dump(2) + "\n");
  write_config_echo(out, cfg);

  std::printf("prepared %zu documents: %zu passages, %zu pairs, vocab %d\n", docs.size(),
              passages.size(), pairs.size(), vocab.size());
  return 0;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& corpus_path,
                 const std::string& pairs_path, const std::string& gen_queries,
                 const std::string& gen_continuations, const std::string& out_dir) {
  std::string corpus_file = corpus_path;
  if (corpus_file.empty() && !cfg.paths.artifacts.empty())
    corpus_file = cfg.paths.artifacts + "/passages.jsonl";
  need_path(corpus_file, "passages");
  std::string dir = parent_dir(corpus_file);
  std::string pairs_file = pairs_path.empty() ? dir + "/pairs.jsonl" : pairs_path;
  std::string gq = gen_queries.empty() ? default_if_exists(dir + "/gen_queries.jsonl") : gen_queries;
  std::string gc = gen_continuations.empty() ? default_if_exists(dir + "/gen_continuations.jsonl")
                                             : gen_continuations;
  std::string out = need_path(out_dir, "output directory");

  text::Vocab vocab = text::Vocab::load_tsv(dir + "/vocab.tsv");
  text::TfIdfTable tfidf = text::TfIdfTable::load(dir + "/tfidf.json");
  text::PassageCorpus corpus = text::load_passages_jsonl(corpus_file);

  pretrain::PretrainData data;
  data.pairs = text::load_pairs_jsonl(pairs_file, corpus);
  data.tfidf = &tfidf;
  text::PlmOutputs plm;
  if (!gq.empty() || !gc.empty()) {
    std::unordered_set<std::string> known;
    for (const auto& p : corpus.passages) known.insert(p.pid);
    plm = text::load_plm_outputs(gq, gc, vocab, &known);
  }
  data.plm = &plm;

  pretrain::PretrainConfig pc = cfg.pretrain;
  pc.model.vocab = vocab.size();
  pc.seed = cfg.seed;
  model::BottleneckModel<float> m(pc.model);
  m.init_random(cfg.seed);
  auto history = pretrain::run_pretrain(m, data, pc, out);
  write_config_echo(out, cfg);
  if (!history.empty())
    std::printf("pretrain done: %d steps, l_total %.4f\n", pc.steps, history.back().l_total);
  else
    std::printf("pretrain done: checkpoint already at %d steps\n", pc.steps);
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& stage, const std::string& pretrained_dir,
                 const std::string& out_dir) {
  std::string pretrained =
      need_path(pretrained_dir.empty() ? cfg.paths.pretrained : pretrained_dir, "pretrained model");
  std::string out =
      need_path(out_dir.empty() ? cfg.paths.finetune : out_dir, "output directory");
  Artifacts a = load_artifacts(cfg);
  ft::PipelineData data = load_pipeline_data(cfg, a);
  auto stages = ft::stages_from_name(stage);
  json rep = ft::run_pipeline<float>(pretrained, data, cfg.finetune, out, cfg.threads, stages);
  write_config_echo(out, cfg);
  print_dev_metrics(rep);
  return 0;
}

int cmd_encode(const RunConfig& cfg, const std::string& model_dir, const std::string& out_dir) {
  std::string mdir =
      need_path(model_dir.empty() ? cfg.paths.pretrained : model_dir, "model directory");
  std::string out = need_path(out_dir, "output directory");
  Artifacts a = load_artifacts(cfg);
  auto m = model::load_model<float>(mdir);
  std::string fp = nn::read_checkpoint_fingerprint(mdir);
  ir::DenseIndex index = ir::encode_corpus<float>(m, a.corpus, fp, cfg.threads);
  ir::save_index(out, index);
  write_config_echo(out, cfg);
  std::printf("encoded %zu passages, dim %d, model %s\n", index.size(), index.dim(), fp.c_str());
  return 0;
}

int cmd_search(const RunConfig& cfg, const std::string& index_dir, const std::string& model_dir,
               const std::string& queries_path, const std::string& query_text, int k,
               const std::string& out_dir) {
  std::string mdir =
      need_path(model_dir.empty() ? cfg.paths.pretrained : model_dir, "model directory");
  ir::DenseIndex index = ir::load_index(need_path(index_dir, "index directory"));
  std::string fp = nn::read_checkpoint_fingerprint(mdir);
  if (index.fingerprint != fp)
    fail("fingerprint", "index was built with model " + index.fingerprint + ", got " + fp);
  auto m = model::load_model<float>(mdir);
  std::string vocab_dir = need_path(cfg.paths.artifacts, "prepared artifacts");
  text::Vocab vocab = text::Vocab::load_tsv(vocab_dir + "/vocab.tsv");

  std::vector<std::pair<std::string, std::vector<int>>> queries;
  if (!queries_path.empty()) {
    auto examples = ft::load_training_examples(queries_path, vocab, false);
    for (auto& ex : examples) queries.emplace_back(ex.qid, std::move(ex.query_tokens));
  } else if (!query_text.empty()) {
    auto tokens = text::encode_text(vocab, query_text);
    if (tokens.empty()) fail("bad_args", "query tokenizes to nothing");
    queries.emplace_back("q1", std::move(tokens));
  } else {
    fail("bad_args", "pass --queries or --query");
  }

  std::vector<std::vector<ir::SearchHit>> hits(queries.size());
  parallel_for(queries.size(), cfg.threads, [&](size_t i) {
    nn::Mat<float> hq = m.encode_vector(ft::wrap_query(queries[i].second));
    hits[i] = ir::search(index, hq, k);
  });

  ir::Run run;
  for (size_t i = 0; i < queries.size(); ++i) {
    auto& rows = run[queries[i].first];
    for (const auto& h : hits[i]) rows.push_back({h.pid, h.score});
    for (size_t r = 0; r < hits[i].size(); ++r)
      std::printf("%s %zu %s %.6f\n", queries[i].first.c_str(), r + 1, hits[i][r].pid.c_str(),
                  hits[i][r].score);
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    ir::save_run_trec(out_dir + "/run.txt", run, "master");
    write_config_echo(out_dir, cfg);
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& run_path, const std::string& qrels_path,
             const std::vector<int>& cutoffs, const std::string& out_dir) {
  ir::Run run = ir::load_run_trec(need_path(run_path, "run file"));
  ir::Qrels qrels = ir::Qrels::load_trec(
      need_path(qrels_path.empty() ? cfg.paths.qrels : qrels_path, "qrels"));
  std::vector<int> ks = cutoffs.empty() ? cfg.eval_cutoffs : cutoffs;
  auto report = ir::evaluate(run, qrels, ks);
  for (int cut : report.cutoffs) {
    std::printf("mrr@%d %.4f\n", cut, report.mrr(cut));
    std::printf("recall@%d %.4f\n", cut, report.recall(cut));
    std::printf("ndcg@%d %.4f\n", cut, report.ndcg(cut));
  }
  std::printf("evaluated %d skipped_unjudged %d skipped_no_relevant %d\n", report.evaluated,
              report.skipped_unjudged, report.skipped_no_relevant);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(out_dir + "/metrics.json", report.to_json().dump(2) + "\n");
    write_config_echo(out_dir, cfg);
  }
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
  std::string out = need_path(out_dir, "output directory");
  fs::create_directories(out);
  Artifacts a = load_artifacts(cfg);
  ft::PipelineData data = load_pipeline_data(cfg, a);

  std::string art = cfg.paths.artifacts;
  text::TfIdfTable tfidf = text::TfIdfTable::load(art + "/tfidf.json");
  pretrain::PretrainData pdata;
  pdata.pairs = text::load_pairs_jsonl(art + "/pairs.jsonl", a.corpus);
  pdata.tfidf = &tfidf;
  text::PlmOutputs plm;
  std::string gq = default_if_exists(art + "/gen_queries.jsonl");
  std::string gc = default_if_exists(art + "/gen_continuations.jsonl");
  if (!gq.empty() || !gc.empty()) {
    std::unordered_set<std::string> known;
    for (const auto& p : a.corpus.passages) known.insert(p.pid);
    plm = text::load_plm_outputs(gq, gc, a.vocab, &known);
  }
  pdata.plm = &plm;

  auto stages = ft::stages_from_name(cfg.ablate.stage);
  std::string csv = "variant,seed,stage,mrr@" + std::to_string(cfg.finetune.eval_mrr_cutoff) +
                    ",recall@" + std::to_string(cfg.finetune.eval_recall_cutoff) + "\n";
  for (const auto& variant : cfg.ablate.variants) {
    model::ModelConfig mcfg = variant_model(cfg.model, variant);
    mcfg.vocab = a.vocab.size();
    for (uint64_t seed : cfg.ablate.seeds) {
      std::string vdir = out + "/" + variant + "/s" + std::to_string(seed);
      pretrain::PretrainConfig pc = cfg.pretrain;
      pc.model = mcfg;
      pc.seed = seed;
      model::BottleneckModel<float> m(mcfg);
      m.init_random(seed);
      pretrain::run_pretrain(m, pdata, pc, vdir + "/pretrain");

      ft::FinetuneConfig fc = cfg.finetune;
      fc.seed = seed;
      json rep = ft::run_pipeline<float>(vdir + "/pretrain", data, fc, vdir + "/finetune",
                                         cfg.threads, stages);

      std::string metric_stage;
      double mrr = 0, recall = 0;
      for (const auto& stage : stages) {
        std::string name = ft::stage_name(stage);
        if (rep.contains("dev_metrics") && rep["dev_metrics"].contains(name)) {
          metric_stage = name;
          const json& mj = rep["dev_metrics"][name];
          mrr = mj["mrr@" + std::to_string(fc.eval_mrr_cutoff)].get<double>();
          recall = mj["recall@" + std::to_string(fc.eval_recall_cutoff)].get<double>();
        }
      }
      if (metric_stage.empty()) fail("state", "variant " + variant + ": no retriever stage ran");
      char row[256];
      std::snprintf(row, sizeof(row), "%s,%llu,%s,%.6f,%.6f\n", variant.c_str(),
                    static_cast<unsigned long long>(seed), metric_stage.c_str(), mrr, recall);
      csv += row;
      std::printf("%s", row);
    }
  }
  write_file(out + "/ablation.csv", csv);
  write_config_echo(out, cfg);
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"bottlenecked masked-autoencoder retrieval workbench"};
  app.require_subcommand(1);

  struct Common {
    std::string config, out;
    uint64_t seed = 0;
    int threads = 0;
    bool seed_set = false, threads_set = false;
  };
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run config JSON");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "override config seed")->each([&c](const std::string&) {
      c.seed_set = true;
    });
    sub->add_option("--threads", c.threads, "override config threads")
        ->each([&c](const std::string&) { c.threads_set = true; });
  };
  auto resolve = [](const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    if (c.seed_set) {
      cfg.seed = c.seed;
      cfg.pretrain.seed = c.seed;
      cfg.finetune.seed = c.seed;
      if (cfg.ablate.seeds.size() == 1) cfg.ablate.seeds = {c.seed};
    }
    if (c.threads_set) {
      if (c.threads < 1) fail("bad_args", "--threads must be >= 1");
      cfg.threads = c.threads;
    }
    return cfg;
  };

  Common prep_c;
  CLI::App* prep = app.add_subcommand("prepare", "build corpus artifacts");
  add_common(prep, prep_c);

  Common pre_c;
  std::string pre_corpus, pre_pairs, pre_gq, pre_gc;
  CLI::App* pre = app.add_subcommand("pretrain", "train the bottleneck model");
  add_common(pre, pre_c);
  pre->add_option("--corpus", pre_corpus, "passages jsonl (vocab.tsv/tfidf.json as siblings)");
  pre->add_option("--pairs", pre_pairs, "passage pairs jsonl");
  pre->add_option("--gen-queries", pre_gq, "generated queries per pid");
  pre->add_option("--gen-continuations", pre_gc, "generated continuations per pid");

  Common ft_c;
  std::string ft_stage = "all", ft_pretrained;
  CLI::App* ftc = app.add_subcommand("finetune", "run the retrieval pipeline");
  add_common(ftc, ft_c);
  ftc->add_option("--stage", ft_stage, "retriever1|retriever2|reranker|distil|all");
  ftc->add_option("--pretrained", ft_pretrained, "pretrained model directory");

  Common enc_c;
  std::string enc_model;
  CLI::App* enc = app.add_subcommand("encode", "encode the corpus into a dense index");
  add_common(enc, enc_c);
  enc->add_option("--model", enc_model, "model directory");

  Common srch_c;
  std::string srch_index, srch_model, srch_queries, srch_query;
  int srch_k = 10;
  CLI::App* srch = app.add_subcommand("search", "exact top-k search over an index");
  add_common(srch, srch_c);
  srch->add_option("--index", srch_index, "index directory")->required();
  srch->add_option("--model", srch_model, "model directory");
  srch->add_option("--queries", srch_queries, "queries jsonl (qid/query)");
  srch->add_option("--query", srch_query, "single query text");
  srch->add_option("--k", srch_k, "results per query");

  Common ev_c;
  std::string ev_run, ev_qrels;
  std::vector<int> ev_cutoffs;
  CLI::App* ev = app.add_subcommand("eval", "score a run file against qrels");
  add_common(ev, ev_c);
  ev->add_option("--run", ev_run, "TREC run file")->required();
  ev->add_option("--qrels", ev_qrels, "TREC qrels file");
  ev->add_option("--cutoffs", ev_cutoffs, "cutoffs, e.g. 10,50,1000")->delimiter(',');

  Common ab_c;
  std::vector<std::string> ab_variants;
  std::vector<uint64_t> ab_seeds;
  std::string ab_stage;
  CLI::App* ab = app.add_subcommand("ablate", "pretrain variants and compare dev metrics");
  add_common(ab, ab_c);
  ab->add_option("--variants", ab_variants, "comma-separated variant names")->delimiter(',');
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds")->delimiter(',');
  ab->add_option("--stage", ab_stage, "pipeline stage per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[cli]: %s\n", e.what());
    return 2;
  }

  if (prep->parsed()) {
    RunConfig cfg = resolve(prep_c);
    return cmd_prepare(cfg, prep_c.out.empty() ? cfg.paths.artifacts : prep_c.out);
  }
  if (pre->parsed()) {
    RunConfig cfg = resolve(pre_c);
    return cmd_pretrain(cfg, pre_corpus, pre_pairs, pre_gq, pre_gc,
                        pre_c.out.empty() ? cfg.paths.pretrained : pre_c.out);
  }
  if (ftc->parsed()) {
    RunConfig cfg = resolve(ft_c);
    return cmd_finetune(cfg, ft_stage, ft_pretrained, ft_c.out);
  }
  if (enc->parsed()) {
    RunConfig cfg = resolve(enc_c);
    return cmd_encode(cfg, enc_model, enc_c.out);
  }
  if (srch->parsed()) {
    RunConfig cfg = resolve(srch_c);
    return cmd_search(cfg, srch_index, srch_model, srch_queries, srch_query, srch_k, srch_c.out);
  }
  if (ev->parsed()) {
    RunConfig cfg = resolve(ev_c);
    return cmd_eval(cfg, ev_run, ev_qrels, ev_cutoffs, ev_c.out);
  }
  if (ab->parsed()) {
    RunConfig cfg = resolve(ab_c);
    if (!ab_variants.empty()) cfg.ablate.variants = ab_variants;
    if (!ab_seeds.empty()) cfg.ablate.seeds = ab_seeds;
    if (!ab_stage.empty()) cfg.ablate.stage = ab_stage;
    return cmd_ablate(cfg, ab_c.out);
  }
  fail("cli", "no subcommand");
}

}  // namespace master::cli
