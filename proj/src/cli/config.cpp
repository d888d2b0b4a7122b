#include "master/cli/config.hpp"

#include <set>

namespace master::cli {
namespace {

void check_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) fail("bad_config", where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail("bad_config", where + ": unknown key '" + key + "'");
}

template <typename T>
void get_to(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    obj[key].get_to(out);
  } catch (const json::exception&) {
    fail("bad_config", where + "." + key + ": wrong type");
  }
}

void parse_paths(const json& obj, PathsConfig& p, const std::string& where) {
  check_keys(obj, where,
             {"corpus", "artifacts", "gen_queries", "gen_continuations", "train", "dev", "qrels",
              "pretrained", "finetune"});
  get_to(obj, "corpus", p.corpus, where);
  get_to(obj, "artifacts", p.artifacts, where);
  get_to(obj, "gen_queries", p.gen_queries, where);
  get_to(obj, "gen_continuations", p.gen_continuations, where);
  get_to(obj, "train", p.train, where);
  get_to(obj, "dev", p.dev, where);
  get_to(obj, "qrels", p.qrels, where);
  get_to(obj, "pretrained", p.pretrained, where);
  get_to(obj, "finetune", p.finetune, where);
}

void parse_prepare(const json& obj, PrepareConfig& p, const std::string& where) {
  check_keys(obj, where, {"vocab_size", "max_span_len", "min_span_len"});
  get_to(obj, "vocab_size", p.vocab_size, where);
  get_to(obj, "max_span_len", p.max_span_len, where);
  get_to(obj, "min_span_len", p.min_span_len, where);
}

void parse_model(const json& obj, model::ModelConfig& m, const std::string& where) {
  check_keys(obj, where,
             {"vocab", "hidden", "heads", "encoder_layers", "decoder_layers", "max_positions",
              "tasks", "shared_decoder"});
  get_to(obj, "vocab", m.vocab, where);
  get_to(obj, "hidden", m.hidden, where);
  get_to(obj, "heads", m.heads, where);
  get_to(obj, "encoder_layers", m.encoder_layers, where);
  get_to(obj, "decoder_layers", m.decoder_layers, where);
  get_to(obj, "max_positions", m.max_positions, where);
  get_to(obj, "shared_decoder", m.shared_decoder, where);
  if (obj.contains("tasks")) {
    if (!obj["tasks"].is_array()) fail("bad_config", where + ".tasks: expected an array");
    m.tasks.clear();
    for (const auto& v : obj["tasks"]) {
      if (!v.is_string()) fail("bad_config", where + ".tasks: entries must be strings");
      m.tasks.push_back(mask::task_from_name(v.get<std::string>()));
    }
  }
}

void parse_masking(const json& obj, mask::MaskingConfig& m, const std::string& where) {
  check_keys(obj, where, {"alpha", "beta"});
  get_to(obj, "alpha", m.alpha, where);
  get_to(obj, "beta", m.beta, where);
}

void parse_pretrain(const json& obj, pretrain::PretrainConfig& p, const std::string& where) {
  check_keys(obj, where,
             {"batch_size", "steps", "lr", "beta1", "beta2", "eps", "warmup_frac",
              "checkpoint_every"});
  get_to(obj, "batch_size", p.batch_size, where);
  get_to(obj, "steps", p.steps, where);
  get_to(obj, "lr", p.lr, where);
  get_to(obj, "beta1", p.beta1, where);
  get_to(obj, "beta2", p.beta2, where);
  get_to(obj, "eps", p.eps, where);
  get_to(obj, "warmup_frac", p.warmup_frac, where);
  get_to(obj, "checkpoint_every", p.checkpoint_every, where);
}

void parse_finetune(const json& obj, ft::FinetuneConfig& f, const std::string& where) {
  check_keys(obj, where,
             {"tau", "negatives", "in_batch", "in_batch_distil", "batch_size", "epochs_retriever",
              "epochs_reranker", "epochs_distil", "lr", "beta1", "beta2", "eps"});
  get_to(obj, "tau", f.tau, where);
  get_to(obj, "negatives", f.negatives, where);
  get_to(obj, "in_batch", f.in_batch, where);
  get_to(obj, "in_batch_distil", f.in_batch_distil, where);
  get_to(obj, "batch_size", f.batch_size, where);
  get_to(obj, "epochs_retriever", f.epochs_retriever, where);
  get_to(obj, "epochs_reranker", f.epochs_reranker, where);
  get_to(obj, "epochs_distil", f.epochs_distil, where);
  get_to(obj, "lr", f.lr, where);
  get_to(obj, "beta1", f.beta1, where);
  get_to(obj, "beta2", f.beta2, where);
  get_to(obj, "eps", f.eps, where);
}

void parse_eval(const json& obj, std::vector<int>& cutoffs, ft::FinetuneConfig& f,
                const std::string& where) {
  check_keys(obj, where, {"cutoffs", "mrr_cutoff", "recall_cutoff"});
  get_to(obj, "cutoffs", cutoffs, where);
  get_to(obj, "mrr_cutoff", f.eval_mrr_cutoff, where);
  get_to(obj, "recall_cutoff", f.eval_recall_cutoff, where);
  if (cutoffs.empty()) fail("bad_config", where + ".cutoffs: must not be empty");
  for (int k : cutoffs)
    if (k < 1) fail("bad_config", where + ".cutoffs: cutoffs must be >= 1");
}

void parse_ablate(const json& obj, AblateConfig& a, const std::string& where) {
  check_keys(obj, where, {"variants", "seeds", "stage"});
  get_to(obj, "variants", a.variants, where);
  get_to(obj, "seeds", a.seeds, where);
  get_to(obj, "stage", a.stage, where);
  if (a.variants.empty()) fail("bad_config", where + ".variants: must not be empty");
}

}  // namespace

RunConfig parse_run_config(const json& obj) {
  RunConfig cfg;
  check_keys(obj, "config",
             {"seed", "threads", "paths", "prepare", "model", "masking", "pretrain", "finetune",
              "eval", "ablate"});
  get_to(obj, "seed", cfg.seed, "config");
  get_to(obj, "threads", cfg.threads, "config");
  if (cfg.threads < 1) fail("bad_config", "config.threads: must be >= 1");
  if (obj.contains("paths")) parse_paths(obj["paths"], cfg.paths, "config.paths");
  if (obj.contains("prepare")) parse_prepare(obj["prepare"], cfg.prepare, "config.prepare");
  if (obj.contains("model")) parse_model(obj["model"], cfg.model, "config.model");
  if (obj.contains("masking")) parse_masking(obj["masking"], cfg.masking, "config.masking");
  if (obj.contains("pretrain")) parse_pretrain(obj["pretrain"], cfg.pretrain, "config.pretrain");
  if (obj.contains("finetune")) parse_finetune(obj["finetune"], cfg.finetune, "config.finetune");
  if (obj.contains("eval")) parse_eval(obj["eval"], cfg.eval_cutoffs, cfg.finetune, "config.eval");
  if (obj.contains("ablate")) parse_ablate(obj["ablate"], cfg.ablate, "config.ablate");

  cfg.model.validate();
  cfg.masking.validate();
  cfg.pretrain.model = cfg.model;
  cfg.pretrain.masking = cfg.masking;
  cfg.pretrain.seed = cfg.seed;
  cfg.pretrain.validate();
  cfg.finetune.seed = cfg.seed;
  cfg.finetune.validate();
  if (cfg.ablate.seeds.empty()) cfg.ablate.seeds = {cfg.seed};
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  json obj;
  try {
    obj = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail("bad_config", path + ": " + e.what());
  }
  return parse_run_config(obj);
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  json& paths = j["paths"];
  paths["corpus"] = cfg.paths.corpus;
  paths["artifacts"] = cfg.paths.artifacts;
  paths["gen_queries"] = cfg.paths.gen_queries;
  paths["gen_continuations"] = cfg.paths.gen_continuations;
  paths["train"] = cfg.paths.train;
  paths["dev"] = cfg.paths.dev;
  paths["qrels"] = cfg.paths.qrels;
  paths["pretrained"] = cfg.paths.pretrained;
  paths["finetune"] = cfg.paths.finetune;
  json& prep = j["prepare"];
  prep["vocab_size"] = cfg.prepare.vocab_size;
  prep["max_span_len"] = cfg.prepare.max_span_len;
  prep["min_span_len"] = cfg.prepare.min_span_len;
  j["model"] = cfg.model.to_json();
  json& msk = j["masking"];
  msk["alpha"] = cfg.masking.alpha;
  msk["beta"] = cfg.masking.beta;
  json& pre = j["pretrain"];
  pre["batch_size"] = cfg.pretrain.batch_size;
  pre["steps"] = cfg.pretrain.steps;
  pre["lr"] = cfg.pretrain.lr;
  pre["beta1"] = cfg.pretrain.beta1;
  pre["beta2"] = cfg.pretrain.beta2;
  pre["eps"] = cfg.pretrain.eps;
  pre["warmup_frac"] = cfg.pretrain.warmup_frac;
  pre["checkpoint_every"] = cfg.pretrain.checkpoint_every;
  json& ft = j["finetune"];
  ft["tau"] = cfg.finetune.tau;
  ft["negatives"] = cfg.finetune.negatives;
  ft["in_batch"] = cfg.finetune.in_batch;
  ft["in_batch_distil"] = cfg.finetune.in_batch_distil;
  ft["batch_size"] = cfg.finetune.batch_size;
  ft["epochs_retriever"] = cfg.finetune.epochs_retriever;
  ft["epochs_reranker"] = cfg.finetune.epochs_reranker;
  ft["epochs_distil"] = cfg.finetune.epochs_distil;
  ft["lr"] = cfg.finetune.lr;
  ft["beta1"] = cfg.finetune.beta1;
  ft["beta2"] = cfg.finetune.beta2;
  ft["eps"] = cfg.finetune.eps;
  json& ev = j["eval"];
  ev["cutoffs"] = cfg.eval_cutoffs;
  ev["mrr_cutoff"] = cfg.finetune.eval_mrr_cutoff;
  ev["recall_cutoff"] = cfg.finetune.eval_recall_cutoff;
  json& ab = j["ablate"];
  ab["variants"] = cfg.ablate.variants;
  ab["seeds"] = cfg.ablate.seeds;
  ab["stage"] = cfg.ablate.stage;
  return j;
}

void write_config_echo(const std::string& out_dir, const RunConfig& cfg) {
  if (out_dir.empty()) return;
  write_file(out_dir + "/resolved_config.json", run_config_to_json(cfg).dump(2) + "\n");
}

}  // namespace master::cli
