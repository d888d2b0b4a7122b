#pragma once

#include <string>
#include <vector>

#include "master/ft/finetune.hpp"
#include "master/pretrain/pretrain.hpp"

namespace master::cli {

struct PathsConfig {
  std::string corpus;             // raw documents, one JSON object per line
  std::string artifacts;          // prepared corpus artifacts directory
  std::string gen_queries;        // pre-generated queries per pid (optional)
  std::string gen_continuations;  // pre-generated continuations per pid (optional)
  std::string train;              // training examples jsonl
  std::string dev;                // dev queries jsonl
  std::string qrels;              // TREC qrels
  std::string pretrained;         // pretrained model directory
  std::string finetune;           // fine-tuning pipeline output directory
};

struct PrepareConfig {
  int vocab_size = 8000;
  int max_span_len = 128;
  int min_span_len = 8;
};

struct AblateConfig {
  std::vector<std::string> variants = {"full",   "wo_cpr",     "wo_rpr",
                                       "wo_por", "shared_dec", "mlm_only"};
  std::vector<uint64_t> seeds;  // empty: use the global seed
  std::string stage = "all";
};

struct RunConfig {
  uint64_t seed = 1;
  int threads = 1;
  PathsConfig paths;
  PrepareConfig prepare;
  model::ModelConfig model;
  mask::MaskingConfig masking;
  pretrain::PretrainConfig pretrain;  // masking/model/seed filled from the sections above
  ft::FinetuneConfig finetune;
  std::vector<int> eval_cutoffs = {10, 50, 1000};
  AblateConfig ablate;
};

// Parses with defaults for every absent field; any key outside the documented
// schema is rejected with its full path.
RunConfig parse_run_config(const json& obj);

RunConfig load_run_config(const std::string& path);

// Fully-resolved echo, defaults filled.
json run_config_to_json(const RunConfig& cfg);

void write_config_echo(const std::string& out_dir, const RunConfig& cfg);

}  // namespace master::cli
