#pragma once

#include <string>
#include <vector>

#include "master/cli/config.hpp"

namespace master::cli {

// Task set and decoder sharing for a named ablation variant; everything else
// is copied from the base model config.
model::ModelConfig variant_model(const model::ModelConfig& base, const std::string& variant);

int cmd_prepare(const RunConfig& cfg, const std::string& out_dir);
int cmd_pretrain(const RunConfig& cfg, const std::string& corpus_path,
                 const std::string& pairs_path, const std::string& gen_queries,
                 const std::string& gen_continuations, const std::string& out_dir);
int cmd_finetune(const RunConfig& cfg, const std::string& stage, const std::string& pretrained_dir,
                 const std::string& out_dir);
int cmd_encode(const RunConfig& cfg, const std::string& model_dir, const std::string& out_dir);
int cmd_search(const RunConfig& cfg, const std::string& index_dir, const std::string& model_dir,
               const std::string& queries_path, const std::string& query_text, int k,
               const std::string& out_dir);
int cmd_eval(const RunConfig& cfg, const std::string& run_path, const std::string& qrels_path,
             const std::vector<int>& cutoffs, const std::string& out_dir);
int cmd_ablate(const RunConfig& cfg, const std::string& out_dir);

// Full argv entry point; throws Error for domain failures.
int run_cli(int argc, char** argv);

}  // namespace master::cli
