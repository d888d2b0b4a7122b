#pragma once

#include <map>
#include <string>
#include <vector>

#include "master/text/corpus.hpp"
#include "master/text/plm_outputs.hpp"
#include "master/text/tfidf.hpp"
#include "master/util/rng.hpp"

namespace master::mask {

// Decoder-side recovery tasks. The encoder view is kept separately.
enum class Task { Mkp, Cmp, Npr, Dor, Gor };

inline constexpr Task kAllTasks[] = {Task::Mkp, Task::Cmp, Task::Npr, Task::Dor, Task::Gor};

const char* task_name(Task task);
Task task_from_name(const std::string& name);

struct MaskedView {
  std::vector<int> source;
  std::vector<int> masked_positions;  // ascending
  std::vector<int> input_tokens;      // source with MASK at masked positions
  double rate = 0.0;
};

struct MaskingConfig {
  double alpha = 0.30;
  double beta = 0.50;

  void validate() const;
};

struct PretrainExample {
  std::string pid;
  MaskedView encoder_view;
  std::map<Task, MaskedView> decoder_views;
};

// Indices whose token may be masked: everything except the special ids.
std::vector<int> maskable_positions(const std::vector<int>& seq);

MaskedView mask_uniform(const std::vector<int>& seq, double rate, Rng& rng);

// Positions sampled sequentially without replacement, each draw proportional
// to tf(token, seq) * idf(token), with renormalization after every draw.
MaskedView mask_tfidf(const std::vector<int>& seq, double rate, const text::TfIdfTable& tfidf,
                      Rng& rng);

// Masks exactly the maskable positions the encoder left unmasked.
MaskedView mask_complement(const MaskedView& encoder_view);

// Builds the encoder view over pair.left plus one decoder view per task whose
// source text exists. RNG draws happen in the fixed order
// encoder, MKP, NPR, DOR, GOR; absent tasks consume nothing.
PretrainExample assemble_pretrain_example(const text::PassagePair& pair,
                                          const text::PlmOutputs& plm, const MaskingConfig& cfg,
                                          const text::TfIdfTable& tfidf, Rng& rng);

// One line per example: {"pid", "views": {"encoder"|task: {positions, input_tokens}}}.
void dump_examples_jsonl(const std::string& path, const std::vector<PretrainExample>& examples);

}  // namespace master::mask
