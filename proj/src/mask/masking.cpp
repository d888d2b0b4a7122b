#include "master/mask/masking.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "master/util/error.hpp"
#include "master/util/io.hpp"

namespace master::mask {

using text::Vocab;

const char* task_name(Task task) {
  switch (task) {
    case Task::Mkp: return "mkp";
    case Task::Cmp: return "cmp";
    case Task::Npr: return "npr";
    case Task::Dor: return "dor";
    case Task::Gor: return "gor";
  }
  fail("bad_args", "unknown task");
}

Task task_from_name(const std::string& name) {
  for (Task t : kAllTasks)
    if (name == task_name(t)) return t;
  fail("bad_args", "unknown task '" + name + "'");
}

void MaskingConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) fail("bad_config", "alpha must satisfy 0 < alpha < 1");
  if (!(beta >= 0.5 && beta < 1.0)) fail("bad_config", "beta must satisfy 0.5 <= beta < 1");
}

std::vector<int> maskable_positions(const std::vector<int>& seq) {
  std::vector<int> positions;
  for (size_t i = 0; i < seq.size(); ++i)
    if (seq[i] >= Vocab::kNumSpecials) positions.push_back(static_cast<int>(i));
  return positions;
}

namespace {

int mask_count(double rate, size_t n_maskable) {
  int count = static_cast<int>(std::ceil(rate * static_cast<double>(n_maskable)));
  count = std::max(count, 1);
  return std::min(count, static_cast<int>(n_maskable));
}

MaskedView finish_view(const std::vector<int>& seq, std::vector<int> positions, double rate) {
  std::sort(positions.begin(), positions.end());
  MaskedView view;
  view.source = seq;
  view.input_tokens = seq;
  for (int pos : positions) view.input_tokens[pos] = Vocab::kMask;
  view.masked_positions = std::move(positions);
  view.rate = rate;
  return view;
}

}  // namespace

MaskedView mask_uniform(const std::vector<int>& seq, double rate, Rng& rng) {
  std::vector<int> candidates = maskable_positions(seq);
  if (candidates.empty()) fail("nothing_to_mask", "nothing to mask");
  int count = mask_count(rate, candidates.size());
  std::vector<int> chosen;
  chosen.reserve(count);
  for (int k = 0; k < count; ++k) {
    size_t idx = static_cast<size_t>(rng.below(candidates.size()));
    chosen.push_back(candidates[idx]);
    candidates[idx] = candidates.back();
    candidates.pop_back();
  }
  return finish_view(seq, std::move(chosen), rate);
}

MaskedView mask_tfidf(const std::vector<int>& seq, double rate, const text::TfIdfTable& tfidf,
                      Rng& rng) {
  std::vector<int> candidates = maskable_positions(seq);
  if (candidates.empty()) fail("nothing_to_mask", "nothing to mask");

  std::unordered_map<int, long long> tf;
  for (int pos : candidates) ++tf[seq[pos]];
  std::vector<double> weights(candidates.size());
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    int token = seq[candidates[i]];
    weights[i] = static_cast<double>(tf[token]) * tfidf.idf(token);
    total += weights[i];
  }

  int count = mask_count(rate, candidates.size());
  std::vector<int> chosen;
  chosen.reserve(count);
  for (int k = 0; k < count; ++k) {
    size_t idx;
    if (total > 0.0) {
      double u = rng.next_double() * total;
      double acc = 0.0;
      idx = candidates.size() - 1;
      for (size_t i = 0; i < candidates.size(); ++i) {
        acc += weights[i];
        if (u < acc) {
          idx = i;
          break;
        }
      }
    } else {
      idx = static_cast<size_t>(rng.below(candidates.size()));
    }
    chosen.push_back(candidates[idx]);
    total -= weights[idx];
    candidates[idx] = candidates.back();
    weights[idx] = weights.back();
    candidates.pop_back();
    weights.pop_back();
  }
  return finish_view(seq, std::move(chosen), rate);
}

MaskedView mask_complement(const MaskedView& encoder_view) {
  std::vector<int> maskable = maskable_positions(encoder_view.source);
  std::vector<int> chosen;
  std::vector<char> taken(encoder_view.source.size(), 0);
  for (int pos : encoder_view.masked_positions) taken[pos] = 1;
  for (int pos : maskable)
    if (!taken[pos]) chosen.push_back(pos);
  double rate = maskable.empty()
                    ? 0.0
                    : static_cast<double>(chosen.size()) / static_cast<double>(maskable.size());
  return finish_view(encoder_view.source, std::move(chosen), rate);
}

namespace {

MaskedView masked_or_label(Task task, const std::vector<int>& seq, double rate,
                           const text::TfIdfTable* tfidf, Rng& rng) {
  try {
    if (tfidf) return mask_tfidf(seq, rate, *tfidf, rng);
    return mask_uniform(seq, rate, rng);
  } catch (const Error& e) {
    fail(e.code(), std::string(task_name(task)) + ": " + e.what());
  }
}

}  // namespace

PretrainExample assemble_pretrain_example(const text::PassagePair& pair,
                                          const text::PlmOutputs& plm, const MaskingConfig& cfg,
                                          const text::TfIdfTable& tfidf, Rng& rng) {
  cfg.validate();
  PretrainExample ex;
  ex.pid = pair.left.pid;
  try {
    ex.encoder_view = mask_uniform(pair.left.token_ids, cfg.alpha, rng);
  } catch (const Error& e) {
    fail(e.code(), std::string("encoder: ") + e.what());
  }
  ex.decoder_views[Task::Mkp] = masked_or_label(Task::Mkp, pair.left.token_ids, cfg.beta, &tfidf, rng);
  ex.decoder_views[Task::Cmp] = mask_complement(ex.encoder_view);
  ex.decoder_views[Task::Npr] = masked_or_label(Task::Npr, pair.right.token_ids, cfg.beta, &tfidf, rng);
  if (plm.has_queries(pair.left.pid))
    ex.decoder_views[Task::Dor] =
        masked_or_label(Task::Dor, plm.gen_queries.at(pair.left.pid), cfg.beta, nullptr, rng);
  if (plm.has_continuation(pair.left.pid))
    ex.decoder_views[Task::Gor] =
        masked_or_label(Task::Gor, plm.gen_continuations.at(pair.left.pid), cfg.beta, nullptr, rng);
  return ex;
}

void dump_examples_jsonl(const std::string& path, const std::vector<PretrainExample>& examples) {
  std::ostringstream out;
  for (const auto& ex : examples) {
    json views = json::object();
    auto view_json = [](const MaskedView& v) {
      json obj;
      obj["positions"] = v.masked_positions;
      obj["input_tokens"] = v.input_tokens;
      return obj;
    };
    views["encoder"] = view_json(ex.encoder_view);
    for (const auto& [task, view] : ex.decoder_views) views[task_name(task)] = view_json(view);
    json line;
    line["pid"] = ex.pid;
    line["views"] = views;
    out << line.dump() << '\n';
  }
  write_file(path, out.str());
}

}  // namespace master::mask
