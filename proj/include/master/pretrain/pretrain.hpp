#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "master/mask/masking.hpp"
#include "master/model/model.hpp"
#include "master/util/log.hpp"

namespace master::pretrain {

// Per-batch loss terms. The aggregates are computed from the parts in double
// precision, so the composition identities hold exactly as reported.
struct PretrainLosses {
  double l_mlm = 0, l_mkp = 0, l_cmp = 0, l_npr = 0, l_dor = 0, l_gor = 0;
  double l_cpr = 0, l_rpr = 0, l_por = 0, l_total = 0;

  void finalize() {
    l_cpr = l_mkp + l_cmp;
    l_rpr = l_npr;
    l_por = l_dor + l_gor;
    l_total = l_mlm + l_cpr + l_rpr + l_por;
  }

  static constexpr const char* kColumns[] = {"l_mlm", "l_mkp", "l_cmp", "l_npr", "l_dor",
                                             "l_gor", "l_cpr", "l_rpr", "l_por", "l_total"};

  double by_name(const std::string& name) const {
    if (name == "l_mlm") return l_mlm;
    if (name == "l_mkp") return l_mkp;
    if (name == "l_cmp") return l_cmp;
    if (name == "l_npr") return l_npr;
    if (name == "l_dor") return l_dor;
    if (name == "l_gor") return l_gor;
    if (name == "l_cpr") return l_cpr;
    if (name == "l_rpr") return l_rpr;
    if (name == "l_por") return l_por;
    if (name == "l_total") return l_total;
    fail("bad_args", "unknown loss column '" + name + "'");
  }
};

struct PretrainConfig {
  mask::MaskingConfig masking;
  model::ModelConfig model;
  // Tasks whose losses are trained; defaults to every decoder the model has.
  std::vector<mask::Task> enabled_tasks;
  int batch_size = 16;
  int steps = 500;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.1;
  int checkpoint_every = 0;  // 0: final checkpoint only
  uint64_t seed = 1;

  std::vector<mask::Task> effective_tasks() const {
    std::vector<mask::Task> out;
    for (mask::Task t : mask::kAllTasks) {
      bool in_model = model.task_enabled(t);
      bool wanted = enabled_tasks.empty() ||
                    std::find(enabled_tasks.begin(), enabled_tasks.end(), t) != enabled_tasks.end();
      if (in_model && wanted) out.push_back(t);
    }
    return out;
  }

  void validate() const {
    masking.validate();
    model.validate();
    if (steps < 1) fail("bad_config", "steps must be >= 1");
    if (batch_size < 1) fail("bad_config", "batch_size must be >= 1");
    if (warmup_frac < 0 || warmup_frac > 1) fail("bad_config", "warmup_frac must be in [0,1]");
  }
};

inline std::vector<int> targets_at(const mask::MaskedView& view) {
  std::vector<int> t(view.masked_positions.size());
  for (size_t i = 0; i < t.size(); ++i) t[i] = view.source[static_cast<size_t>(view.masked_positions[i])];
  return t;
}

template <typename S>
struct LossGraph {
  typename nn::Tape<S>::Var total = -1;
  PretrainLosses values;
};

// One encoder pass supplies the MLM logits and the bottleneck vector shared by
// every decoder of the example. Tasks outside `enabled` contribute exactly 0
// and build no graph, so their decoders receive no gradient.
template <typename S>
LossGraph<S> compute_losses(nn::Tape<S>& tape, model::BottleneckModel<S>& m,
                            const mask::PretrainExample& ex,
                            const std::vector<mask::Task>& enabled, bool detach_h = false) {
  LossGraph<S> out;
  auto enc = m.encode(tape, ex.encoder_view);
  if (!enc.has_logits) fail("no_positions", "encoder view has no masked positions");
  typename nn::Tape<S>::Var h = detach_h ? tape.detach(enc.h) : enc.h;

  typename nn::Tape<S>::Var total =
      tape.cross_entropy_rows(enc.mlm_logits, targets_at(ex.encoder_view));
  out.values.l_mlm = static_cast<double>(tape.scalar(total));

  for (mask::Task t : enabled) {
    auto it = ex.decoder_views.find(t);
    if (it == ex.decoder_views.end()) continue;
    auto logits = m.decode(tape, t, it->second, h);
    auto term = tape.cross_entropy_rows(logits, targets_at(it->second));
    double v = static_cast<double>(tape.scalar(term));
    switch (t) {
      case mask::Task::Mkp: out.values.l_mkp = v; break;
      case mask::Task::Cmp: out.values.l_cmp = v; break;
      case mask::Task::Npr: out.values.l_npr = v; break;
      case mask::Task::Dor: out.values.l_dor = v; break;
      case mask::Task::Gor: out.values.l_gor = v; break;
    }
    total = tape.add(total, term);
  }
  out.values.finalize();
  out.total = total;
  return out;
}

inline std::vector<size_t> sample_batch(size_t n, size_t batch, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  size_t b = std::min(batch, n);
  for (size_t j = 0; j < b; ++j) {
    size_t r = j + static_cast<size_t>(rng.below(n - j));
    std::swap(idx[j], idx[r]);
  }
  idx.resize(b);
  return idx;
}

struct PretrainData {
  std::vector<text::PassagePair> pairs;
  const text::PlmOutputs* plm = nullptr;
  const text::TfIdfTable* tfidf = nullptr;
};

inline std::string losses_csv_header() {
  std::string h = "step";
  for (const char* c : PretrainLosses::kColumns) h += std::string(",") + c;
  return h;
}

inline std::string losses_csv_row(long long step, const PretrainLosses& l) {
  char buf[64];
  std::string row = std::to_string(step);
  for (const char* c : PretrainLosses::kColumns) {
    std::snprintf(buf, sizeof(buf), ",%.6f", l.by_name(c));
    row += buf;
  }
  return row;
}

// Trains in place, checkpoints into out_dir, appends losses.csv. If out_dir
// already holds a checkpoint with fewer steps than requested, training resumes
// from it; step-derived RNG streams make the result identical to an
// uninterrupted run.
template <typename S>
std::vector<PretrainLosses> run_pretrain(model::BottleneckModel<S>& m, const PretrainData& data,
                                         const PretrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (data.pairs.empty()) fail("empty_pairs", "no passage pairs to pretrain on");
  if (!data.tfidf) fail("bad_args", "pretrain needs a tf-idf table");
  static const text::PlmOutputs kNoPlm;
  const text::PlmOutputs& plm = data.plm ? *data.plm : kNoPlm;
  const std::vector<mask::Task> enabled = cfg.effective_tasks();

  long long start_step = 0;
  if (!out_dir.empty() && nn::checkpoint_exists(out_dir)) {
    nn::load_checkpoint(out_dir, m.params());
    start_step = m.params().step;
    if (start_step > cfg.steps)
      fail("state", out_dir + ": checkpoint is at step " + std::to_string(start_step) +
                        ", beyond requested " + std::to_string(cfg.steps));
    log_info("pretrain: resuming from step " + std::to_string(start_step));
  }

  std::string csv_path = out_dir.empty() ? "" : out_dir + "/losses.csv";
  std::vector<std::string> kept_rows;
  if (!csv_path.empty()) {
    kept_rows.push_back(losses_csv_header());
    if (start_step > 0 && std::filesystem::exists(csv_path)) {
      std::ifstream in(csv_path);
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        if (first) {
          first = false;
          continue;
        }
        if (line.empty()) continue;
        long long s = std::stoll(line.substr(0, line.find(',')));
        if (s <= start_step) kept_rows.push_back(line);
      }
    }
  }

  nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  const long long warmup = std::max<long long>(1, static_cast<long long>(cfg.warmup_frac * cfg.steps));
  std::vector<PretrainLosses> history;
  std::ofstream csv;
  if (!csv_path.empty()) {
    write_file(csv_path, "");
    csv.open(csv_path, std::ios::trunc);
    for (const auto& row : kept_rows) csv << row << '\n';
    csv.flush();
  }

  for (long long step = start_step + 1; step <= cfg.steps; ++step) {
    Rng batch_rng(mix_streams({cfg.seed, fnv1a("batch"), static_cast<uint64_t>(step)}));
    auto batch = sample_batch(data.pairs.size(), static_cast<size_t>(cfg.batch_size), batch_rng);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    PretrainLosses sums;
    for (size_t pick : batch) {
      const text::PassagePair& pair = data.pairs[pick];
      Rng mask_rng(mix_streams(
          {cfg.seed, fnv1a("mask"), static_cast<uint64_t>(step), fnv1a(pair.left.pid)}));
      mask::PretrainExample ex =
          mask::assemble_pretrain_example(pair, plm, cfg.masking, *data.tfidf, mask_rng);
      nn::Tape<S> tape;
      LossGraph<S> g = compute_losses(tape, m, ex, enabled);
      tape.backward(tape.scale(g.total, inv_b));
      sums.l_mlm += g.values.l_mlm;
      sums.l_mkp += g.values.l_mkp;
      sums.l_cmp += g.values.l_cmp;
      sums.l_npr += g.values.l_npr;
      sums.l_dor += g.values.l_dor;
      sums.l_gor += g.values.l_gor;
    }
    PretrainLosses batch_losses;
    batch_losses.l_mlm = sums.l_mlm * inv_b;
    batch_losses.l_mkp = sums.l_mkp * inv_b;
    batch_losses.l_cmp = sums.l_cmp * inv_b;
    batch_losses.l_npr = sums.l_npr * inv_b;
    batch_losses.l_dor = sums.l_dor * inv_b;
    batch_losses.l_gor = sums.l_gor * inv_b;
    batch_losses.finalize();

    double lr_t = adam.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
    nn::adam_step(m.params(), adam, lr_t);

    history.push_back(batch_losses);
    if (csv.is_open()) {
      csv << losses_csv_row(step, batch_losses) << '\n';
      csv.flush();
    }
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step < cfg.steps)
      model::save_model(out_dir, m);
    if (step % 100 == 0 || step == cfg.steps)
      log_debug("pretrain: step " + std::to_string(step) + " l_total " +
                                std::to_string(batch_losses.l_total));
  }
  if (!out_dir.empty()) model::save_model(out_dir, m);
  return history;
}

}  // namespace master::pretrain
