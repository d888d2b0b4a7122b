#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "master/mask/masking.hpp"
#include "master/nn/checkpoint.hpp"
#include "master/nn/tape.hpp"
#include "master/text/vocab.hpp"
#include "master/util/io.hpp"
#include "master/util/rng.hpp"

namespace master::model {

struct ModelConfig {
  int vocab = 8000;
  int hidden = 64;
  int heads = 4;
  int encoder_layers = 4;
  int decoder_layers = 2;
  int max_positions = 128;
  std::vector<mask::Task> tasks{mask::Task::Mkp, mask::Task::Cmp, mask::Task::Npr,
                                mask::Task::Dor, mask::Task::Gor};
  bool shared_decoder = false;

  bool task_enabled(mask::Task t) const {
    return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
  }

  void validate() const {
    if (vocab <= text::Vocab::kNumSpecials) fail("bad_config", "vocab too small");
    if (hidden < 1 || heads < 1 || hidden % heads != 0)
      fail("bad_config", "hidden must be a positive multiple of heads");
    if (encoder_layers < 1 || decoder_layers < 1) fail("bad_config", "layer counts must be >= 1");
    if (max_positions < 4) fail("bad_config", "max_positions too small");
    for (mask::Task t : tasks)
      if (std::count(tasks.begin(), tasks.end(), t) != 1)
        fail("bad_config", std::string("task '") + mask::task_name(t) + "' listed twice");
  }

  json to_json() const {
    json j;
    j["vocab"] = vocab;
    j["hidden"] = hidden;
    j["heads"] = heads;
    j["encoder_layers"] = encoder_layers;
    j["decoder_layers"] = decoder_layers;
    j["max_positions"] = max_positions;
    json names = json::array();
    for (mask::Task t : tasks) names.push_back(mask::task_name(t));
    j["tasks"] = names;
    j["shared_decoder"] = shared_decoder;
    return j;
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig cfg;
    if (j.contains("vocab")) cfg.vocab = j["vocab"].get<int>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<int>();
    if (j.contains("heads")) cfg.heads = j["heads"].get<int>();
    if (j.contains("encoder_layers")) cfg.encoder_layers = j["encoder_layers"].get<int>();
    if (j.contains("decoder_layers")) cfg.decoder_layers = j["decoder_layers"].get<int>();
    if (j.contains("max_positions")) cfg.max_positions = j["max_positions"].get<int>();
    if (j.contains("tasks")) {
      cfg.tasks.clear();
      for (const auto& name : j["tasks"]) cfg.tasks.push_back(mask::task_from_name(name.get<std::string>()));
    }
    if (j.contains("shared_decoder")) cfg.shared_decoder = j["shared_decoder"].get<bool>();
    cfg.validate();
    return cfg;
  }
};

// Deep encoder, shallow per-task decoders, one shared embedding matrix that
// also serves as the LM head for every stack. The encoder CLS output is the
// passage vector; decoders see it in place of their position-0 embedding.
template <typename S>
class BottleneckModel {
 public:
  using Tape = nn::Tape<S>;
  using Var = typename nn::Tape<S>::Var;

  explicit BottleneckModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    create_params();
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }
  const nn::ParamStore<S>& params() const { return params_; }

  void init_random(uint64_t seed) {
    Rng rng(mix_streams({seed, fnv1a("init")}));
    for (auto& [name, p] : params_) {
      if (p.value.rows() == 1 && p.value.cols() != 1 && name != "rank_head.b") {
        if (name.ends_with(".gain"))
          p.value.setOnes();
        else
          p.value.setZero();
      } else if (name == "rank_head.b") {
        p.value.setZero();
      } else {
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
          for (Eigen::Index j = 0; j < p.value.cols(); ++j)
            p.value(i, j) = static_cast<S>(rng.normal(0.0, 0.02));
      }
      p.m.setZero();
      p.v.setZero();
      p.grad.setZero();
    }
    params_.step = 0;
  }

  Var encoder_hidden(Tape& tape, const std::vector<int>& tokens) {
    check_length(tokens.size(), 0);
    Var x = embed_tokens(tape, tokens, "encoder.");
    return run_stack(tape, "encoder.", cfg_.encoder_layers, x);
  }

  struct EncodeOut {
    Var h = -1;
    Var mlm_logits = -1;
    bool has_logits = false;
  };

  EncodeOut encode(Tape& tape, const mask::MaskedView& view) {
    Var hidden = encoder_hidden(tape, view.input_tokens);
    EncodeOut out;
    out.h = tape.slice_rows(hidden, 0, 1);
    if (!view.masked_positions.empty()) {
      out.mlm_logits = lm_head(tape, tape.gather_rows(hidden, view.masked_positions));
      out.has_logits = true;
    }
    return out;
  }

  Var encode_h(Tape& tape, const std::vector<int>& tokens) {
    return tape.slice_rows(encoder_hidden(tape, tokens), 0, 1);
  }

  nn::Mat<S> encode_vector(const std::vector<int>& tokens) {
    Tape tape(false);
    return tape.value(encode_h(tape, tokens));
  }

  // Logits at view.masked_positions (in that order). For the query/continuation
  // tasks the stored view has no CLS slot, so the bottleneck row is prepended
  // and positions shift internally by one.
  Var decode(Tape& tape, mask::Task task, const mask::MaskedView& view, Var h) {
    if (!cfg_.task_enabled(task))
      fail("task_disabled", std::string("decoder '") + mask::task_name(task) + "' is not enabled");
    if (view.masked_positions.empty()) fail("no_positions", "no supervised positions");
    const Mat& hv = tape.value(h);
    if (hv.rows() != 1 || hv.cols() != cfg_.hidden)
      fail("shape", "decode: h is " + nn::shape_str(hv));
    const std::string prefix = decoder_prefix(task);
    const bool has_cls = task == mask::Task::Mkp || task == mask::Task::Cmp || task == mask::Task::Npr;
    const auto& toks = view.input_tokens;
    if (toks.empty()) fail("bad_args", "decode: empty view");

    Var tok_emb = tape.param(params_.at("embeddings.token"));
    Var pos_emb = tape.param(params_.at("embeddings.position"));
    Var h_row = tape.add(h, tape.gather_rows(pos_emb, {0}));
    Var x;
    int offset = 0;
    if (has_cls) {
      check_length(toks.size(), 0);
      if (toks.size() < 2) fail("bad_args", "decode: passage view too short");
      std::vector<int> rest(toks.begin() + 1, toks.end());
      std::vector<int> pos_ids(rest.size());
      for (size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<int>(i) + 1;
      Var rest_emb = tape.add(tape.gather_rows(tok_emb, rest), tape.gather_rows(pos_emb, pos_ids));
      x = tape.concat_rows({h_row, rest_emb});
    } else {
      check_length(toks.size(), 1);
      std::vector<int> pos_ids(toks.size());
      for (size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<int>(i) + 1;
      Var emb = tape.add(tape.gather_rows(tok_emb, toks), tape.gather_rows(pos_emb, pos_ids));
      x = tape.concat_rows({h_row, emb});
      offset = 1;
    }
    x = norm(tape, prefix + "emb_norm.", x);
    Var hidden = run_stack(tape, prefix, cfg_.decoder_layers, x);
    std::vector<int> mapped(view.masked_positions.size());
    for (size_t i = 0; i < mapped.size(); ++i) mapped[i] = view.masked_positions[i] + offset;
    return lm_head(tape, tape.gather_rows(hidden, mapped));
  }

  Var score(Tape& tape, Var hq, Var hp) {
    const Mat&a = tape.value(hq), &b = tape.value(hp);
    if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
      fail("shape", "score: " + nn::shape_str(a) + " vs " + nn::shape_str(b));
    return tape.matmul_nt(hq, hp);
  }

  static S score_value(const nn::Mat<S>& a, const nn::Mat<S>& b) {
    if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
      fail("shape", "score: " + nn::shape_str(a) + " vs " + nn::shape_str(b));
    return a.row(0).dot(b.row(0));
  }

  // [CLS] query [SEP] passage [SEP]; the passage tail is clipped to fit,
  // the query never is.
  std::vector<int> build_cross_input(const std::vector<int>& query,
                                     const std::vector<int>& passage) const {
    if (query.empty()) fail("bad_args", "cross_encode: empty query");
    size_t fixed = query.size() + 3;
    if (fixed > static_cast<size_t>(cfg_.max_positions))
      fail("over_length", "cross_encode: query alone exceeds max_positions");
    size_t room = static_cast<size_t>(cfg_.max_positions) - fixed;
    std::vector<int> toks;
    toks.reserve(std::min(static_cast<size_t>(cfg_.max_positions), fixed + passage.size()));
    toks.push_back(text::Vocab::kCls);
    toks.insert(toks.end(), query.begin(), query.end());
    toks.push_back(text::Vocab::kSep);
    toks.insert(toks.end(), passage.begin(), passage.begin() + std::min(room, passage.size()));
    toks.push_back(text::Vocab::kSep);
    return toks;
  }

  Var cross_encode(Tape& tape, const std::vector<int>& query, const std::vector<int>& passage) {
    Var h = encode_h(tape, build_cross_input(query, passage));
    return tape.add(tape.matmul(h, tape.param(params_.at("rank_head.w"))),
                    tape.param(params_.at("rank_head.b")));
  }

  S cross_encode_value(const std::vector<int>& query, const std::vector<int>& passage) {
    Tape tape(false);
    return tape.scalar(cross_encode(tape, query, passage));
  }

  Var lm_head(Tape& tape, Var rows) {
    return tape.add_rowvec(tape.matmul_nt(rows, tape.param(params_.at("embeddings.token"))),
                           tape.param(params_.at("embeddings.lm_bias")));
  }

  std::string decoder_prefix(mask::Task task) const {
    if (cfg_.shared_decoder) return "decoder.shared.";
    return std::string("decoder.") + mask::task_name(task) + ".";
  }

 private:
  using Mat = nn::Mat<S>;

  void check_length(size_t tokens, size_t extra) const {
    if (tokens == 0) fail("bad_args", "empty token sequence");
    if (tokens + extra > static_cast<size_t>(cfg_.max_positions))
      fail("over_length", "sequence of " + std::to_string(tokens + extra) +
                              " positions exceeds max_positions " +
                              std::to_string(cfg_.max_positions));
  }

  void create_params() {
    const int d = cfg_.hidden;
    params_.create("embeddings.token", cfg_.vocab, d);
    params_.create("embeddings.position", cfg_.max_positions, d);
    params_.create("embeddings.lm_bias", 1, cfg_.vocab);
    create_stack("encoder.", cfg_.encoder_layers);
    if (cfg_.shared_decoder) {
      if (!cfg_.tasks.empty()) create_stack("decoder.shared.", cfg_.decoder_layers);
    } else {
      for (mask::Task t : mask::kAllTasks)
        if (cfg_.task_enabled(t))
          create_stack(std::string("decoder.") + mask::task_name(t) + ".", cfg_.decoder_layers);
    }
    params_.create("rank_head.w", d, 1);
    params_.create("rank_head.b", 1, 1);
  }

  void create_stack(const std::string& prefix, int layers) {
    const int d = cfg_.hidden;
    params_.create(prefix + "emb_norm.gain", 1, d);
    params_.create(prefix + "emb_norm.bias", 1, d);
    for (int l = 0; l < layers; ++l) {
      std::string lp = prefix + "layer" + std::to_string(l) + ".";
      for (const char* n : {"q", "k", "v", "o"}) {
        params_.create(lp + "attn.w" + n, d, d);
        params_.create(lp + "attn.b" + n, 1, d);
      }
      params_.create(lp + "attn_norm.gain", 1, d);
      params_.create(lp + "attn_norm.bias", 1, d);
      params_.create(lp + "ffn.w1", d, 4 * d);
      params_.create(lp + "ffn.b1", 1, 4 * d);
      params_.create(lp + "ffn.w2", 4 * d, d);
      params_.create(lp + "ffn.b2", 1, d);
      params_.create(lp + "ffn_norm.gain", 1, d);
      params_.create(lp + "ffn_norm.bias", 1, d);
    }
  }

  Var embed_tokens(Tape& tape, const std::vector<int>& tokens, const std::string& prefix) {
    Var tok = tape.gather_rows(tape.param(params_.at("embeddings.token")), tokens);
    std::vector<int> pos_ids(tokens.size());
    for (size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<int>(i);
    Var pe = tape.gather_rows(tape.param(params_.at("embeddings.position")), pos_ids);
    return norm(tape, prefix + "emb_norm.", tape.add(tok, pe));
  }

  Var norm(Tape& tape, const std::string& prefix, Var x) {
    return tape.layer_norm(x, tape.param(params_.at(prefix + "gain")),
                           tape.param(params_.at(prefix + "bias")));
  }

  Var run_stack(Tape& tape, const std::string& prefix, int layers, Var x) {
    for (int l = 0; l < layers; ++l) {
      std::string lp = prefix + "layer" + std::to_string(l) + ".";
      Var a = attention(tape, lp, x);
      x = norm(tape, lp + "attn_norm.", tape.add(x, a));
      Var f = ffn(tape, lp, x);
      x = norm(tape, lp + "ffn_norm.", tape.add(x, f));
    }
    return x;
  }

  Var attention(Tape& tape, const std::string& lp, Var x) {
    auto proj = [&](const char* n) {
      return tape.add_rowvec(tape.matmul(x, tape.param(params_.at(lp + "attn.w" + n))),
                             tape.param(params_.at(lp + "attn.b" + n)));
    };
    Var q = proj("q"), k = proj("k"), v = proj("v");
    const int dh = cfg_.hidden / cfg_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    heads.reserve(cfg_.heads);
    for (int hh = 0; hh < cfg_.heads; ++hh) {
      Var qh = tape.slice_cols(q, hh * dh, dh);
      Var kh = tape.slice_cols(k, hh * dh, dh);
      Var vh = tape.slice_cols(v, hh * dh, dh);
      Var attn = tape.softmax(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt), 1);
      heads.push_back(tape.matmul(attn, vh));
    }
    Var o = cfg_.heads == 1 ? heads[0] : tape.concat_cols(heads);
    return tape.add_rowvec(tape.matmul(o, tape.param(params_.at(lp + "attn.wo"))),
                           tape.param(params_.at(lp + "attn.bo")));
  }

  Var ffn(Tape& tape, const std::string& lp, Var x) {
    Var mid = tape.gelu(tape.add_rowvec(tape.matmul(x, tape.param(params_.at(lp + "ffn.w1"))),
                                        tape.param(params_.at(lp + "ffn.b1"))));
    return tape.add_rowvec(tape.matmul(mid, tape.param(params_.at(lp + "ffn.w2"))),
                           tape.param(params_.at(lp + "ffn.b2")));
  }

  ModelConfig cfg_;
  nn::ParamStore<S> params_;
};

template <typename S>
std::string save_model(const std::string& dir, const BottleneckModel<S>& model) {
  write_file(dir + "/config.json", model.config().to_json().dump(2) + "\n");
  return nn::save_checkpoint(dir, model.params());
}

inline ModelConfig load_model_config(const std::string& dir) {
  return ModelConfig::from_json(json::parse(read_file(dir + "/config.json")));
}

template <typename S>
BottleneckModel<S> load_model(const std::string& dir) {
  BottleneckModel<S> model(load_model_config(dir));
  nn::load_checkpoint(dir, model.params());
  return model;
}

}  // namespace master::model
