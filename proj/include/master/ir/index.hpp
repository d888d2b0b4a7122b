#pragma once

#include <string>
#include <utility>
#include <vector>

#include "master/model/model.hpp"
#include "master/text/corpus.hpp"
#include "master/util/parallel.hpp"

namespace master::ir {

// Exact inner-product index: one f32 row per passage plus the fingerprint of
// the checkpoint that produced the rows.
struct DenseIndex {
  nn::Mat<float> vectors;
  std::vector<std::string> pids;
  std::string fingerprint;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

struct SearchHit {
  std::string pid;
  float score;
};

template <typename S>
DenseIndex encode_corpus(model::BottleneckModel<S>& m, const text::PassageCorpus& corpus,
                         const std::string& fingerprint, int threads = 1) {
  DenseIndex index;
  index.fingerprint = fingerprint;
  index.vectors.resize(static_cast<Eigen::Index>(corpus.passages.size()), m.config().hidden);
  index.pids.resize(corpus.passages.size());
  parallel_for(corpus.passages.size(), threads, [&](size_t i) {
    const text::Passage& p = corpus.passages[i];
    nn::Mat<S> h = m.encode_vector(p.token_ids);
    index.vectors.row(static_cast<Eigen::Index>(i)) = h.row(0).template cast<float>();
    index.pids[i] = p.pid;
  });
  return index;
}

// Exact top-k by inner product; ties broken by ascending pid. k beyond the
// index size returns everything.
std::vector<SearchHit> search(const DenseIndex& index, const nn::Mat<float>& query, int k);

void save_index(const std::string& dir, const DenseIndex& index);
DenseIndex load_index(const std::string& dir);

}  // namespace master::ir
