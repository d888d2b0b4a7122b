#pragma once

#include <string>

namespace testsup {

struct SynthPaths {
  std::string dir;
  std::string corpus;
  std::string gen_queries;
  std::string gen_continuations;
  std::string train;
  std::string dev;
  std::string qrels;
};

// Fresh empty directory under the system temp root; wiped if it exists.
std::string make_tmpdir(const std::string& tag);

// 8 documents of 64 words over a ~100-word vocabulary; spans of 16 content
// tokens give 32 passages and 24 pairs. Generated queries and continuations
// cover every pid so all five decoders have signal.
SynthPaths write_toy_corpus(const std::string& dir, uint64_t seed);
constexpr int kToySpanLen = 16;

// Planted-keyword retrieval corpus: 200 topics, one document each, 10 spans
// of 24 words. Five keywords per topic, a shared confusion pool and a Zipf
// background. Queries are keyword subsets; train covers topics 0..139, dev
// 140..199; qrels grade the source span 2 and same-topic spans 1.
SynthPaths write_synth_corpus(const std::string& dir, uint64_t seed);
constexpr int kSynthSpanLen = 24;
constexpr int kSynthTopics = 200;
constexpr int kSynthSpansPerTopic = 10;

}  // namespace testsup
