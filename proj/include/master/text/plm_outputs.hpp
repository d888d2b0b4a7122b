#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "master/text/vocab.hpp"

namespace master::text {

// Pre-generated texts for the query-recovery and continuation-recovery
// decoders. Sequences are stored CLS-free; the decoder supplies the
// bottleneck vector at position 0.
struct PlmOutputs {
  // pid -> queries joined by SEP: [q1 tokens, SEP, q2 tokens, ...]
  std::unordered_map<std::string, std::vector<int>> gen_queries;
  std::unordered_map<std::string, int> k_queries;
  // pid -> continuation tokens, as written.
  std::unordered_map<std::string, std::vector<int>> gen_continuations;

  bool has_queries(const std::string& pid) const { return gen_queries.count(pid) > 0; }
  bool has_continuation(const std::string& pid) const { return gen_continuations.count(pid) > 0; }
};

// Either file path may be empty, meaning that side is absent. When known_pids
// is non-null every referenced pid must be in it; offenders are listed in the
// error. Coverage may be partial: a pid present in one file but not the other
// simply skips the corresponding task later.
PlmOutputs load_plm_outputs(const std::string& gen_queries_file,
                            const std::string& gen_continuations_file, const Vocab& vocab,
                            const std::unordered_set<std::string>* known_pids = nullptr);

}  // namespace master::text
