#include "master/text/plm_outputs.hpp"

#include <algorithm>
#include <sstream>

#include "master/util/error.hpp"
#include "master/util/io.hpp"

namespace master::text {
namespace {

void check_known(const std::vector<std::string>& unknown, const std::string& path) {
  if (unknown.empty()) return;
  std::vector<std::string> sorted = unknown;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::ostringstream msg;
  msg << path << ": unknown pids:";
  for (const auto& pid : sorted) msg << ' ' << pid;
  fail("unknown_pid", msg.str());
}

}  // namespace

PlmOutputs load_plm_outputs(const std::string& gen_queries_file,
                            const std::string& gen_continuations_file, const Vocab& vocab,
                            const std::unordered_set<std::string>* known_pids) {
  PlmOutputs out;
  std::vector<std::string> unknown;

  if (!gen_queries_file.empty()) {
    for_each_jsonl(gen_queries_file, [&](size_t lineno, const json& obj) {
      std::string where = gen_queries_file + ":" + std::to_string(lineno);
      std::string pid = require_string(obj, "pid", where);
      if (known_pids && !known_pids->count(pid)) unknown.push_back(pid);
      if (out.gen_queries.count(pid)) fail("format", where + ": duplicate pid '" + pid + "'");
      if (!obj.contains("queries") || !obj["queries"].is_array())
        fail("format", where + ": missing array field 'queries'");
      const auto& queries = obj["queries"];
      if (queries.empty()) fail("empty_generation", where + ": empty generation for pid '" + pid + "'");
      std::vector<int> tokens;
      for (size_t qi = 0; qi < queries.size(); ++qi) {
        if (!queries[qi].is_string()) fail("format", where + ": queries must be strings");
        if (qi > 0) tokens.push_back(Vocab::kSep);
        auto ids = encode_text(vocab, queries[qi].get<std::string>());
        tokens.insert(tokens.end(), ids.begin(), ids.end());
      }
      bool all_sep = std::all_of(tokens.begin(), tokens.end(), [](int t) { return t == Vocab::kSep; });
      if (tokens.empty() || all_sep)
        fail("empty_generation", where + ": empty generation for pid '" + pid + "'");
      out.gen_queries[pid] = std::move(tokens);
      out.k_queries[pid] = static_cast<int>(queries.size());
    });
    check_known(unknown, gen_queries_file);
    unknown.clear();
  }

  if (!gen_continuations_file.empty()) {
    for_each_jsonl(gen_continuations_file, [&](size_t lineno, const json& obj) {
      std::string where = gen_continuations_file + ":" + std::to_string(lineno);
      std::string pid = require_string(obj, "pid", where);
      if (known_pids && !known_pids->count(pid)) unknown.push_back(pid);
      if (out.gen_continuations.count(pid)) fail("format", where + ": duplicate pid '" + pid + "'");
      std::string text = require_string(obj, "text", where);
      auto tokens = encode_text(vocab, text);
      if (tokens.empty())
        fail("empty_generation", where + ": empty generation for pid '" + pid + "'");
      out.gen_continuations[pid] = std::move(tokens);
    });
    check_known(unknown, gen_continuations_file);
  }

  return out;
}

}  // namespace master::text
