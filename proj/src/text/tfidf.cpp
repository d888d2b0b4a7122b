#include "master/text/tfidf.hpp"

#include <cmath>
#include <limits>

#include "master/util/error.hpp"
#include "master/util/io.hpp"

namespace master::text {

double TfIdfTable::idf(int token) const {
  auto it = df_.find(token);
  if (it == df_.end()) return min_idf_;
  return std::log(static_cast<double>(num_passages_ + 1) / static_cast<double>(it->second + 1)) + 1.0;
}

double TfIdfTable::weight(int token, const Passage& passage) const {
  long long tf = 0;
  for (int t : passage.content())
    if (t == token) ++tf;
  return static_cast<double>(tf) * idf(token);
}

std::vector<double> TfIdfTable::content_weights(const Passage& passage) const {
  auto content = passage.content();
  std::unordered_map<int, long long> tf;
  for (int t : content) ++tf[t];
  std::vector<double> weights(content.size());
  for (size_t i = 0; i < content.size(); ++i)
    weights[i] = static_cast<double>(tf[content[i]]) * idf(content[i]);
  return weights;
}

TfIdfTable compute_tfidf(const std::vector<Passage>& passages) {
  TfIdfTable table;
  table.num_passages_ = static_cast<long long>(passages.size());
  for (const auto& p : passages) {
    std::unordered_map<int, bool> seen;
    for (int t : p.content()) {
      if (!seen.emplace(t, true).second) continue;
      ++table.df_[t];
    }
  }
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& [token, df] : table.df_)
    lo = std::min(lo, std::log(static_cast<double>(table.num_passages_ + 1) /
                               static_cast<double>(df + 1)) +
                          1.0);
  if (table.df_.empty())
    lo = std::log(static_cast<double>(table.num_passages_ + 1)) + 1.0;
  table.min_idf_ = lo;
  return table;
}

void TfIdfTable::save(const std::string& path) const {
  json obj;
  obj["num_passages"] = num_passages_;
  json df = json::object();
  for (const auto& [token, count] : df_) df[std::to_string(token)] = count;
  obj["df"] = df;
  write_file(path, obj.dump(2) + "\n");
}

TfIdfTable TfIdfTable::load(const std::string& path) {
  json obj = json::parse(read_file(path));
  if (!obj.contains("num_passages") || !obj.contains("df"))
    fail("format", path + ": expected fields 'num_passages' and 'df'");
  TfIdfTable table;
  table.num_passages_ = obj["num_passages"].get<long long>();
  for (const auto& [key, value] : obj["df"].items())
    table.df_[std::stoi(key)] = value.get<long long>();
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& [token, df] : table.df_)
    lo = std::min(lo, std::log(static_cast<double>(table.num_passages_ + 1) /
                               static_cast<double>(df + 1)) +
                          1.0);
  if (table.df_.empty())
    lo = std::log(static_cast<double>(table.num_passages_ + 1)) + 1.0;
  table.min_idf_ = lo;
  return table;
}

}  // namespace master::text
