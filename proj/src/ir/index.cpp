#include "master/ir/index.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "master/util/io.hpp"

namespace master::ir {

std::vector<SearchHit> search(const DenseIndex& index, const nn::Mat<float>& query, int k) {
  if (k < 1) fail("bad_args", "search: k must be >= 1");
  if (query.rows() != 1 || query.cols() != index.dim())
    fail("shape", "search: query is " + nn::shape_str(query) + ", index dim " +
                      std::to_string(index.dim()));
  const Eigen::Index n = index.size();
  Eigen::VectorXf scores = index.vectors * query.row(0).transpose();
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return index.pids[static_cast<size_t>(a)] < index.pids[static_cast<size_t>(b)];
  };
  size_t take = std::min<size_t>(static_cast<size_t>(n), static_cast<size_t>(k));
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(take), order.end(), better);
  std::vector<SearchHit> hits;
  hits.reserve(take);
  for (size_t i = 0; i < take; ++i)
    hits.push_back(SearchHit{index.pids[static_cast<size_t>(order[i])], scores(order[i])});
  return hits;
}

void save_index(const std::string& dir, const DenseIndex& index) {
  json manifest;
  manifest["rows"] = static_cast<long long>(index.size());
  manifest["dim"] = static_cast<long long>(index.dim());
  manifest["fingerprint"] = index.fingerprint;
  manifest["pids"] = index.pids;
  std::string blob(reinterpret_cast<const char*>(index.vectors.data()),
                   static_cast<size_t>(index.vectors.size()) * sizeof(float));
  write_file(dir + "/vectors.f32", blob);
  write_file(dir + "/index.json", manifest.dump(2) + "\n");
}

DenseIndex load_index(const std::string& dir) {
  json manifest = json::parse(read_file(dir + "/index.json"));
  DenseIndex index;
  auto rows = manifest["rows"].get<long long>();
  auto dim = manifest["dim"].get<long long>();
  index.fingerprint = manifest["fingerprint"].get<std::string>();
  index.pids = manifest["pids"].get<std::vector<std::string>>();
  if (static_cast<long long>(index.pids.size()) != rows)
    fail("format", dir + ": pid count does not match row count");
  std::string blob = read_file(dir + "/vectors.f32");
  if (blob.size() != static_cast<size_t>(rows) * static_cast<size_t>(dim) * sizeof(float))
    fail("format", dir + ": vector blob size mismatch");
  index.vectors.resize(rows, dim);
  std::memcpy(index.vectors.data(), blob.data(), blob.size());
  return index;
}

}  // namespace master::ir
