#pragma once

#include <cstring>
#include <string>

#include "master/nn/adam.hpp"
#include "master/util/io.hpp"

namespace master::nn {

template <typename S>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() {
  return "f32";
}
template <>
constexpr const char* dtype_name<double>() {
  return "f64";
}

inline std::string hex16(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Layout: per parameter in name order, the value matrix then the two Adam
// moment matrices, each row-major little-endian. The manifest records byte
// offsets of each parameter's block and a fingerprint of the whole blob.
template <typename S>
std::string save_checkpoint(const std::string& dir, const ParamStore<S>& store) {
  std::string blob;
  json entries = json::array();
  for (const auto& [name, p] : store) {
    json e;
    e["name"] = name;
    e["rows"] = static_cast<long long>(p.value.rows());
    e["cols"] = static_cast<long long>(p.value.cols());
    e["offset"] = static_cast<long long>(blob.size());
    entries.push_back(e);
    size_t bytes = static_cast<size_t>(p.value.size()) * sizeof(S);
    for (const Mat<S>* m : {&p.value, &p.m, &p.v})
      blob.append(reinterpret_cast<const char*>(m->data()), bytes);
  }
  std::string fingerprint = hex16(fnv1a(blob.data(), blob.size()));
  json manifest;
  manifest["dtype"] = dtype_name<S>();
  manifest["step"] = store.step;
  manifest["params"] = entries;
  manifest["fingerprint"] = fingerprint;
  write_file(dir + "/params.bin", blob);
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
  return fingerprint;
}

// Strict load: the manifest must list exactly the store's parameters with
// matching shapes, and the blob must match its recorded fingerprint.
template <typename S>
std::string load_checkpoint(const std::string& dir, ParamStore<S>& store) {
  json manifest = json::parse(read_file(dir + "/manifest.json"));
  if (manifest["dtype"].get<std::string>() != dtype_name<S>())
    fail("checkpoint", dir + ": dtype " + manifest["dtype"].get<std::string>() + " does not match " +
                           dtype_name<S>());
  std::string blob = read_file(dir + "/params.bin");
  std::string fingerprint = manifest["fingerprint"].get<std::string>();
  if (hex16(fnv1a(blob.data(), blob.size())) != fingerprint)
    fail("checkpoint", dir + ": blob does not match manifest fingerprint");

  std::unordered_map<std::string, json> by_name;
  for (const auto& e : manifest["params"]) by_name[e["name"].get<std::string>()] = e;
  if (by_name.size() != store.size())
    fail("checkpoint", dir + ": manifest has " + std::to_string(by_name.size()) +
                           " parameters, model expects " + std::to_string(store.size()));
  for (auto& [name, p] : store) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail("checkpoint", dir + ": missing parameter '" + name + "'");
    const json& e = it->second;
    auto rows = e["rows"].get<long long>(), cols = e["cols"].get<long long>();
    if (rows != p.value.rows() || cols != p.value.cols())
      fail("checkpoint", dir + ": parameter '" + name + "' is " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", model expects " + shape_str(p.value));
    size_t bytes = static_cast<size_t>(p.value.size()) * sizeof(S);
    size_t offset = static_cast<size_t>(e["offset"].get<long long>());
    if (offset + 3 * bytes > blob.size()) fail("checkpoint", dir + ": blob truncated at '" + name + "'");
    std::memcpy(p.value.data(), blob.data() + offset, bytes);
    std::memcpy(p.m.data(), blob.data() + offset + bytes, bytes);
    std::memcpy(p.v.data(), blob.data() + offset + 2 * bytes, bytes);
    p.grad.setZero();
  }
  store.step = manifest["step"].get<long long>();
  return fingerprint;
}

inline bool checkpoint_exists(const std::string& dir) {
  return std::filesystem::exists(dir + "/manifest.json") &&
         std::filesystem::exists(dir + "/params.bin");
}

inline std::string read_checkpoint_fingerprint(const std::string& dir) {
  json manifest = json::parse(read_file(dir + "/manifest.json"));
  return manifest["fingerprint"].get<std::string>();
}

inline long long read_checkpoint_step(const std::string& dir) {
  json manifest = json::parse(read_file(dir + "/manifest.json"));
  return manifest["step"].get<long long>();
}

}  // namespace master::nn
