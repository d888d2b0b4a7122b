#pragma once

#include <cmath>
#include <map>
#include <string>

#include "master/nn/tensor.hpp"
#include "master/util/error.hpp"

namespace master::nn {

template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> m;
  Mat<S> v;
};

// Parameters keyed and iterated by name so checkpoints and update order are
// independent of creation order.
template <typename S>
class ParamStore {
 public:
  Parameter<S>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) fail("param", "duplicate parameter '" + name + "'");
    Parameter<S>& p = it->second;
    p.name = name;
    p.value = Mat<S>::Zero(rows, cols);
    p.grad = Mat<S>::Zero(rows, cols);
    p.m = Mat<S>::Zero(rows, cols);
    p.v = Mat<S>::Zero(rows, cols);
    return p;
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  Parameter<S>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) fail("param", "unknown parameter '" + name + "'");
    return it->second;
  }
  const Parameter<S>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail("param", "unknown parameter '" + name + "'");
    return it->second;
  }

  size_t size() const { return params_.size(); }

  long long step = 0;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads() {
    for (auto& [name, p] : params_) p.grad.setZero();
  }

 private:
  std::map<std::string, Parameter<S>> params_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam; gradients are consumed (zeroed) by the step.
template <typename S>
void adam_step(ParamStore<S>& store, const AdamConfig& cfg, double lr) {
  store.step += 1;
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  const S bc1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(store.step)));
  const S bc2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(store.step)));
  const S eps = static_cast<S>(cfg.eps);
  const S rate = static_cast<S>(lr);
  for (auto& [name, p] : store) {
    p.m = b1 * p.m + (S(1) - b1) * p.grad;
    p.v.array() = b2 * p.v.array() + (S(1) - b2) * p.grad.array().square();
    p.value.array() -= rate * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + eps);
    p.grad.setZero();
  }
}

template <typename S>
void adam_step(ParamStore<S>& store, const AdamConfig& cfg) {
  adam_step(store, cfg, cfg.lr);
}

}  // namespace master::nn
