#pragma once

#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "master/nn/adam.hpp"
#include "master/nn/tensor.hpp"
#include "master/util/error.hpp"

namespace master::nn {

// Reverse-mode autodiff over row-major dense matrices. One tape records one
// forward pass; backward() replays it once in reverse and flushes gradients
// into the referenced Parameters. A non-recording tape computes identical
// values through the same code paths without building closures.
template <typename S>
class Tape {
 public:
  using Var = int;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat<S>& value(Var v) const {
    const Node& n = nodes_.at(static_cast<size_t>(v));
    return n.ext ? *n.ext : n.value;
  }
  const Mat<S>& grad(Var v) const { return nodes_.at(static_cast<size_t>(v)).grad; }
  S scalar(Var v) const {
    const Mat<S>& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) fail("shape", "scalar: node is " + shape_str(m));
    return m(0, 0);
  }

  Var input(Mat<S> v) { return push(std::move(v)); }

  Var constant(S v) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return push(std::move(m));
  }

  Var param(Parameter<S>& p) {
    auto it = param_vars_.find(&p);
    if (it != param_vars_.end()) return it->second;
    Var v = push_external(&p.value);
    param_vars_.emplace(&p, v);
    return v;
  }

  Var detach(Var a) { return push(Mat<S>(value(a))); }

  Var matmul(Var a, Var b) {
    const Mat<S>&A = value(a), &B = value(b);
    if (A.cols() != B.rows())
      fail("shape", "matmul: " + shape_str(A) + " vs " + shape_str(B));
    Var out = push(A * B);
    record(out, [this, a, b, out] {
      const Mat<S>& g = nodes_[out].grad;
      add_grad(a, g * value(b).transpose());
      add_grad(b, value(a).transpose() * g);
    });
    return out;
  }

  // A * B^T without materializing the transpose on the tape.
  Var matmul_nt(Var a, Var b) {
    const Mat<S>&A = value(a), &B = value(b);
    if (A.cols() != B.cols())
      fail("shape", "matmul_nt: " + shape_str(A) + " vs " + shape_str(B));
    Var out = push(A * B.transpose());
    record(out, [this, a, b, out] {
      const Mat<S>& g = nodes_[out].grad;
      add_grad(a, g * value(b));
      add_grad(b, g.transpose() * value(a));
    });
    return out;
  }

  Var add(Var a, Var b) {
    const Mat<S>&A = value(a), &B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols())
      fail("shape", "add: " + shape_str(A) + " vs " + shape_str(B));
    Var out = push(A + B);
    record(out, [this, a, b, out] {
      const Mat<S>& g = nodes_[out].grad;
      add_grad(a, g);
      add_grad(b, g);
    });
    return out;
  }

  // b is 1xC, broadcast-added to every row of a.
  Var add_rowvec(Var a, Var b) {
    const Mat<S>&A = value(a), &B = value(b);
    if (B.rows() != 1 || A.cols() != B.cols())
      fail("shape", "add_rowvec: " + shape_str(A) + " vs " + shape_str(B));
    Mat<S> y = A;
    y.rowwise() += B.row(0);
    Var out = push(std::move(y));
    record(out, [this, a, b, out] {
      const Mat<S>& g = nodes_[out].grad;
      add_grad(a, g);
      add_grad(b, g.colwise().sum());
    });
    return out;
  }

  Var scale(Var a, double c) {
    Var out = push(Mat<S>(value(a) * static_cast<S>(c)));
    record(out, [this, a, c, out] { add_grad(a, nodes_[out].grad * static_cast<S>(c)); });
    return out;
  }

  Var mul(Var a, Var b) {
    const Mat<S>&A = value(a), &B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols())
      fail("shape", "mul: " + shape_str(A) + " vs " + shape_str(B));
    Var out = push(A.cwiseProduct(B));
    record(out, [this, a, b, out] {
      const Mat<S>& g = nodes_[out].grad;
      add_grad(a, g.cwiseProduct(value(b)));
      add_grad(b, g.cwiseProduct(value(a)));
    });
    return out;
  }

  Var gelu(Var a) {
    const S k = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    const S c = static_cast<S>(0.044715);
    const Mat<S>& x = value(a);
    Mat<S> u = (k * (x.array() + c * x.array().cube())).matrix();
    Mat<S> t = u.array().tanh().matrix();
    Mat<S> y = (S(0.5) * x.array() * (S(1) + t.array())).matrix();
    Var out = push(std::move(y));
    record(out, [this, a, out, t = std::move(t), k, c] {
      const Mat<S>& g = nodes_[out].grad;
      const Mat<S>& x = value(a);
      auto sech2 = (S(1) - t.array().square());
      auto du = k * (S(1) + S(3) * c * x.array().square());
      Mat<S> dx =
          (g.array() * (S(0.5) * (S(1) + t.array()) + S(0.5) * x.array() * sech2 * du)).matrix();
      add_grad(a, dx);
    });
    return out;
  }

  // Normalizes each row to zero mean / unit variance, then y = xhat*gain + bias.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Mat<S>&X = value(x), &G = value(gain), &B = value(bias);
    if (G.rows() != 1 || B.rows() != 1 || G.cols() != X.cols() || B.cols() != X.cols())
      fail("shape", "layer_norm: " + shape_str(X) + " gain " + shape_str(G) + " bias " + shape_str(B));
    const Eigen::Index R = X.rows(), C = X.cols();
    Mat<S> xhat(R, C);
    Mat<S> inv_sigma(R, 1);
    for (Eigen::Index i = 0; i < R; ++i) {
      S mu = X.row(i).mean();
      S var = (X.row(i).array() - mu).square().sum() / static_cast<S>(C);
      S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
      inv_sigma(i, 0) = inv;
      xhat.row(i) = ((X.row(i).array() - mu) * inv).matrix();
    }
    Mat<S> y(R, C);
    for (Eigen::Index i = 0; i < R; ++i)
      y.row(i) = (xhat.row(i).array() * G.row(0).array() + B.row(0).array()).matrix();
    Var out = push(std::move(y));
    record(out, [this, x, gain, bias, out, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)] {
      const Mat<S>& g = nodes_[out].grad;
      const Mat<S>& G = value(gain);
      const Eigen::Index R = g.rows(), C = g.cols();
      Mat<S> dgain = Mat<S>::Zero(1, C), dbias = Mat<S>::Zero(1, C), dx(R, C);
      for (Eigen::Index i = 0; i < R; ++i) {
        dgain.row(0) += g.row(i).cwiseProduct(xhat.row(i));
        dbias.row(0) += g.row(i);
        Mat<S> dxh = g.row(i).cwiseProduct(G.row(0));
        S m1 = dxh.mean();
        S m2 = dxh.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) =
            ((dxh.array() - m1 - xhat.row(i).array() * m2) * inv_sigma(i, 0)).matrix();
      }
      add_grad(x, dx);
      add_grad(gain, dgain);
      add_grad(bias, dbias);
    });
    return out;
  }

  // axis=1: each row is a distribution; axis=0: each column.
  Var softmax(Var a, int axis = 1) {
    if (axis != 0 && axis != 1) fail("shape", "softmax: axis must be 0 or 1");
    const Mat<S>& X = value(a);
    Mat<S> p = axis == 1 ? softmax_rows_value(X) : Mat<S>(softmax_rows_value(Mat<S>(X.transpose())).transpose());
    Var out = push(std::move(p));
    record(out, [this, a, out, axis] {
      const Mat<S>& g = nodes_[out].grad;
      const Mat<S>& p = nodes_[out].ext ? *nodes_[out].ext : nodes_[out].value;
      Mat<S> dx(p.rows(), p.cols());
      if (axis == 1) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          S dot = g.row(i).cwiseProduct(p.row(i)).sum();
          dx.row(i) = p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
      } else {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
          S dot = g.col(j).cwiseProduct(p.col(j)).sum();
          dx.col(j) = p.col(j).cwiseProduct((g.col(j).array() - dot).matrix());
        }
      }
      add_grad(a, dx);
    });
    return out;
  }

  // out.row(k) = a.row(rows[k]); duplicate rows accumulate on backward.
  Var gather_rows(Var a, std::vector<int> rows) {
    const Mat<S>& A = value(a);
    Mat<S> y(static_cast<Eigen::Index>(rows.size()), A.cols());
    for (size_t k = 0; k < rows.size(); ++k) {
      if (rows[k] < 0 || rows[k] >= A.rows())
        fail("shape", "gather_rows: row " + std::to_string(rows[k]) + " outside " + shape_str(A));
      y.row(static_cast<Eigen::Index>(k)) = A.row(rows[k]);
    }
    Var out = push(std::move(y));
    record(out, [this, a, out, rows = std::move(rows)] {
      const Mat<S>& g = nodes_[out].grad;
      ensure_grad(a);
      Mat<S>& da = nodes_[static_cast<size_t>(a)].grad;
      for (size_t k = 0; k < rows.size(); ++k)
        da.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    });
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) fail("shape", "concat_rows: no inputs");
    Eigen::Index rows = 0, cols = value(parts[0]).cols();
    for (Var p : parts) {
      if (value(p).cols() != cols)
        fail("shape", "concat_rows: column mismatch " + shape_str(value(p)));
      rows += value(p).rows();
    }
    Mat<S> y(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      y.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    Var out = push(std::move(y));
    record(out, [this, out, parts] {
      const Mat<S>& g = nodes_[out].grad;
      Eigen::Index at = 0;
      for (Var p : parts) {
        Eigen::Index r = value(p).rows();
        add_grad(p, g.middleRows(at, r));
        at += r;
      }
    });
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) fail("shape", "concat_cols: no inputs");
    Eigen::Index cols = 0, rows = value(parts[0]).rows();
    for (Var p : parts) {
      if (value(p).rows() != rows)
        fail("shape", "concat_cols: row mismatch " + shape_str(value(p)));
      cols += value(p).cols();
    }
    Mat<S> y(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      y.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    Var out = push(std::move(y));
    record(out, [this, out, parts] {
      const Mat<S>& g = nodes_[out].grad;
      Eigen::Index at = 0;
      for (Var p : parts) {
        Eigen::Index c = value(p).cols();
        add_grad(p, g.middleCols(at, c));
        at += c;
      }
    });
    return out;
  }

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
    const Mat<S>& A = value(a);
    if (start < 0 || n < 1 || start + n > A.rows())
      fail("shape", "slice_rows: [" + std::to_string(start) + "," + std::to_string(start + n) +
                        ") outside " + shape_str(A));
    Var out = push(Mat<S>(A.middleRows(start, n)));
    record(out, [this, a, out, start, n] {
      ensure_grad(a);
      nodes_[static_cast<size_t>(a)].grad.middleRows(start, n) += nodes_[static_cast<size_t>(out)].grad;
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
    const Mat<S>& A = value(a);
    if (start < 0 || n < 1 || start + n > A.cols())
      fail("shape", "slice_cols: [" + std::to_string(start) + "," + std::to_string(start + n) +
                        ") outside " + shape_str(A));
    Var out = push(Mat<S>(A.middleCols(start, n)));
    record(out, [this, a, out, start, n] {
      ensure_grad(a);
      nodes_[static_cast<size_t>(a)].grad.middleCols(start, n) += nodes_[static_cast<size_t>(out)].grad;
    });
    return out;
  }

  Var transpose(Var a) {
    Var out = push(Mat<S>(value(a).transpose()));
    record(out, [this, a, out] { add_grad(a, nodes_[out].grad.transpose()); });
    return out;
  }

  Var reduce_sum(Var a) {
    Mat<S> y(1, 1);
    y(0, 0) = value(a).sum();
    Var out = push(std::move(y));
    record(out, [this, a, out] {
      add_grad(a, Mat<S>(Mat<S>::Constant(value(a).rows(), value(a).cols(),
                                          nodes_[out].grad(0, 0))));
    });
    return out;
  }

  // Mean over rows of -log softmax(logits.row(i))[targets[i]].
  Var cross_entropy_rows(Var logits, std::vector<int> targets) {
    const Mat<S>& L = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != L.rows())
      fail("shape", "cross_entropy_rows: " + std::to_string(targets.size()) + " targets vs " +
                        shape_str(L));
    if (targets.empty()) fail("no_positions", "no supervised positions");
    Mat<S> probs = softmax_rows_value(L);
    S total = S(0);
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
      int t = targets[static_cast<size_t>(i)];
      if (t < 0 || t >= L.cols())
        fail("shape", "cross_entropy_rows: target " + std::to_string(t) + " outside " + shape_str(L));
      S m = L.row(i).maxCoeff();
      S lse = std::log((L.row(i).array() - m).exp().sum()) + m;
      total += lse - L(i, t);
    }
    Mat<S> y(1, 1);
    y(0, 0) = total / static_cast<S>(L.rows());
    Var out = push(std::move(y));
    record(out, [this, logits, out, targets = std::move(targets), probs = std::move(probs)] {
      S g = nodes_[out].grad(0, 0) / static_cast<S>(probs.rows());
      Mat<S> dl = probs;
      for (Eigen::Index i = 0; i < dl.rows(); ++i) dl(i, targets[static_cast<size_t>(i)]) -= S(1);
      add_grad(logits, Mat<S>(dl * g));
    });
    return out;
  }

  // Mean over rows of -sum_j T(i,j) log softmax(logits.row(i))_j; T is constant.
  Var soft_cross_entropy(Var logits, Mat<S> target_probs) {
    const Mat<S>& L = value(logits);
    if (L.rows() != target_probs.rows() || L.cols() != target_probs.cols())
      fail("shape", "soft_cross_entropy: " + shape_str(L) + " vs " + shape_str(target_probs));
    Mat<S> probs = softmax_rows_value(L);
    S total = S(0);
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
      S m = L.row(i).maxCoeff();
      S lse = std::log((L.row(i).array() - m).exp().sum()) + m;
      total += target_probs.row(i).cwiseProduct((Mat<S>::Constant(1, L.cols(), lse) - L.row(i))).sum();
    }
    Mat<S> y(1, 1);
    y(0, 0) = total / static_cast<S>(L.rows());
    Var out = push(std::move(y));
    record(out, [this, logits, out, probs = std::move(probs), target_probs = std::move(target_probs)] {
      S g = nodes_[out].grad(0, 0) / static_cast<S>(probs.rows());
      add_grad(logits, Mat<S>((probs - target_probs) * g));
    });
    return out;
  }

  // targets indexes the full sequence: target for position p is targets[p].
  Var masked_cross_entropy(Var logits_full, const std::vector<int>& targets,
                           const std::vector<int>& positions) {
    if (positions.empty()) fail("no_positions", "no supervised positions");
    const Mat<S>& L = value(logits_full);
    if (static_cast<Eigen::Index>(targets.size()) != L.rows())
      fail("shape", "masked_cross_entropy: " + std::to_string(targets.size()) + " targets vs " +
                        shape_str(L));
    std::vector<int> picked;
    picked.reserve(positions.size());
    for (int p : positions) {
      if (p < 0 || p >= static_cast<int>(targets.size()))
        fail("shape", "masked_cross_entropy: position " + std::to_string(p) + " outside " +
                          shape_str(L));
      picked.push_back(targets[static_cast<size_t>(p)]);
    }
    Var rows = gather_rows(logits_full, positions);
    return cross_entropy_rows(rows, std::move(picked));
  }

  void backward(Var loss) {
    if (!recording_) fail("tape", "backward on a non-recording tape");
    if (consumed_) fail("tape_reuse", "backward called twice on one tape");
    consumed_ = true;
    const Mat<S>& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1)
      fail("shape", "backward: loss must be 1x1, got " + shape_str(lv));
    ensure_grad(loss);
    nodes_[static_cast<size_t>(loss)].grad(0, 0) = S(1);
    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.back || n.grad.size() == 0) continue;
      n.back();
    }
    for (auto& [p, var] : param_vars_) {
      const Mat<S>& g = nodes_[static_cast<size_t>(var)].grad;
      if (g.size() != 0) p->grad += g;
    }
  }

  size_t num_nodes() const { return nodes_.size(); }
  bool recording() const { return recording_; }

  static Mat<S> softmax_rows_value(const Mat<S>& x) {
    Mat<S> p(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S m = x.row(i).maxCoeff();
      Mat<S> e = (x.row(i).array() - m).exp().matrix();
      p.row(i) = e / e.sum();
    }
    return p;
  }

 private:
  struct Node {
    Mat<S> value;
    const Mat<S>* ext = nullptr;
    Mat<S> grad;
    std::function<void()> back;
  };

  Var push(Mat<S> v) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, nullptr});
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var push_external(const Mat<S>* v) {
    nodes_.push_back(Node{{}, v, {}, nullptr});
    return static_cast<Var>(nodes_.size() - 1);
  }

  template <typename F>
  void record(Var out, F&& back) {
    if (recording_) nodes_[static_cast<size_t>(out)].back = std::forward<F>(back);
  }

  void ensure_grad(Var v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (n.grad.size() == 0) {
      const Mat<S>& val = n.ext ? *n.ext : n.value;
      n.grad = Mat<S>::Zero(val.rows(), val.cols());
    }
  }

  template <typename Expr>
  void add_grad(Var v, const Expr& g) {
    ensure_grad(v);
    nodes_[static_cast<size_t>(v)].grad += g;
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<S>*, Var> param_vars_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace master::nn
