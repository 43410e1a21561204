#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "graspforge/tensor.hpp"

namespace gf::nn {

// Reverse-mode autodiff tape over dense tensors. Nodes are appended in
// topological order; backward() sweeps them in reverse. Rank-1 tensors act as
// a single row wherever a 2-D view is needed.
//
// Instantiated with float for training and double for the finite-difference
// verification paths.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;        // allocated lazily
    bool needs_grad = false;
    BackFn back;           // empty for leaves
  };

  int input(Tensor<T> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  int constant(Tensor<T> value) { return input(std::move(value), false); }

  const Tensor<T>& value(int id) const { return nodes_.at(id).value; }
  bool needs_grad(int id) const { return nodes_.at(id).needs_grad; }

  Tensor<T>& grad(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_.at(id).grad.data.empty(); }

  /// Appends an op node. `back` must add into parent grads via grad().
  int make_node(Tensor<T> value, const std::vector<int>& parents, BackFn back) {
    bool needs = false;
    for (int p : parents) needs = needs || nodes_.at(p).needs_grad;
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void backward(int root) {
    if (nodes_.at(root).value.numel() != 1)
      throw std::invalid_argument("backward root must be a scalar");
    grad(root).data[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && !n.grad.data.empty()) n.back(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- ops -----------------------------------------------------------------

  /// y = x * W^T + b with x (N x in), W (out x in), b (out); y (N x out).
  int affine(int x, int w, int b) {
    const Tensor<T>&xv = value(x), &wv = value(w), &bv = value(b);
    int n = xv.rows(), in = xv.cols(), out = wv.rows();
    if (wv.cols() != in) throw std::invalid_argument("affine: weight/input width mismatch");
    if (bv.numel() != out) throw std::invalid_argument("affine: bias width mismatch");
    Tensor<T> y = Tensor<T>::zeros({n, out});
    for (int r = 0; r < n; ++r)
      for (int o = 0; o < out; ++o) {
        T acc = bv.data[o];
        for (int k = 0; k < in; ++k) acc += xv.at(r, k) * wv.at(o, k);
        y.at(r, o) = acc;
      }
    int id = next_id();
    return make_node(std::move(y), {x, w, b}, [x, w, b, id, n, in, out](Tape& t) {
      const Tensor<T>& gy = t.grad(id);
      const Tensor<T>&xv = t.value(x), &wv = t.value(w);
      if (t.needs_grad(x)) {
        Tensor<T>& gx = t.grad(x);
        for (int r = 0; r < n; ++r)
          for (int k = 0; k < in; ++k) {
            T acc = T(0);
            for (int o = 0; o < out; ++o) acc += gy.at(r, o) * wv.at(o, k);
            gx.at(r, k) += acc;
          }
      }
      if (t.needs_grad(w)) {
        Tensor<T>& gw = t.grad(w);
        for (int o = 0; o < out; ++o)
          for (int k = 0; k < in; ++k) {
            T acc = T(0);
            for (int r = 0; r < n; ++r) acc += gy.at(r, o) * xv.at(r, k);
            gw.at(o, k) += acc;
          }
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int o = 0; o < out; ++o) {
          T acc = T(0);
          for (int r = 0; r < n; ++r) acc += gy.at(r, o);
          gb.data[o] += acc;
        }
      }
    });
  }

  int relu(int x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    int id = next_id();
    return make_node(std::move(y), {x}, [x, id](Tape& t) {
      const Tensor<T>& gy = t.grad(id);
      const Tensor<T>& xv = t.value(x);
      if (!t.needs_grad(x)) return;
      Tensor<T>& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i)
        if (xv.data[i] > T(0)) gx.data[i] += gy.data[i];
    });
  }

  int tanh_act(int x) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v = std::tanh(v);
    int id = next_id();
    return make_node(std::move(y), {x}, [x, id](Tape& t) {
      const Tensor<T>& gy = t.grad(id);
      const Tensor<T>& yv = t.value(id);
      if (!t.needs_grad(x)) return;
      Tensor<T>& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i)
        gx.data[i] += gy.data[i] * (T(1) - yv.data[i] * yv.data[i]);
    });
  }

  int add(int a, int b) {
    const Tensor<T>&av = value(a), &bv = value(b);
    if (av.numel() != bv.numel()) throw std::invalid_argument("add: size mismatch");
    Tensor<T> y = av;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
    int id = next_id();
    return make_node(std::move(y), {a, b}, [a, b, id](Tape& t) {
      const Tensor<T>& gy = t.grad(id);
      for (int p : {a, b}) {
        if (!t.needs_grad(p)) continue;
        Tensor<T>& gp = t.grad(p);
        for (std::size_t i = 0; i < gy.data.size(); ++i) gp.data[i] += gy.data[i];
      }
    });
  }

  int scale(int x, T c) {
    Tensor<T> y = value(x);
    for (T& v : y.data) v *= c;
    int id = next_id();
    return make_node(std::move(y), {x}, [x, c, id](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& gy = t.grad(id);
      Tensor<T>& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i] * c;
    });
  }

  /// Column slice [from, to) of a (N x C) tensor.
  int slice_cols(int x, int from, int to) {
    const Tensor<T>& xv = value(x);
    int n = xv.rows(), c = xv.cols();
    if (from < 0 || to > c || from >= to) throw std::invalid_argument("slice_cols: bad range");
    Tensor<T> y = Tensor<T>::zeros({n, to - from});
    for (int r = 0; r < n; ++r)
      for (int k = from; k < to; ++k) y.at(r, k - from) = xv.at(r, k);
    int id = next_id();
    return make_node(std::move(y), {x}, [x, from, to, n, id](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& gy = t.grad(id);
      Tensor<T>& gx = t.grad(x);
      for (int r = 0; r < n; ++r)
        for (int k = from; k < to; ++k) gx.at(r, k) += gy.at(r, k - from);
    });
  }

  int concat_cols(int a, int b) {
    const Tensor<T>&av = value(a), &bv = value(b);
    int n = av.rows();
    if (bv.rows() != n) throw std::invalid_argument("concat_cols: row mismatch");
    int ca = av.cols(), cb = bv.cols();
    Tensor<T> y = Tensor<T>::zeros({n, ca + cb});
    for (int r = 0; r < n; ++r) {
      for (int k = 0; k < ca; ++k) y.at(r, k) = av.at(r, k);
      for (int k = 0; k < cb; ++k) y.at(r, ca + k) = bv.at(r, k);
    }
    int id = next_id();
    return make_node(std::move(y), {a, b}, [a, b, n, ca, cb, id](Tape& t) {
      const Tensor<T>& gy = t.grad(id);
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad(a);
        for (int r = 0; r < n; ++r)
          for (int k = 0; k < ca; ++k) ga.at(r, k) += gy.at(r, k);
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int r = 0; r < n; ++r)
          for (int k = 0; k < cb; ++k) gb.at(r, k) += gy.at(r, ca + k);
      }
    });
  }

  /// Column-wise max over rows: (N x C) -> (1 x C). First max wins ties.
  int row_max(int x) {
    const Tensor<T>& xv = value(x);
    int n = xv.rows(), c = xv.cols();
    Tensor<T> y = Tensor<T>::zeros({1, c});
    auto argmax = std::make_shared<std::vector<int>>(c, 0);
    for (int k = 0; k < c; ++k) {
      T best = xv.at(0, k);
      int bi = 0;
      for (int r = 1; r < n; ++r)
        if (xv.at(r, k) > best) {
          best = xv.at(r, k);
          bi = r;
        }
      y.at(0, k) = best;
      (*argmax)[k] = bi;
    }
    int id = next_id();
    return make_node(std::move(y), {x}, [x, argmax, c, id](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& gy = t.grad(id);
      Tensor<T>& gx = t.grad(x);
      for (int k = 0; k < c; ++k) gx.at((*argmax)[k], k) += gy.at(0, k);
    });
  }

  /// Mean squared error over all elements (scalar).
  int mse(int a, int b) {
    const Tensor<T>&av = value(a), &bv = value(b);
    if (av.numel() != bv.numel()) throw std::invalid_argument("mse: size mismatch");
    const T inv_n = T(1) / static_cast<T>(av.numel());
    T acc = T(0);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      T d = av.data[i] - bv.data[i];
      acc += d * d;
    }
    Tensor<T> y = Tensor<T>::scalar(acc * inv_n);
    int id = next_id();
    return make_node(std::move(y), {a, b}, [a, b, inv_n, id](Tape& t) {
      T g = t.grad(id).data[0];
      const Tensor<T>&av = t.value(a), &bv = t.value(b);
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad(a);
        for (std::size_t i = 0; i < av.data.size(); ++i)
          ga.data[i] += g * T(2) * (av.data[i] - bv.data[i]) * inv_n;
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (std::size_t i = 0; i < av.data.size(); ++i)
          gb.data[i] += g * T(2) * (bv.data[i] - av.data[i]) * inv_n;
      }
    });
  }

  int mean_all(int x) {
    const Tensor<T>& xv = value(x);
    const T inv_n = T(1) / static_cast<T>(xv.numel());
    T acc = T(0);
    for (T v : xv.data) acc += v;
    Tensor<T> y = Tensor<T>::scalar(acc * inv_n);
    int id = next_id();
    return make_node(std::move(y), {x}, [x, inv_n, id](Tape& t) {
      if (!t.needs_grad(x)) return;
      T g = t.grad(id).data[0] * inv_n;
      Tensor<T>& gx = t.grad(x);
      for (T& v : gx.data) v += g;
    });
  }

  /// Row subset (N x C) -> (|rows| x C).
  int gather_rows(int x, std::vector<int> rows) {
    const Tensor<T>& xv = value(x);
    int c = xv.cols();
    Tensor<T> y = Tensor<T>::zeros({static_cast<int>(rows.size()), c});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int k = 0; k < c; ++k) y.at(static_cast<int>(r), k) = xv.at(rows[r], k);
    int id = next_id();
    auto rows_sp = std::make_shared<std::vector<int>>(std::move(rows));
    return make_node(std::move(y), {x}, [x, rows_sp, c, id](Tape& t) {
      if (!t.needs_grad(x)) return;
      const Tensor<T>& gy = t.grad(id);
      Tensor<T>& gx = t.grad(x);
      for (std::size_t r = 0; r < rows_sp->size(); ++r)
        for (int k = 0; k < c; ++k) gx.at((*rows_sp)[r], k) += gy.at(static_cast<int>(r), k);
    });
  }

 private:
  int next_id() const { return static_cast<int>(nodes_.size()); }
  std::vector<Node> nodes_;
};

}  // namespace gf::nn
