// Copyright 2026 The exsum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Dense f64 tensors with reverse-mode autodiff. Ops record a DAG when grad
// mode is on and any input requires gradients; Tensor::backward() runs one
// reverse topological sweep, accumulating into per-node grad buffers.
// Everything is single-threaded and deterministic: fixed seeds give
// bit-identical training trajectories.

#ifndef EXSUM_TENSOR_HPP_
#define EXSUM_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "exsum/util.hpp"

namespace exsum {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

inline thread_local bool grad_enabled = true;
inline thread_local std::size_t zero_cosine_events = 0;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t size() const { return value.size(); }
};

}  // namespace detail

// Scoped inference mode: ops executed inside compute values only and record
// nothing.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline std::size_t zero_cosine_events() { return detail::zero_cosine_events; }

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), {}, requires_grad);
  }

  static Tensor constant(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), false);
  }

  static Tensor param(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), true);
  }

  static Tensor scalar(double v) { return constant({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }

  std::size_t rows() const {
    check2d("rows");
    return node_->shape[0];
  }
  std::size_t cols() const {
    check2d("cols");
    return node_->shape[1];
  }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& grad() {
    if (!node_->requires_grad) {
      throw ShapeError("grad(): tensor does not require gradients");
    }
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    return const_cast<Tensor*>(this)->grad();
  }

  void zero_grad() {
    if (node_->requires_grad) {
      std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
  }

  double item() const {
    if (size() != 1) {
      throw ShapeError("item(): tensor is not scalar, shape " +
                       shape_str(node_->shape));
    }
    return node_->value[0];
  }

  // Reverse sweep from a scalar. Gradients accumulate across repeated calls.
  void backward() const {
    if (size() != 1) {
      throw ShapeError("backward(): loss must be scalar, shape " +
                       shape_str(node_->shape));
    }
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    topo(node_.get(), visited, order);
    // Interior gradients are scratch space recomputed per sweep; only leaf
    // (parameter) gradients accumulate across calls.
    for (detail::Node* n : order) {
      if (n->backward_fn) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    if (node_->requires_grad) node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

  // Handles compare by identity; used to check weight tying.
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  static Tensor make(Shape shape, std::vector<double> values,
                     bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    const std::size_t n = shape_size(shape);
    node->shape = std::move(shape);
    if (values.empty()) {
      node->value.assign(n, 0.0);
    } else {
      if (values.size() != n) {
        throw ShapeError("tensor init: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(node->shape));
      }
      node->value = std::move(values);
    }
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(n, 0.0);
    return wrap(std::move(node));
  }

  void check2d(const char* what) const {
    if (node_->shape.size() != 2) {
      throw ShapeError(std::string(what) + "(): tensor is not 2-D, shape " +
                       shape_str(node_->shape));
    }
  }

  static void topo(detail::Node* n, std::unordered_set<detail::Node*>& visited,
                   std::vector<detail::Node*>& order) {
    // Iterative post-order: parents pushed before their consumers.
    struct Frame {
      detail::Node* node;
      std::size_t next_parent;
    };
    if (visited.count(n)) return;
    std::vector<Frame> stack{{n, 0}};
    visited.insert(n);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        detail::Node* p = f.node->parents[f.next_parent++].get();
        if (!visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

inline Tensor make_op(Shape shape, std::vector<double> values, bool record,
                      std::vector<Tensor> parents,
                      std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (record) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), 0.0);
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(node));
}

// Raw row-major GEMM kernels; the _acc variants accumulate into dst.

// c(m,n) += a(m,k) * b(k,n)
inline void gemm_nn_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c(m,n) += a(m,k) * b(n,k)^T
inline void gemm_nt_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c(k,n) += a(m,k)^T * b(m,n)
inline void gemm_tn_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void check_same_shape(const char* op, const Tensor& a,
                             const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

// ---- Elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.values()[i] + b.values()[i];
  }
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      a.shape(), std::move(out), rec, {a, b}, [](detail::Node& self) {
        for (int side = 0; side < 2; ++side) {
          auto& p = *self.parents[static_cast<std::size_t>(side)];
          if (!p.requires_grad) continue;
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            p.grad[i] += self.grad[i];
          }
        }
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.values()[i] - b.values()[i];
  }
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      a.shape(), std::move(out), rec, {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i];
          }
        }
        if (pb.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pb.grad[i] -= self.grad[i];
          }
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.values()[i] * b.values()[i];
  }
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      a.shape(), std::move(out), rec, {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i] * pb.value[i];
          }
        }
        if (pb.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pb.grad[i] += self.grad[i] * pa.value[i];
          }
        }
      });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  const bool rec = detail::should_record({&a});
  return detail::make_op(a.shape(), std::move(out), rec, {a},
                         [c](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             p.grad[i] += self.grad[i] * c;
                           }
                         });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  }
  const bool rec = detail::should_record({&a});
  return detail::make_op(a.shape(), std::move(out), rec, {a},
                         [](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
                           }
                         });
}

// Broadcast-adds a length-n vector to every row of a (m,n) matrix.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.shape().size() != 2 || shape_size(v.shape()) != a.cols()) {
    throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " vs " +
                     shape_str(v.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = a.values()[i * n + j] + v.values()[j];
    }
  }
  const bool rec = detail::should_record({&a, &v});
  return detail::make_op(
      a.shape(), std::move(out), rec, {a, v}, [m, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pa.requires_grad) {
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i];
          }
        }
        if (pv.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              pv.grad[j] += self.grad[i * n + j];
            }
          }
        }
      });
}

// ---- Matrix products ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn_acc(a.values().data(), b.values().data(), out.data(), m, k,
                      n);
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      {m, n}, std::move(out), rec, {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          // dA += dC * B^T
          detail::gemm_nt_acc(self.grad.data(), pb.value.data(),
                              pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          // dB += A^T * dC
          detail::gemm_tn_acc(pa.value.data(), self.grad.data(),
                              pb.grad.data(), m, k, n);
        }
      });
}

// a (m,k) x b(n,k)^T -> (m,n); used for attention scores and tied logits.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nt_acc(a.values().data(), b.values().data(), out.data(), m, k,
                      n);
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      {m, n}, std::move(out), rec, {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          // dA += dC * B
          detail::gemm_nn_acc(self.grad.data(), pb.value.data(),
                              pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          // dB += dC^T * A
          detail::gemm_tn_acc(self.grad.data(), pa.value.data(),
                              pb.grad.data(), m, n, k);
        }
      });
}

// ---- Row-wise normalizations ----

// Row-wise softmax; optional mask (1 = keep) zeroes masked positions exactly.
inline Tensor softmax(const Tensor& a,
                      const std::vector<std::uint8_t>* mask = nullptr) {
  if (a.shape().size() != 2) {
    throw ShapeError("softmax: expected 2-D input, got " +
                     shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  if (mask && mask->size() != m * n) {
    throw ShapeError("softmax: mask size " + std::to_string(mask->size()) +
                     " for shape " + shape_str(a.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.values().data() + i * n;
    double* orow = out.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask || (*mask)[i * n + j]) mx = std::max(mx, row[j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ShapeError("softmax: fully masked row " + std::to_string(i));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask || (*mask)[i * n + j]) {
        orow[j] = std::exp(row[j] - mx);
        z += orow[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  const bool rec = detail::should_record({&a});
  return detail::make_op(
      {m, n}, std::move(out), rec, {a}, [m, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
          const double* y = self.value.data() + i * n;
          const double* g = self.grad.data() + i * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
          double* pg = p.grad.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) pg[j] += y[j] * (g[j] - dot);
        }
      });
}

// Row-wise layer normalization with learned gain/bias over the last axis.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain,
                         const Tensor& bias, double eps = 1e-5) {
  if (a.shape().size() != 2 || shape_size(gain.shape()) != a.cols() ||
      shape_size(bias.shape()) != a.cols()) {
    throw ShapeError("layer_norm: " + shape_str(a.shape()) + " with gain " +
                     shape_str(gain.shape()) + ", bias " +
                     shape_str(bias.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.values().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[i * n + j] = xh;
      out[i * n + j] = xh * gain.values()[j] + bias.values()[j];
    }
  }
  const bool rec = detail::should_record({&a, &gain, &bias});
  return detail::make_op(
      {m, n}, std::move(out), rec, {a, gain, bias},
      [m, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::size_t i = 0; i < m; ++i) {
          const double* g = self.grad.data() + i * n;
          const double* xh = xhat.data() + i * n;
          if (pg.requires_grad) {
            for (std::size_t j = 0; j < n; ++j) pg.grad[j] += g[j] * xh[j];
          }
          if (pb.requires_grad) {
            for (std::size_t j = 0; j < n; ++j) pb.grad[j] += g[j];
          }
          if (px.requires_grad) {
            // dx = (1/s) * (dy' - mean(dy') - xhat * mean(dy' * xhat)),
            // with dy' = dy * gain.
            double mean_dy = 0.0, mean_dy_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dyp = g[j] * pg.value[j];
              mean_dy += dyp;
              mean_dy_xh += dyp * xh[j];
            }
            mean_dy /= static_cast<double>(n);
            mean_dy_xh /= static_cast<double>(n);
            double* pxg = px.grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dyp = g[j] * pg.value[j];
              pxg[j] += inv_std[i] * (dyp - mean_dy - xh[j] * mean_dy_xh);
            }
          }
        }
      });
}

// ---- Gather / structural ops ----

inline Tensor embedding_lookup(const Tensor& table,
                               const std::vector<int>& ids) {
  if (table.shape().size() != 2) {
    throw ShapeError("embedding_lookup: table must be 2-D, got " +
                     shape_str(table.shape()));
  }
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw ShapeError("embedding_lookup: id " + std::to_string(id) +
                       " out of range for table " + shape_str(table.shape()));
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(id) * d, d,
                out.data() + i * d);
  }
  const bool rec = detail::should_record({&table});
  return detail::make_op(
      {ids.size(), d}, std::move(out), rec, {table},
      [ids, d](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          double* dst = p.grad.data() + static_cast<std::size_t>(ids[i]) * d;
          const double* src = self.grad.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      });
}

inline Tensor take_row(const Tensor& a, std::size_t row) {
  if (a.shape().size() != 2 || row >= a.rows()) {
    throw ShapeError("take_row: row " + std::to_string(row) + " of " +
                     shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<double> out(a.values().begin() +
                              static_cast<std::ptrdiff_t>(row * n),
                          a.values().begin() +
                              static_cast<std::ptrdiff_t>((row + 1) * n));
  const bool rec = detail::should_record({&a});
  return detail::make_op({1, n}, std::move(out), rec, {a},
                         [row, n](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           for (std::size_t j = 0; j < n; ++j) {
                             p.grad[row * n + j] += self.grad[j];
                           }
                         });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start,
                         std::size_t len) {
  if (a.shape().size() != 2 || start + len > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") of " +
                     shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * len);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.values().data() + i * n + start, len, out.data() + i * len);
  }
  const bool rec = detail::should_record({&a});
  return detail::make_op(
      {m, len}, std::move(out), rec, {a},
      [m, n, start, len](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < len; ++j) {
            p.grad[i * n + start + j] += self.grad[i * len + j];
          }
        }
      });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.rows() != m) {
      throw ShapeError("concat_cols: incompatible part " +
                       shape_str(p.shape()));
    }
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.values().data() + i * n, n, out.data() + i * total + off);
    }
    off += n;
  }
  bool rec = detail::grad_enabled;
  if (rec) {
    rec = false;
    for (const auto& p : parts) rec = rec || p.requires_grad();
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return detail::make_op(
      {m, total}, std::move(out), rec, parts,
      [m, total, widths](detail::Node& self) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < widths.size(); ++pi) {
          auto& p = *self.parents[pi];
          const std::size_t n = widths[pi];
          if (p.requires_grad) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                p.grad[i * n + j] += self.grad[i * total + off + j];
              }
            }
          }
          off += n;
        }
      });
}

// Stacks scalar tensors into a length-n vector.
inline Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ShapeError("stack_scalars: no inputs");
  std::vector<double> out;
  out.reserve(scalars.size());
  bool rec = false;
  for (const auto& s : scalars) {
    if (s.size() != 1) {
      throw ShapeError("stack_scalars: non-scalar input " +
                       shape_str(s.shape()));
    }
    out.push_back(s.values()[0]);
    rec = rec || s.requires_grad();
  }
  rec = rec && detail::grad_enabled;
  return detail::make_op({scalars.size()}, std::move(out), rec, scalars,
                         [](detail::Node& self) {
                           for (std::size_t i = 0; i < self.parents.size();
                                ++i) {
                             auto& p = *self.parents[i];
                             if (p.requires_grad) p.grad[0] += self.grad[i];
                           }
                         });
}

// ---- Reductions ----

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const bool rec = detail::should_record({&a});
  return detail::make_op({1}, {s}, rec, {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (double& g : p.grad) g += self.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// Stable log(sum(exp(x))) over all elements.
inline Tensor log_sum_exp(const Tensor& a) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : a.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : a.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  const bool rec = detail::should_record({&a});
  return detail::make_op({1}, {lse}, rec, {a}, [lse](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.grad[i] += self.grad[0] * std::exp(p.value[i] - lse);
    }
  });
}

// Cosine similarity of two equally sized tensors viewed as flat vectors.
// Either side having zero norm yields exactly 0 with zero gradients; the
// event counter is visible via zero_cosine_events().
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (shape_size(a.shape()) != shape_size(b.shape())) {
    throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.values()[i] * b.values()[i];
    na2 += a.values()[i] * a.values()[i];
    nb2 += b.values()[i] * b.values()[i];
  }
  const bool degenerate = na2 == 0.0 || nb2 == 0.0;
  if (degenerate) ++detail::zero_cosine_events;
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double cosv = degenerate ? 0.0 : dot / (na * nb);
  const bool rec = detail::should_record({&a, &b});
  return detail::make_op(
      {1}, {cosv}, rec, {a, b},
      [degenerate, cosv, na, nb](detail::Node& self) {
        if (degenerate) return;
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double g = self.grad[0];
        for (std::size_t i = 0; i < pa.value.size(); ++i) {
          const double av = pa.value[i], bv = pb.value[i];
          if (pa.requires_grad) {
            pa.grad[i] += g * (bv / (na * nb) - cosv * av / (na * na));
          }
          if (pb.requires_grad) {
            pb.grad[i] += g * (av / (na * nb) - cosv * bv / (nb * nb));
          }
        }
      });
}

// Token-level cross entropy over rows of logits, averaged over positions
// whose target is not pad_id.
inline Tensor cross_entropy(const Tensor& logits,
                            const std::vector<int>& targets, int pad_id) {
  if (logits.shape().size() != 2 || targets.size() != logits.rows()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) +
                     " with " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t t = logits.rows(), v = logits.cols();
  std::size_t active = 0;
  double total = 0.0;
  std::vector<double> probs(t * v, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    if (targets[i] == pad_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw ShapeError("cross_entropy: target id " +
                       std::to_string(targets[i]) + " out of range");
    }
    ++active;
    const double* row = logits.values().data() + i * v;
    double mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[static_cast<std::size_t>(targets[i])];
    double* prow = probs.data() + i * v;
    for (std::size_t j = 0; j < v; ++j) prow[j] = std::exp(row[j] - lse);
  }
  if (active == 0) {
    throw ShapeError("cross_entropy: no non-pad target positions");
  }
  const double loss = total / static_cast<double>(active);
  const bool rec = detail::should_record({&logits});
  return detail::make_op(
      {1}, {loss}, rec, {logits},
      [targets, pad_id, t, v, active,
       probs = std::move(probs)](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0] / static_cast<double>(active);
        for (std::size_t i = 0; i < t; ++i) {
          if (targets[i] == pad_id) continue;
          const double* prow = probs.data() + i * v;
          double* grow = p.grad.data() + i * v;
          for (std::size_t j = 0; j < v; ++j) grow[j] += g * prow[j];
          grow[static_cast<std::size_t>(targets[i])] -= g;
        }
      });
}

// Inverted-scale dropout; identity when ratio <= 0. Draws one uniform per
// element from the supplied RNG, so placement in the call sequence is part of
// the deterministic trajectory.
inline Tensor dropout(const Tensor& a, double ratio, Rng& rng) {
  if (ratio <= 0.0) return a;
  if (ratio >= 1.0) throw ShapeError("dropout: ratio must be < 1");
  const double keep = 1.0 - ratio;
  std::vector<double> mask(a.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < ratio ? 0.0 : 1.0 / keep;
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.values()[i] * mask[i];
  }
  const bool rec = detail::should_record({&a});
  return detail::make_op(a.shape(), std::move(out), rec, {a},
                         [mask = std::move(mask)](detail::Node& self) {
                           auto& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             p.grad[i] += self.grad[i] * mask[i];
                           }
                         });
}

}  // namespace exsum

#endif  // EXSUM_TENSOR_HPP_
