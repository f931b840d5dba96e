#pragma once

// Dense row-major float64 tensors with tape-free reverse-mode differentiation.
//
// Every op that consumes a tensor requiring gradients records its parents and
// a backward rule on the result. Backward rules are themselves written in
// terms of tensor ops, so a backward sweep run with create_graph=true yields
// gradients that are again differentiable (needed for vector-Jacobian
// products inside a loss).
//
// Nodes are numbered in creation order. A parent is always older than its
// child, so sorting the reachable set by descending id is a valid reverse
// topological order and lets a sweep stop at the oldest requested input.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace leap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out, const Tensor& self)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Row/column extents of the 2-D view: rank 0 -> 1x1, rank 1 [n] -> 1xn.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::uint64_t id() const;
  const char* op_name() const;

  // Same values, no graph attachment.
  Tensor detach() const;
  // Detached copy that is a fresh differentiable leaf.
  Tensor detach_leaf() const;

  // In-place write access, allowed only on leaves (parameter updates between
  // graph constructions).
  std::span<double> mutable_data();

  const std::vector<Tensor>& parents() const;
  const TensorImpl* impl() const noexcept { return impl_.get(); }

  // Library-internal: build a result tensor, checking every value is finite.
  static Tensor make(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                     BackwardFn backward, const char* op);

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend struct TensorImpl;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<Tensor> parents;
  BackwardFn backward;

  ~TensorImpl();
};

// ---- graph recording control ----------------------------------------------

bool grad_enabled();

// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Forces recording on (e.g. to take a vector-Jacobian product while the
// caller is in no-grad mode).
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- primitives -------------------------------------------------------------

// Binary elementwise ops broadcast over the 2-D view: extents must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
// alpha = 1
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

// Sum of all entries, rank-0 result.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduce a broadcast result back to `shape` by summing expanded axes.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
// Per-row sums, [m, n] -> [m, 1].
Tensor row_sum(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// 2-D concatenation along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// Row-wise log-softmax of a [m, n] tensor.
Tensor log_softmax(const Tensor& a);

// Batched matrix-vector products where each row of `flat` stores a
// row-major (R x C) matrix:
//   bmv(flat [B, R*C], v [B, C])   -> [B, R],  out[b,r] = sum_c M_b[r,c] v[b,c]
//   bmtv(flat [B, R*C], u [B, R])  -> [B, C],  out[b,c] = sum_r M_b[r,c] u[b,r]
//   bouter(u [B, R], v [B, C])     -> [B, R*C], out[b, r*C+c] = u[b,r] v[b,c]
Tensor bmv(const Tensor& flat, const Tensor& v);
Tensor bmtv(const Tensor& flat, const Tensor& u);
Tensor bouter(const Tensor& u, const Tensor& v);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// ---- differentiation -------------------------------------------------------

class GradMap {
 public:
  bool contains(const Tensor& t) const { return grads_.count(t.impl()) > 0; }
  // Gradient for `t`; zeros of t's shape when t did not influence the root.
  Tensor at(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }
  void set(const TensorImpl* key, Tensor g) { grads_[key] = std::move(g); }

 private:
  std::unordered_map<const TensorImpl*, Tensor> grads_;
};

// Gradients of a scalar root with respect to every reachable trainable leaf.
GradMap backward(const Tensor& root, bool create_graph = false);

// sum_k cotangent_k . d(output_k)/d(input) for each requested input. Only
// nodes created after the oldest input are visited.
std::vector<Tensor> grad(const std::vector<Tensor>& outputs,
                         const std::vector<Tensor>& cotangents,
                         const std::vector<Tensor>& inputs, bool create_graph);

// cotangent^T (d output / d input), shaped like `input`. The result stays on
// the graph so it can be differentiated again.
Tensor vjp(const Tensor& output, const Tensor& input, const Tensor& cotangent,
           bool create_graph = true);

// Number of vjp() calls made on this thread since the last reset.
std::uint64_t vjp_count();
void reset_vjp_count();

}  // namespace leap
