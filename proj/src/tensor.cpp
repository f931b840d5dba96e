#include "leap/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

#include "leap/errors.hpp"

namespace leap {

namespace {

std::atomic<std::uint64_t> next_id{1};
thread_local bool grad_mode = true;
thread_local std::uint64_t vjp_calls = 0;

struct View2 {
  std::size_t r;
  std::size_t c;
};

View2 view2(const Shape& s) {
  if (s.empty()) return {1, 1};
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw DimensionError("2-D view requested for rank-" + std::to_string(s.size()) + " tensor " +
                       shape_str(s));
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  const std::size_t na = shape_numel(a), nb = shape_numel(b);
  if (nb == 1 && a.size() >= b.size()) return a;
  if (na == 1 && b.size() >= a.size()) return b;
  const View2 va = view2(a), vb = view2(b);
  auto merge = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                         shape_str(b));
  };
  return {merge(va.r, vb.r), merge(va.c, vb.c)};
}

template <class F>
std::vector<double> broadcast_apply(const Tensor& a, const Tensor& b, const Shape& out, F f) {
  const View2 vo = view2(out), va = view2(a.shape()), vb = view2(b.shape());
  std::vector<double> res(vo.r * vo.c);
  const auto da = a.data(), db = b.data();
  if (a.shape() == out && b.shape() == out) {
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = f(da[i], db[i]);
    return res;
  }
  for (std::size_t i = 0; i < vo.r; ++i) {
    const std::size_t ia = (va.r == 1 ? 0 : i) * va.c;
    const std::size_t ib = (vb.r == 1 ? 0 : i) * vb.c;
    for (std::size_t j = 0; j < vo.c; ++j) {
      res[i * vo.c + j] = f(da[ia + (va.c == 1 ? 0 : j)], db[ib + (vb.c == 1 ? 0 : j)]);
    }
  }
  return res;
}

template <class F>
std::vector<double> map_values(const Tensor& a, F f) {
  const auto d = a.data();
  std::vector<double> res(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) res[i] = f(d[i]);
  return res;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- TensorImpl --------------------------------------------------------------

TensorImpl::~TensorImpl() {
  // Release long parent chains iteratively; recursive shared_ptr teardown of a
  // deep solver graph would otherwise exhaust the stack.
  std::vector<std::shared_ptr<TensorImpl>> pending;
  auto harvest = [&pending](std::vector<Tensor>& ps) {
    for (Tensor& p : ps)
      if (p.impl_ && p.impl_.use_count() == 1) pending.push_back(std::move(p.impl_));
    ps.clear();
  };
  harvest(parents);
  while (!pending.empty()) {
    std::shared_ptr<TensorImpl> node = std::move(pending.back());
    pending.pop_back();
    harvest(node->parents);
    node->backward = nullptr;
  }
}

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->id = next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

Tensor Tensor::make(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                    BackwardFn backward, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->op = op;
  if (grad_mode) {
    bool needs = false;
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      t.impl_->requires_grad = true;
      t.impl_->parents = std::move(parents);
      t.impl_->backward = std::move(backward);
    }
  }
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::size_t Tensor::rows() const { return view2(impl_->shape).r; }
std::size_t Tensor::cols() const { return view2(impl_->shape).c; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }
bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::is_leaf() const { return !impl_->backward; }
std::uint64_t Tensor::id() const { return impl_->id; }
const char* Tensor::op_name() const { return impl_->op; }
const std::vector<Tensor>& Tensor::parents() const { return impl_->parents; }

Tensor Tensor::detach() const { return from(shape(), impl_->data); }

Tensor Tensor::detach_leaf() const { return parameter(shape(), impl_->data); }

std::span<double> Tensor::mutable_data() {
  if (impl_->backward)
    throw ContractError("mutable_data() is only permitted on leaf tensors");
  return impl_->data;
}

// ---- grad mode ---------------------------------------------------------------

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

EnableGradGuard::EnableGradGuard() : previous_(grad_mode) { grad_mode = true; }
EnableGradGuard::~EnableGradGuard() { grad_mode = previous_; }

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "add");
  auto vals = broadcast_apply(a, b, out, [](double x, double y) { return x + y; });
  return Tensor::make(std::move(out), std::move(vals), {a, b},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor ga, gb;
                        if (p[0].requires_grad()) ga = sum_to(g, p[0].shape());
                        if (p[1].requires_grad()) gb = sum_to(g, p[1].shape());
                        return {ga, gb};
                      },
                      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "sub");
  auto vals = broadcast_apply(a, b, out, [](double x, double y) { return x - y; });
  return Tensor::make(std::move(out), std::move(vals), {a, b},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor ga, gb;
                        if (p[0].requires_grad()) ga = sum_to(g, p[0].shape());
                        if (p[1].requires_grad()) gb = sum_to(neg(g), p[1].shape());
                        return {ga, gb};
                      },
                      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "mul");
  auto vals = broadcast_apply(a, b, out, [](double x, double y) { return x * y; });
  return Tensor::make(std::move(out), std::move(vals), {a, b},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor ga, gb;
                        if (p[0].requires_grad()) ga = sum_to(mul(g, p[1]), p[0].shape());
                        if (p[1].requires_grad()) gb = sum_to(mul(g, p[0]), p[1].shape());
                        return {ga, gb};
                      },
                      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "div");
  auto vals = broadcast_apply(a, b, out, [](double x, double y) { return x / y; });
  return Tensor::make(std::move(out), std::move(vals), {a, b},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor ga, gb;
                        if (p[0].requires_grad()) ga = sum_to(div(g, p[1]), p[0].shape());
                        if (p[1].requires_grad())
                          gb = sum_to(neg(div(mul(g, self), p[1])), p[1].shape());
                        return {ga, gb};
                      },
                      "div");
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make(a.shape(), map_values(a, [s](double x) { return s * x; }), {a},
                      [s](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                        return {scale(g, s)};
                      },
                      "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
  return Tensor::make(a.shape(), map_values(a, [s](double x) { return x + s; }), {a},
                      [](const Tensor& g, const Tensor&) -> std::vector<Tensor> { return {g}; },
                      "add_scalar");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) { return mul(a, a); }

// ---- activations ---------------------------------------------------------------

Tensor relu(const Tensor& a) {
  return Tensor::make(a.shape(), map_values(a, [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const Tensor& x = self.parents()[0];
                        Tensor mask = Tensor::from(
                            x.shape(), map_values(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; }));
                        return {mul(g, mask)};
                      },
                      "relu");
}

Tensor tanh(const Tensor& a) {
  return Tensor::make(a.shape(), map_values(a, [](double x) { return std::tanh(x); }), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        // 1 - tanh^2, kept on the graph through `self`
                        Tensor d = add_scalar(neg(mul(self, self)), 1.0);
                        return {mul(g, d)};
                      },
                      "tanh");
}

Tensor elu(const Tensor& a) {
  return Tensor::make(
      a.shape(), map_values(a, [](double x) { return x > 0.0 ? x : std::expm1(x); }), {a},
      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
        const Tensor& x = self.parents()[0];
        // derivative is 1 for x > 0 and exp(x) = out + 1 otherwise
        Tensor negative =
            Tensor::from(x.shape(), map_values(x, [](double v) { return v > 0.0 ? 0.0 : 1.0; }));
        Tensor d = add_scalar(mul(negative, self), 1.0);
        return {mul(g, d)};
      },
      "elu");
}

Tensor sigmoid(const Tensor& a) {
  return Tensor::make(a.shape(),
                      map_values(a, [](double x) {
                        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                        : std::exp(x) / (1.0 + std::exp(x));
                      }),
                      {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        Tensor d = mul(self, add_scalar(neg(self), 1.0));
                        return {mul(g, d)};
                      },
                      "sigmoid");
}

Tensor exp(const Tensor& a) {
  return Tensor::make(a.shape(), map_values(a, [](double x) { return std::exp(x); }), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {mul(g, self)};
                      },
                      "exp");
}

Tensor log(const Tensor& a) {
  return Tensor::make(a.shape(), map_values(a, [](double x) { return std::log(x); }), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {div(g, self.parents()[0])};
                      },
                      "log");
}

// ---- reductions and broadcasting ---------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make({}, {s}, {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {broadcast_to(g, self.parents()[0].shape())};
                      },
                      "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const View2 va = view2(a.shape());
  const View2 vt = view2(shape);
  if ((vt.r != va.r && vt.r != 1) || (vt.c != va.c && vt.c != 1))
    throw DimensionError("sum_to: cannot reduce " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  std::vector<double> out(vt.r * vt.c, 0.0);
  const auto d = a.data();
  for (std::size_t i = 0; i < va.r; ++i) {
    const std::size_t oi = (vt.r == 1 ? 0 : i) * vt.c;
    for (std::size_t j = 0; j < va.c; ++j) out[oi + (vt.c == 1 ? 0 : j)] += d[i * va.c + j];
  }
  return Tensor::make(shape, std::move(out), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {broadcast_to(g, self.parents()[0].shape())};
                      },
                      "sum_to");
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const View2 va = view2(a.shape());
  const View2 vt = view2(shape);
  if ((va.r != vt.r && va.r != 1) || (va.c != vt.c && va.c != 1))
    throw DimensionError("broadcast_to: cannot expand " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  std::vector<double> out(vt.r * vt.c);
  const auto d = a.data();
  for (std::size_t i = 0; i < vt.r; ++i) {
    const std::size_t ai = (va.r == 1 ? 0 : i) * va.c;
    for (std::size_t j = 0; j < vt.c; ++j) out[i * vt.c + j] = d[ai + (va.c == 1 ? 0 : j)];
  }
  return Tensor::make(shape, std::move(out), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {sum_to(g, self.parents()[0].shape())};
                      },
                      "broadcast_to");
}

Tensor row_sum(const Tensor& a) {
  require_rank2(a, "row_sum");
  return sum_to(a, {a.rows(), 1});
}

// ---- shape manipulation --------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  if (shape == a.shape()) return a;
  return Tensor::make(std::move(shape), a.to_vector(), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {reshape(g, self.parents()[0].shape())};
                      },
                      "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const Tensor& p : parts) require_rank2(p, "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed)
      throw DimensionError("concat: mismatched extents " + shape_str(parts[0].shape()) + " and " +
                           shape_str(p.shape()));
    total += axis == 0 ? p.rows() : p.cols();
  }
  Shape out_shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  if (axis == 0) {
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + offset);
      offset += p.numel();
    }
  } else {
    std::size_t col = 0;
    for (const Tensor& p : parts) {
      const std::size_t c = p.cols();
      const auto d = p.data();
      for (std::size_t i = 0; i < fixed; ++i)
        std::copy(d.begin() + i * c, d.begin() + (i + 1) * c, out.begin() + i * total + col);
      col += c;
    }
  }
  return Tensor::make(std::move(out_shape), std::move(out), parts,
                      [axis](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        std::vector<Tensor> grads;
                        std::size_t offset = 0;
                        for (const Tensor& p : self.parents()) {
                          const std::size_t len = axis == 0 ? p.rows() : p.cols();
                          grads.push_back(slice(g, axis, offset, len));
                          offset += len;
                        }
                        return grads;
                      },
                      "concat");
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  require_rank2(a, "slice");
  if (axis > 1) throw DimensionError("slice: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (start + length > extent || length == 0)
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside extent " +
                         std::to_string(extent));
  if (start == 0 && length == extent) return a;
  Shape out_shape = axis == 0 ? Shape{length, c} : Shape{r, length};
  std::vector<double> out;
  out.reserve(shape_numel(out_shape));
  const auto d = a.data();
  if (axis == 0) {
    out.assign(d.begin() + start * c, d.begin() + (start + length) * c);
  } else {
    for (std::size_t i = 0; i < r; ++i)
      out.insert(out.end(), d.begin() + i * c + start, d.begin() + i * c + start + length);
  }
  return Tensor::make(
      std::move(out_shape), std::move(out), {a},
      [axis, start, length](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
        const Tensor& src = self.parents()[0];
        const std::size_t extent = axis == 0 ? src.rows() : src.cols();
        const std::size_t other = axis == 0 ? src.cols() : src.rows();
        auto block = [&](std::size_t n) {
          return Tensor::zeros(axis == 0 ? Shape{n, other} : Shape{other, n});
        };
        std::vector<Tensor> pieces;
        if (start > 0) pieces.push_back(block(start));
        pieces.push_back(g);
        if (start + length < extent) pieces.push_back(block(extent - start - length));
        return {concat(pieces, axis)};
      },
      "slice");
}

Tensor log_softmax(const Tensor& a) {
  require_rank2(a, "log_softmax");
  const std::size_t r = a.rows(), c = a.cols();
  const auto d = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = d[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, d[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(d[i * c + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = d[i * c + j] - lse;
  }
  return Tensor::make({r, c}, std::move(out), {a},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        return {sub(g, mul(exp(self), row_sum(g)))};
                      },
                      "log_softmax");
}

// ---- linear algebra --------------------------------------------------------------

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

// op(a) op(b) where op transposes when the flag is set. Backward rules reuse
// the same kernel with swapped flags, so no transposed copies are made.
Tensor gemm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = ta ? a.cols() : a.rows(), k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows(), n = tb ? b.rows() : b.cols();
  if (k != kb)
    throw DimensionError("matmul: " + shape_str(a.shape()) + (ta ? "^T" : "") + " x " +
                         shape_str(b.shape()) + (tb ? "^T" : ""));
  std::vector<double> out(m * n);
  ConstMap ma(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  ConstMap mb(b.data().data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  Eigen::Map<RowMajor> mc(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!ta && !tb) {
    mc.noalias() = ma * mb;
  } else if (!ta && tb) {
    mc.noalias() = ma * mb.transpose();
  } else if (ta && !tb) {
    mc.noalias() = ma.transpose() * mb;
  } else {
    mc.noalias() = ma.transpose() * mb.transpose();
  }
  return Tensor::make({m, n}, std::move(out), {a, b},
                      [ta, tb](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor ga, gb;
                        // C = op(A) op(B); dop(A) = G op(B)^T, dop(B) = op(A)^T G.
                        if (p[0].requires_grad())
                          ga = ta ? gemm(p[1], g, tb, true) : gemm(g, p[1], false, !tb);
                        if (p[1].requires_grad())
                          gb = tb ? gemm(g, p[0], true, ta) : gemm(p[0], g, !ta, false);
                        return {ga, gb};
                      },
                      "matmul");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return gemm(a, b, false, false); }

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto d = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return Tensor::make({c, r}, std::move(out), {a},
                      [](const Tensor& g, const Tensor&) -> std::vector<Tensor> {
                        return {transpose(g)};
                      },
                      "transpose");
}

Tensor bmv(const Tensor& flat, const Tensor& v) {
  require_rank2(flat, "bmv");
  require_rank2(v, "bmv");
  const std::size_t batch = flat.rows(), c = v.cols();
  if (v.rows() != batch || c == 0 || flat.cols() % c != 0)
    throw DimensionError("bmv: " + shape_str(flat.shape()) + " with " + shape_str(v.shape()));
  const std::size_t r = flat.cols() / c;
  std::vector<double> out(batch * r, 0.0);
  const auto f = flat.data(), x = v.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      const std::size_t base = b * r * c + i * c;
      for (std::size_t j = 0; j < c; ++j) s += f[base + j] * x[b * c + j];
      out[b * r + i] = s;
    }
  return Tensor::make({batch, r}, std::move(out), {flat, v},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor gf, gv;
                        if (p[0].requires_grad()) gf = bouter(g, p[1]);
                        if (p[1].requires_grad()) gv = bmtv(p[0], g);
                        return {gf, gv};
                      },
                      "bmv");
}

Tensor bmtv(const Tensor& flat, const Tensor& u) {
  require_rank2(flat, "bmtv");
  require_rank2(u, "bmtv");
  const std::size_t batch = flat.rows(), r = u.cols();
  if (u.rows() != batch || r == 0 || flat.cols() % r != 0)
    throw DimensionError("bmtv: " + shape_str(flat.shape()) + " with " + shape_str(u.shape()));
  const std::size_t c = flat.cols() / r;
  std::vector<double> out(batch * c, 0.0);
  const auto f = flat.data(), y = u.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i) {
      const double ui = y[b * r + i];
      const std::size_t base = b * r * c + i * c;
      for (std::size_t j = 0; j < c; ++j) out[b * c + j] += f[base + j] * ui;
    }
  return Tensor::make({batch, c}, std::move(out), {flat, u},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor gf, gu;
                        if (p[0].requires_grad()) gf = bouter(p[1], g);
                        if (p[1].requires_grad()) gu = bmv(p[0], g);
                        return {gf, gu};
                      },
                      "bmtv");
}

Tensor bouter(const Tensor& u, const Tensor& v) {
  require_rank2(u, "bouter");
  require_rank2(v, "bouter");
  const std::size_t batch = u.rows(), r = u.cols(), c = v.cols();
  if (v.rows() != batch)
    throw DimensionError("bouter: " + shape_str(u.shape()) + " with " + shape_str(v.shape()));
  std::vector<double> out(batch * r * c);
  const auto a = u.data(), b = v.data();
  for (std::size_t k = 0; k < batch; ++k)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[k * r * c + i * c + j] = a[k * r + i] * b[k * c + j];
  return Tensor::make({batch, r * c}, std::move(out), {u, v},
                      [](const Tensor& g, const Tensor& self) -> std::vector<Tensor> {
                        const auto& p = self.parents();
                        Tensor gu, gv;
                        if (p[0].requires_grad()) gu = bmv(g, p[1]);
                        if (p[1].requires_grad()) gv = bmtv(g, p[0]);
                        return {gu, gv};
                      },
                      "bouter");
}

// ---- differentiation ---------------------------------------------------------------

Tensor GradMap::at(const Tensor& t) const {
  auto it = grads_.find(t.impl());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

namespace {

// Reverse sweep shared by backward() and grad(). Visits only nodes that
// require gradients and are no older than `min_id`.
std::unordered_map<const TensorImpl*, Tensor> sweep(const std::vector<Tensor>& outputs,
                                                    const std::vector<Tensor>& cotangents,
                                                    std::uint64_t min_id, bool create_graph,
                                                    const std::unordered_set<const TensorImpl*>& keep) {
  std::vector<Tensor> order;
  std::unordered_map<const TensorImpl*, bool> seen;
  std::vector<Tensor> stack;
  for (const Tensor& o : outputs) {
    if (o.requires_grad() && o.id() >= min_id && !seen[o.impl()]) {
      seen[o.impl()] = true;
      stack.push_back(o);
    }
  }
  while (!stack.empty()) {
    Tensor n = std::move(stack.back());
    stack.pop_back();
    for (const Tensor& p : n.parents()) {
      if (p.requires_grad() && p.id() >= min_id) {
        bool& s = seen[p.impl()];
        if (!s) {
          s = true;
          stack.push_back(p);
        }
      }
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const Tensor& a, const Tensor& b) { return a.id() > b.id(); });

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::unordered_map<const TensorImpl*, Tensor> grads;
  auto accumulate = [&grads](const TensorImpl* key, const Tensor& g) {
    auto it = grads.find(key);
    if (it == grads.end())
      grads.emplace(key, g);
    else
      it->second = add(it->second, g);
  };
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].requires_grad() && outputs[i].id() >= min_id)
      accumulate(outputs[i].impl(), cotangents[i]);
  }
  for (const Tensor& node : order) {
    if (node.is_leaf()) continue;
    auto it = grads.find(node.impl());
    if (it == grads.end()) continue;
    const Tensor g = it->second;
    std::vector<Tensor> pg = node.impl()->backward(g, node);
    const auto& ps = node.parents();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (!pg[k].defined() || !ps[k].requires_grad() || ps[k].id() < min_id) continue;
      accumulate(ps[k].impl(), pg[k]);
    }
    // Interior gradients are no longer needed once propagated.
    if (!keep.count(node.impl())) grads.erase(node.impl());
  }
  return grads;
}

}  // namespace

GradMap backward(const Tensor& root, bool create_graph) {
  if (!root.defined() || root.numel() != 1)
    throw ContractError("backward: root must be a scalar tensor");
  if (!root.requires_grad())
    throw ContractError("backward: root is not attached to a gradient graph");
  auto grads = sweep({root}, {Tensor::full(root.shape(), 1.0)}, 0, create_graph, {});
  GradMap result;
  for (auto& [k, g] : grads) result.set(k, std::move(g));
  return result;
}

std::vector<Tensor> grad(const std::vector<Tensor>& outputs, const std::vector<Tensor>& cotangents,
                         const std::vector<Tensor>& inputs, bool create_graph) {
  if (outputs.size() != cotangents.size())
    throw ContractError("grad: outputs and cotangents differ in count");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].shape() != cotangents[i].shape())
      throw DimensionError("grad: cotangent " + shape_str(cotangents[i].shape()) +
                           " does not match output " + shape_str(outputs[i].shape()));
  }
  std::uint64_t min_id = UINT64_MAX;
  for (const Tensor& in : inputs) {
    if (!in.requires_grad())
      throw ContractError("grad: input is not attached to a gradient graph");
    min_id = std::min(min_id, in.id());
  }
  // Inputs must survive the sweep even though they may be interior nodes.
  std::unordered_set<const TensorImpl*> keep;
  for (const Tensor& in : inputs) keep.insert(in.impl());
  auto grads = sweep(outputs, cotangents, min_id, create_graph, keep);
  std::vector<Tensor> result;
  for (const Tensor& in : inputs) {
    auto it = grads.find(in.impl());
    result.push_back(it == grads.end() ? Tensor::zeros(in.shape()) : it->second);
  }
  return result;
}

Tensor vjp(const Tensor& output, const Tensor& input, const Tensor& cotangent, bool create_graph) {
  if (!output.requires_grad() || !input.requires_grad())
    throw ContractError("vjp: output and input must live on a gradient graph");
  ++vjp_calls;
  return grad({output}, {cotangent}, {input}, create_graph)[0];
}

std::uint64_t vjp_count() { return vjp_calls; }
void reset_vjp_count() { vjp_calls = 0; }

}  // namespace leap
