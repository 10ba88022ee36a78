#include "texsyn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "texsyn/kernels.hpp"

namespace texsyn {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

thread_local GradTape* g_current_tape = nullptr;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

// Wraps an op result; attaches history only when a tape is recording and at
// least one input participates in differentiation.
Tensor finish(Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> fn) {
  NodePtr node = make_node(std::move(shape), std::move(value));
  GradTape* tape = g_current_tape;
  if (tape != nullptr) {
    bool any = false;
    for (const Tensor* in : inputs) any = any || in->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor* in : inputs) node->parents.push_back(in->node());
      node->backward = std::move(fn);
      tape->record(node);
    }
  }
  return Tensor(std::move(node));
}

Tensor finish_many(Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs,
                   std::function<void(Node&)> fn) {
  NodePtr node = make_node(std::move(shape), std::move(value));
  GradTape* tape = g_current_tape;
  if (tape != nullptr) {
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(fn);
      tape->record(node);
    }
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

std::vector<double> transposed(std::span<const double> v, std::size_t rows,
                               std::size_t cols) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = v[i * cols + j];
  return out;
}

// ---- broadcasting binary ops ----

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

struct BroadcastPlan {
  Shape out;
  std::size_t size = 0;
  std::size_t a_size = 0;
  std::size_t b_size = 0;
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  BroadcastPlan p;
  p.a_size = a.size();
  p.b_size = b.size();
  if (a.shape() == b.shape() || p.b_size == 1 || is_suffix(b.shape(), a.shape())) {
    p.out = a.shape();
  } else if (p.a_size == 1 || is_suffix(a.shape(), b.shape())) {
    p.out = b.shape();
  } else {
    throw DimensionError(std::string(op) + ": cannot broadcast " +
                         shape_str(a.shape()) + " with " + shape_str(b.shape()));
  }
  p.size = shape_size(p.out);
  return p;
}

template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da,
              DB db) {
  const BroadcastPlan p = plan_broadcast(a, b, name);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(p.size);
  for (std::size_t i = 0; i < p.size; ++i)
    out[i] = f(av[i % p.a_size], bv[i % p.b_size]);
  return finish(p.out, std::move(out), {&a, &b}, [p, da, db](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      auto ga = na.grad_buffer();
      for (std::size_t i = 0; i < p.size; ++i)
        ga[i % p.a_size] +=
            g[i] * da(na.value[i % p.a_size], nb.value[i % p.b_size]);
    }
    if (nb.requires_grad) {
      auto gb = nb.grad_buffer();
      for (std::size_t i = 0; i < p.size; ++i)
        gb[i % p.b_size] +=
            g[i] * db(na.value[i % p.a_size], nb.value[i % p.b_size]);
    }
  });
}

// df receives (input, output).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return finish(a.shape(), std::move(out), {&a}, [df](Node& self) {
    Node& na = *self.parents[0];
    auto ga = na.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += self.grad[i] * df(na.value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Below this output the sqrt derivative is evaluated at the floor so that
// exact-zero gaps do not produce infinite gradients.
constexpr double kSqrtGradFloor = 1e-6;

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_ = make_node(std::move(shape), std::move(values));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("dim: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return defined() ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item: tensor of shape " + shape_str(shape()) +
                         " is not a scalar");
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->value);
}

// ---- tape -----------------------------------------------------------------

void GradTape::record(std::shared_ptr<detail::Node> node) {
  nodes_.push_back(std::move(node));
}

std::size_t GradTape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(loss.shape()));
  }
  const NodePtr& root = loss.node();
  if (!root->requires_grad) return 0;
  root->grad_buffer()[0] += 1.0;
  std::size_t visited = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
    ++visited;
    if (&node != root.get()) {
      node.grad.clear();
      node.grad.shrink_to_fit();
    }
  }
  return visited;
}

GradTape* GradTape::current() { return g_current_tape; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = previous_; }

void backward(const Tensor& loss) {
  GradTape* tape = GradTape::current();
  if (tape == nullptr) throw ContractError("backward: no active GradTape");
  tape->backward(loss);
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::active().gemm(m, n, k, a.values().data(), k, b.values().data(), n,
                         out.data(), n, false);
  return finish({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& kt = kernels::active();
    if (na.requires_grad) {
      const auto bt = transposed(nb.value, k, n);
      kt.gemm(m, k, n, self.grad.data(), n, bt.data(), k,
              na.grad_buffer().data(), k, true);
    }
    if (nb.requires_grad) {
      const auto at = transposed(na.value, m, k);
      kt.gemm(k, n, m, at.data(), m, self.grad.data(), n,
              nb.grad_buffer().data(), n, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  return finish({c, r}, transposed(a.values(), r, c), {&a}, [r, c](Node& self) {
    Node& na = *self.parents[0];
    auto ga = na.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  require_defined(a, "add_scalar");
  return unary(
      a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sqrt(const Tensor& a) {
  require_defined(a, "sqrt");
  for (double v : a.values()) {
    if (v < 0.0 || std::isnan(v)) {
      throw DomainError("sqrt: negative input " + std::to_string(v) +
                        " (clamp_min before sqrt)");
    }
  }
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) {
        return y > 0.0 ? 0.5 / std::max(y, kSqrtGradFloor) : 0.0;
      });
}

Tensor square(const Tensor& a) {
  require_defined(a, "square");
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v) +
                        " (clamp_min before log)");
    }
  }
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  require_defined(a, "exp");
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  return unary(a, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  require_defined(a, "gelu");
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor clamp_min(const Tensor& a, double lo) {
  require_defined(a, "clamp_min");
  return unary(
      a, [lo](double x) { return std::max(x, lo); },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---- reductions -----------------------------------------------------------

Tensor reduce(const Tensor& x, std::size_t axis, ReduceOp op) {
  require_defined(x, "reduce");
  if (axis >= x.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);

  const auto xv = x.values();
  std::vector<double> means(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        means[o * inner + i] += xv[(o * len + l) * inner + i];
  std::vector<double> out = means;
  if (op != ReduceOp::kSum) {
    for (double& v : means) v /= static_cast<double>(len);
    out = means;
  }
  if (op == ReduceOp::kVariance) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = xv[(o * len + l) * inner + i] - means[o * inner + i];
          out[o * inner + i] += d * d;
        }
    for (double& v : out) v /= static_cast<double>(len);
  }
  return finish(std::move(out_shape), std::move(out), {&x},
                [outer, inner, len, op, means = std::move(means)](Node& self) {
                  Node& nx = *self.parents[0];
                  auto gx = nx.grad_buffer();
                  const double inv = 1.0 / static_cast<double>(len);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t l = 0; l < len; ++l)
                      for (std::size_t i = 0; i < inner; ++i) {
                        const std::size_t src = (o * len + l) * inner + i;
                        const double g = self.grad[o * inner + i];
                        switch (op) {
                          case ReduceOp::kSum:
                            gx[src] += g;
                            break;
                          case ReduceOp::kMean:
                            gx[src] += g * inv;
                            break;
                          case ReduceOp::kVariance:
                            gx[src] += g * 2.0 * inv *
                                       (nx.value[src] - means[o * inner + i]);
                            break;
                        }
                      }
                });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  return reduce(x, axis, ReduceOp::kSum);
}

Tensor mean(const Tensor& x, std::size_t axis) {
  return reduce(x, axis, ReduceOp::kMean);
}

Tensor sum_all(const Tensor& x) {
  return reduce(reshape(x, {x.size()}), 0, ReduceOp::kSum);
}

Tensor mean_all(const Tensor& x) {
  return reduce(reshape(x, {x.size()}), 0, ReduceOp::kMean);
}

// ---- structure ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  const auto xv = x.values();
  return finish(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {&x},
                [](Node& self) {
                  Node& nx = *self.parents[0];
                  auto gx = nx.grad_buffer();
                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape shape) {
  require_defined(x, "gather");
  if (shape_size(shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) +
                         " indices for output shape " + shape_str(shape));
  }
  const auto xv = x.values();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.size()) {
      throw DimensionError("gather: index " + std::to_string(indices[i]) +
                           " out of range for shape " + shape_str(x.shape()));
    }
    out[i] = xv[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish(std::move(shape), std::move(out), {&x},
                [idx = std::move(idx)](Node& self) {
                  Node& nx = *self.parents[0];
                  auto gx = nx.grad_buffer();
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    gx[idx[i]] += self.grad[i];
                });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()) +
                           " vs " + shape_str(parts[0].shape()));
    }
    offsets.push_back(total);
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].dim(1);
    const auto v = parts[k].values();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.begin() + i * c, c, out.begin() + i * total + offsets[k]);
  }
  return finish_many({rows, total}, std::move(out), parts,
                     [rows, total, offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         Node& np = *self.parents[k];
                         if (!np.requires_grad) continue;
                         const std::size_t c = np.shape[1];
                         auto gp = np.grad_buffer();
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < c; ++j)
                             gp[i * c + j] += self.grad[i * total + offsets[k] + j];
                       }
                     });
}

// ---- fused ----------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * m;
    double* dst = out.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dst[j] = std::exp(row[j] - mx);
      z += dst[j];
    }
    for (std::size_t j = 0; j < m; ++j) dst[j] /= z;
  }
  return finish({n, m}, std::move(out), {&x}, [n, m](Node& self) {
    Node& nx = *self.parents[0];
    auto gx = nx.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.value.data() + i * m;
      const double* g = self.grad.data() + i * m;
      double dotp = 0.0;
      for (std::size_t j = 0; j < m; ++j) dotp += g[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[j] * (g[j] - dotp);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: affine parameters " +
                         shape_str(gamma.shape()) + ", " + shape_str(beta.shape()) +
                         " do not match rows of " + shape_str(x.shape()));
  }
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> xhat(n * d), rstd(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * rstd[i];
      out[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
    }
  }
  return finish({n, d}, std::move(out), {&x, &gamma, &beta},
                [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                  Node& nx = *self.parents[0];
                  Node& ng = *self.parents[1];
                  Node& nb = *self.parents[2];
                  const auto& g = self.grad;
                  if (ng.requires_grad) {
                    auto gg = ng.grad_buffer();
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < d; ++j)
                        gg[j] += g[i * d + j] * xhat[i * d + j];
                  }
                  if (nb.requires_grad) {
                    auto gb = nb.grad_buffer();
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                  }
                  if (nx.requires_grad) {
                    auto gx = nx.grad_buffer();
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t i = 0; i < n; ++i) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[i * d + j] * ng.value[j];
                        s1 += dxh;
                        s2 += dxh * xhat[i * d + j];
                      }
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[i * d + j] * ng.value[j];
                        gx[i * d + j] += rstd[i] * (dxh - s1 * inv_d -
                                                    xhat[i * d + j] * s2 * inv_d);
                      }
                    }
                  }
                });
}

Tensor sq_dist(const Tensor& q, const Tensor& k) {
  require_rank(q, 2, "sq_dist");
  require_rank(k, 2, "sq_dist");
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError("sq_dist: feature mismatch " + shape_str(q.shape()) +
                         " vs " + shape_str(k.shape()));
  }
  const std::size_t m = q.dim(0), n = k.dim(0), d = q.dim(1);
  std::vector<double> out(m * n);
  kernels::active().sq_dist(m, n, d, q.values().data(), k.values().data(),
                            out.data());
  return finish({m, n}, std::move(out), {&q, &k}, [m, n, d](Node& self) {
    Node& nq = *self.parents[0];
    Node& nk = *self.parents[1];
    const auto& kt = kernels::active();
    const auto& g = self.grad;
    // dQ = 2 (rowsum(g) * Q - g K); dK = 2 (colsum(g) * K - g^T Q)
    if (nq.requires_grad) {
      std::vector<double> gk(m * d);
      kt.gemm(m, d, n, g.data(), n, nk.value.data(), d, gk.data(), d, false);
      auto gq = nq.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < n; ++j) rs += g[i * n + j];
        for (std::size_t t = 0; t < d; ++t)
          gq[i * d + t] += 2.0 * (rs * nq.value[i * d + t] - gk[i * d + t]);
      }
    }
    if (nk.requires_grad) {
      const auto gt = transposed(g, m, n);
      std::vector<double> gtq(n * d);
      kt.gemm(n, d, m, gt.data(), m, nq.value.data(), d, gtq.data(), d, false);
      auto gkb = nk.grad_buffer();
      for (std::size_t j = 0; j < n; ++j) {
        double cs = 0.0;
        for (std::size_t i = 0; i < m; ++i) cs += gt[j * m + i];
        for (std::size_t t = 0; t < d; ++t)
          gkb[j * d + t] += 2.0 * (cs * nk.value[j * d + t] - gtq[j * d + t]);
      }
    }
  });
}

Tensor outer_rows(const Tensor& a, const Tensor& c) {
  require_rank(a, 2, "outer_rows");
  require_rank(c, 2, "outer_rows");
  if (a.dim(0) != c.dim(0)) {
    throw DimensionError("outer_rows: batch mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(c.shape()));
  }
  const std::size_t batch = a.dim(0), rows = a.dim(1), cols = c.dim(1);
  const auto av = a.values();
  const auto cv = c.values();
  std::vector<double> out(batch * rows * cols);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        out[(b * rows + i) * cols + j] = av[b * rows + i] * cv[b * cols + j];
  return finish({batch, rows * cols}, std::move(out), {&a, &c},
                [batch, rows, cols](Node& self) {
                  Node& na = *self.parents[0];
                  Node& nc = *self.parents[1];
                  const auto& g = self.grad;
                  if (na.requires_grad) {
                    auto ga = na.grad_buffer();
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                          ga[b * rows + i] +=
                              g[(b * rows + i) * cols + j] * nc.value[b * cols + j];
                  }
                  if (nc.requires_grad) {
                    auto gc = nc.grad_buffer();
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j)
                          gc[b * cols + j] +=
                              g[(b * rows + i) * cols + j] * na.value[b * rows + i];
                  }
                });
}

}  // namespace texsyn
