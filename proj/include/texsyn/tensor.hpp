#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "texsyn/errors.hpp"

namespace texsyn {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

std::size_t shape_size(const Shape& shape);

// Dense row-major tensor of doubles. Copies share the underlying node; the
// values of an operation result never change after construction. Leaves
// (parameters) may be updated in place through mutable_values().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double value(std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations. Operations executed while a
// TapeScope for this tape is active (and that touch a requires_grad input) are
// appended in execution order, which is a valid topological order.
class GradTape {
 public:
  void record(std::shared_ptr<detail::Node> node);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates in reverse recording order.
  // Returns the number of nodes whose backward function ran.
  std::size_t backward(const Tensor& loss);

  static GradTape* current();

 private:
  friend class TapeScope;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

// Runs backward on the active tape.
void backward(const Tensor& loss);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----------------------------------------------------------
// Binary ops broadcast when one operand's shape is a trailing suffix of the
// other's (which covers scalars and row vectors against matrices).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- reductions -----------------------------------------------------------

enum class ReduceOp { kSum, kMean, kVariance };

// Collapses one axis. kVariance is the population variance along the axis.
Tensor reduce(const Tensor& x, std::size_t axis, ReduceOp op);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- structure ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// out.flat[i] = x.flat[indices[i]]; gradient scatters back with accumulation.
Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);

// ---- fused ops --------------------------------------------------------------

// Row-wise softmax over the last axis of a 2-D tensor, max-subtracted.
Tensor softmax_rows(const Tensor& x);

// Row-wise layer normalization of x[n x d] with affine gamma[d], beta[d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// out[i, j] = ||q_i - k_j||^2 for q[m x d], k[n x d].
Tensor sq_dist(const Tensor& q, const Tensor& k);

// Batched outer product: out[b, i * N + j] = a[b, i] * c[b, j] for a[B x M], c[B x N].
Tensor outer_rows(const Tensor& a, const Tensor& c);

}  // namespace texsyn
