#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvf/tensor.hpp"

namespace mvf::ad {

// Raised when forward-mode propagation meets a primitive without a derivative.
class JvpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node;

/// Handle to a recorded value.
///
/// Every op computes its primal value, propagates a forward-mode tangent when
/// any input carries one, and records a reverse-mode rule when any input
/// requires a gradient. Tangents are plain tensors, so a JVP result can feed a
/// loss only as a constant; one level of nesting is all the mean-flow target
/// needs.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var with_tangent(Tensor value, Tensor tangent);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  const std::string& op() const;

  // Empty tensor means an exactly-zero tangent.
  const Tensor& tangent() const;
  bool has_tangent() const;
  Tensor tangent_or_zero() const;

  bool requires_grad() const;
  // Empty tensor means no gradient reached this node.
  const Tensor& grad() const;
  Tensor grad_or_zero() const;

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend class Builder;
  friend void backward(const Var& loss);
};

// Reverse pass from a single-element loss. Gradients accumulate into every
// node that requires one; leaves keep theirs for collection.
void backward(const Var& loss);

// Elementwise and linear-algebra primitives.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var matmul(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& bias);   // [m,n] + [1,n]
Var mul_col(const Var& x, const Var& s);      // [m,n] * [m,1]
Var affine(const Var& x, const Var& w, const Var& b);
Var broadcast_scalar(const Var& s, const Shape& shape);

// Nonlinearities. relu, abs and maximum_scalar have kinks and refuse tangents.
Var silu(const Var& x);
Var tanh(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
Var relu(const Var& x);
Var abs(const Var& x);
Var maximum_scalar(const Var& x, double floor);

// Structural ops.
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var reshape(const Var& x, const Shape& shape);

// Reductions. Scalars are 1x1.
Var reduce_sum(const Var& x);
Var reduce_mean(const Var& x);
Var reduce_sum_sq(const Var& x);
Var sum_sq_rows(const Var& x);  // [m,n] -> [m,1]
Var mean_rows(const Var& x);    // [m,n] -> [m,1]

// Blocks both gradient flow and tangent propagation.
Var stop_grad(const Var& x);

struct JvpResult {
  Tensor value;
  Tensor tangent;
};

using VarFn = std::function<Var(std::span<const Var>)>;

// Evaluates f at `point` and its directional derivative along `tangent` in
// one forward pass. Anything f closes over is a constant.
JvpResult jvp(const VarFn& f, std::span<const Tensor> point, std::span<const Tensor> tangent);

// Reverse-mode gradient of a scalar f with respect to each input.
std::vector<Tensor> gradient(const VarFn& f, std::span<const Tensor> point);

}  // namespace mvf::ad
