#include "mvf/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "mvf/rng.hpp"

namespace mvf::ad {

struct Node {
  Tensor value;
  Tensor tangent;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor&)> backward;
  bool requires_grad = false;
  std::string op = "leaf";
};

namespace {

const Tensor& empty_tensor() {
  static const Tensor t;
  return t;
}

void accumulate(Node& n, Tensor contribution) {
  if (!n.requires_grad) return;
  contribution.finalize("grad");
  if (n.grad.empty()) {
    n.grad = std::move(contribution);
    return;
  }
  for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += contribution[i];
  n.grad.finalize("grad");
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace

class Builder {
 public:
  static std::shared_ptr<Node> node(const Var& v) { return v.node_; }

  static Var make(std::string op, Tensor value, Tensor tangent, std::vector<std::shared_ptr<Node>> parents,
                  std::function<void(const Tensor&)> backward) {
    auto n = std::make_shared<Node>();
    value.finalize(op.c_str());
    if (!tangent.empty()) tangent.finalize(op.c_str());
    n->value = std::move(value);
    n->tangent = std::move(tangent);
    n->op = std::move(op);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
      n->parents = std::move(parents);
      n->backward = std::move(backward);
    }
    return Var(std::move(n));
  }

  static Var leaf(Tensor value, Tensor tangent, bool requires_grad) {
    auto n = std::make_shared<Node>();
    if (!tangent.empty()) require_same_shape("tangent", value, tangent);
    n->value = std::move(value);
    n->tangent = std::move(tangent);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
};

Var Var::constant(Tensor value) { return Builder::leaf(std::move(value), {}, false); }

Var Var::with_tangent(Tensor value, Tensor tangent) {
  return Builder::leaf(std::move(value), std::move(tangent), false);
}

Var Var::parameter(Tensor value) { return Builder::leaf(std::move(value), {}, true); }

const Tensor& Var::value() const { return node_->value; }
const std::string& Var::op() const { return node_->op; }
const Tensor& Var::tangent() const { return node_->tangent; }
bool Var::has_tangent() const { return !node_->tangent.empty(); }
Tensor Var::tangent_or_zero() const {
  return has_tangent() ? node_->tangent : Tensor::zeros(node_->value.shape());
}
bool Var::requires_grad() const { return node_->requires_grad; }
const Tensor& Var::grad() const { return node_ ? node_->grad : empty_tensor(); }
Tensor Var::grad_or_zero() const { return node_->grad.empty() ? Tensor::zeros(node_->value.shape()) : node_->grad; }

void backward(const Var& loss) {
  if (loss.value().size() != 1)
    throw ShapeError("backward requires a single-element loss, got " + shape_str(loss.shape()));
  auto root = Builder::node(loss);
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  accumulate(*root, Tensor(root->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(n->grad);
  }
}

namespace {

using NodePtr = std::shared_ptr<Node>;

template <class F, class DF>
Var unary(const char* op, const Var& x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor value(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) value[i] = f(xv[i]);
  Tensor tangent;
  if (x.has_tangent()) {
    tangent = Tensor(xv.shape());
    const Tensor& tx = x.tangent();
    for (std::size_t i = 0; i < xv.size(); ++i) tangent[i] = df(xv[i]) * tx[i];
  }
  NodePtr px = Builder::node(x);
  return Builder::make(op, std::move(value), std::move(tangent), {px}, [px, df](const Tensor& g) {
    Tensor c(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) c[i] = g[i] * df(px->value[i]);
    accumulate(*px, std::move(c));
  });
}

// Tangent of a linear op: apply the op to whichever input tangents exist.
template <class F>
Tensor linear_tangent(const Var& a, const Var& b, F f) {
  if (!a.has_tangent() && !b.has_tangent()) return {};
  return f(a.tangent_or_zero(), b.tangent_or_zero());
}

Tensor col_sums(const Tensor& g) {
  Tensor out({1, g.cols()});
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) out[c] += g.at(r, c);
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  return out;
}

Tensor raw_add_row(const Tensor& x, const Tensor& b) {
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) += b[c];
  return out;
}

Tensor raw_mul_col(const Tensor& x, const Tensor& s) {
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) *= s[r];
  return out;
}

void check_kink(const char* op, const Var& x) {
  if (x.has_tangent()) throw JvpError(std::string("jvp through non-differentiable primitive '") + op + "'");
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  Tensor value = a.value();
  for (std::size_t i = 0; i < value.size(); ++i) value[i] += b.value()[i];
  Tensor tangent = linear_tangent(a, b, [](const Tensor& ta, const Tensor& tb) {
    Tensor t = ta;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += tb[i];
    return t;
  });
  NodePtr pa = Builder::node(a), pb = Builder::node(b);
  return Builder::make("add", std::move(value), std::move(tangent), {pa, pb}, [pa, pb](const Tensor& g) {
    accumulate(*pa, g);
    accumulate(*pb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor value = a.value();
  for (std::size_t i = 0; i < value.size(); ++i) value[i] -= b.value()[i];
  Tensor tangent = linear_tangent(a, b, [](const Tensor& ta, const Tensor& tb) {
    Tensor t = ta;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= tb[i];
    return t;
  });
  NodePtr pa = Builder::node(a), pb = Builder::node(b);
  return Builder::make("sub", std::move(value), std::move(tangent), {pa, pb}, [pa, pb](const Tensor& g) {
    accumulate(*pa, g);
    Tensor ng = g;
    for (auto& v : ng.data()) v = -v;
    accumulate(*pb, std::move(ng));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor value = av;
  for (std::size_t i = 0; i < value.size(); ++i) value[i] *= bv[i];
  Tensor tangent;
  if (a.has_tangent() || b.has_tangent()) {
    tangent = Tensor(av.shape());
    if (a.has_tangent())
      for (std::size_t i = 0; i < av.size(); ++i) tangent[i] += a.tangent()[i] * bv[i];
    if (b.has_tangent())
      for (std::size_t i = 0; i < av.size(); ++i) tangent[i] += av[i] * b.tangent()[i];
  }
  NodePtr pa = Builder::node(a), pb = Builder::node(b);
  return Builder::make("mul", std::move(value), std::move(tangent), {pa, pb}, [pa, pb](const Tensor& g) {
    if (pa->requires_grad) {
      Tensor c = g;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] *= pb->value[i];
      accumulate(*pa, std::move(c));
    }
    if (pb->requires_grad) {
      Tensor c = g;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] *= pa->value[i];
      accumulate(*pb, std::move(c));
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape("div", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor value = av;
  for (std::size_t i = 0; i < value.size(); ++i) value[i] /= bv[i];
  Tensor tangent;
  if (a.has_tangent() || b.has_tangent()) {
    tangent = Tensor(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
      double t = 0.0;
      if (a.has_tangent()) t += a.tangent()[i] / bv[i];
      if (b.has_tangent()) t -= av[i] * b.tangent()[i] / (bv[i] * bv[i]);
      tangent[i] = t;
    }
  }
  NodePtr pa = Builder::node(a), pb = Builder::node(b);
  return Builder::make("div", std::move(value), std::move(tangent), {pa, pb}, [pa, pb](const Tensor& g) {
    if (pa->requires_grad) {
      Tensor c = g;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] /= pb->value[i];
      accumulate(*pa, std::move(c));
    }
    if (pb->requires_grad) {
      Tensor c = g;
      for (std::size_t i = 0; i < c.size(); ++i) {
        const double bi = pb->value[i];
        c[i] = -c[i] * pa->value[i] / (bi * bi);
      }
      accumulate(*pb, std::move(c));
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double k) {
  return unary("scale", a, [k](double x) { return k * x; }, [k](double) { return k; });
}

Var add_scalar(const Var& a, double k) {
  return unary("add_scalar", a, [k](double x) { return x + k; }, [](double) { return 1.0; });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.shape()[1] != bv.shape()[0]) throw ShapeError("matmul", av.shape(), bv.shape());
  Tensor value = mvf::matmul(av, bv);
  Tensor tangent;
  if (a.has_tangent() && b.has_tangent())
    tangent = mvf::add(mvf::matmul(a.tangent(), bv), mvf::matmul(av, b.tangent()));
  else if (a.has_tangent())
    tangent = mvf::matmul(a.tangent(), bv);
  else if (b.has_tangent())
    tangent = mvf::matmul(av, b.tangent());
  NodePtr pa = Builder::node(a), pb = Builder::node(b);
  return Builder::make("matmul", std::move(value), std::move(tangent), {pa, pb}, [pa, pb](const Tensor& g) {
    if (pa->requires_grad) accumulate(*pa, mvf::matmul(g, transpose(pb->value)));
    if (pb->requires_grad) accumulate(*pb, mvf::matmul(transpose(pa->value), g));
  });
}

Var add_row(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2("add_row", xv);
  if (bv.rank() != 2 || bv.shape()[0] != 1 || bv.shape()[1] != xv.cols()) throw ShapeError("add_row", xv.shape(), bv.shape());
  Tensor value = raw_add_row(xv, bv);
  Tensor tangent;
  if (x.has_tangent() || bias.has_tangent()) tangent = raw_add_row(x.tangent_or_zero(), bias.tangent_or_zero());
  NodePtr px = Builder::node(x), pb = Builder::node(bias);
  return Builder::make("add_row", std::move(value), std::move(tangent), {px, pb}, [px, pb](const Tensor& g) {
    accumulate(*px, g);
    if (pb->requires_grad) accumulate(*pb, col_sums(g));
  });
}

Var mul_col(const Var& x, const Var& s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  require_rank2("mul_col", xv);
  if (sv.rank() != 2 || sv.shape()[1] != 1 || sv.shape()[0] != xv.rows()) throw ShapeError("mul_col", xv.shape(), sv.shape());
  Tensor value = raw_mul_col(xv, sv);
  Tensor tangent;
  if (x.has_tangent() || s.has_tangent()) {
    tangent = Tensor(xv.shape());
    if (x.has_tangent()) tangent = raw_mul_col(x.tangent(), sv);
    if (s.has_tangent())
      for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t c = 0; c < xv.cols(); ++c) tangent.at(r, c) += xv.at(r, c) * s.tangent()[r];
  }
  NodePtr px = Builder::node(x), ps = Builder::node(s);
  return Builder::make("mul_col", std::move(value), std::move(tangent), {px, ps}, [px, ps](const Tensor& g) {
    if (px->requires_grad) accumulate(*px, raw_mul_col(g, ps->value));
    if (ps->requires_grad) {
      Tensor c(ps->value.shape());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t k = 0; k < g.cols(); ++k) c[r] += g.at(r, k) * px->value.at(r, k);
      accumulate(*ps, std::move(c));
    }
  });
}

Var affine(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

Var broadcast_scalar(const Var& s, const Shape& shape) {
  if (s.value().size() != 1) throw ShapeError("broadcast_scalar", s.shape(), shape);
  Tensor value(shape, s.value()[0]);
  Tensor tangent;
  if (s.has_tangent()) tangent = Tensor(shape, s.tangent()[0]);
  NodePtr ps = Builder::node(s);
  return Builder::make("broadcast_scalar", std::move(value), std::move(tangent), {ps}, [ps](const Tensor& g) {
    double total = 0.0;
    for (double v : g.data()) total += v;
    accumulate(*ps, Tensor(ps->value.shape(), total));
  });
}

Var silu(const Var& x) {
  return unary(
      "silu", x, [](double v) { return v * sigmoid(v); },
      [](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var tanh(const Var& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Var sin(const Var& x) {
  return unary("sin", x, [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); });
}

Var cos(const Var& x) {
  return unary("cos", x, [](double v) { return std::cos(v); }, [](double v) { return -std::sin(v); });
}

Var relu(const Var& x) {
  check_kink("relu", x);
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var abs(const Var& x) {
  check_kink("abs", x);
  return unary("abs", x, [](double v) { return std::abs(v); }, [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var maximum_scalar(const Var& x, double floor) {
  check_kink("maximum", x);
  return unary(
      "maximum", x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::vector<Tensor> values, tangents;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> widths;
  bool any_tangent = false;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p.value());
    values.push_back(p.value());
    widths.push_back(p.value().cols());
    parents.push_back(Builder::node(p));
    any_tangent = any_tangent || p.has_tangent();
  }
  Tensor value = mvf::concat_cols(values);
  Tensor tangent;
  if (any_tangent) {
    for (const auto& p : parts) tangents.push_back(p.tangent_or_zero());
    tangent = mvf::concat_cols(tangents);
  }
  return Builder::make("concat_cols", std::move(value), std::move(tangent), parents,
                       [parents, widths](const Tensor& g) {
                         std::size_t offset = 0;
                         for (std::size_t k = 0; k < parents.size(); ++k) {
                           if (parents[k]->requires_grad) {
                             Tensor c({g.rows(), widths[k]});
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t j = 0; j < widths[k]; ++j) c.at(r, j) = g.at(r, offset + j);
                             accumulate(*parents[k], std::move(c));
                           }
                           offset += widths[k];
                         }
                       });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const auto cols = parts.front().value().cols();
  std::vector<NodePtr> parents;
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  bool any_tangent = false;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p.value());
    if (p.value().cols() != cols) throw ShapeError("concat_rows", parts.front().shape(), p.shape());
    parents.push_back(Builder::node(p));
    heights.push_back(p.value().rows());
    total += p.value().rows();
    any_tangent = any_tangent || p.has_tangent();
  }
  Tensor value({total, cols});
  Tensor tangent;
  if (any_tangent) tangent = Tensor({total, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), value.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
    if (any_tangent && p.has_tangent())
      std::copy(p.tangent().data().begin(), p.tangent().data().end(),
                tangent.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
    offset += p.value().rows();
  }
  return Builder::make("concat_rows", std::move(value), std::move(tangent), parents,
                       [parents, heights](const Tensor& g) {
                         std::size_t offset = 0;
                         for (std::size_t k = 0; k < parents.size(); ++k) {
                           if (parents[k]->requires_grad) accumulate(*parents[k], g.rows_slice(offset, offset + heights[k]));
                           offset += heights[k];
                         }
                       });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank2("slice_cols", xv);
  if (begin >= end || end > xv.cols())
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_str(xv.shape()));
  auto take = [begin, end](const Tensor& t) {
    Tensor out({t.rows(), end - begin});
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) out.at(r, c - begin) = t.at(r, c);
    return out;
  };
  Tensor value = take(xv);
  Tensor tangent;
  if (x.has_tangent()) tangent = take(x.tangent());
  NodePtr px = Builder::node(x);
  return Builder::make("slice_cols", std::move(value), std::move(tangent), {px}, [px, begin, end](const Tensor& g) {
    Tensor c(px->value.shape());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t k = begin; k < end; ++k) c.at(r, k) = g.at(r, k - begin);
    accumulate(*px, std::move(c));
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  Tensor value = xv.rows_slice(begin, end);
  Tensor tangent;
  if (x.has_tangent()) tangent = x.tangent().rows_slice(begin, end);
  NodePtr px = Builder::node(x);
  return Builder::make("slice_rows", std::move(value), std::move(tangent), {px}, [px, begin](const Tensor& g) {
    Tensor c(px->value.shape());
    const auto cols = c.cols();
    std::copy(g.data().begin(), g.data().end(), c.data().begin() + static_cast<std::ptrdiff_t>(begin * cols));
    accumulate(*px, std::move(c));
  });
}

Var reshape(const Var& x, const Shape& shape) {
  Tensor value = x.value().reshaped(shape);
  Tensor tangent;
  if (x.has_tangent()) tangent = x.tangent().reshaped(shape);
  NodePtr px = Builder::node(x);
  return Builder::make("reshape", std::move(value), std::move(tangent), {px},
                       [px](const Tensor& g) { accumulate(*px, g.reshaped(px->value.shape())); });
}

Var reduce_sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  Tensor tangent;
  if (x.has_tangent()) {
    double ts = 0.0;
    for (double v : x.tangent().data()) ts += v;
    tangent = Tensor::scalar(ts);
  }
  NodePtr px = Builder::node(x);
  return Builder::make("reduce_sum", Tensor::scalar(s), std::move(tangent), {px},
                       [px](const Tensor& g) { accumulate(*px, Tensor(px->value.shape(), g[0])); });
}

Var reduce_mean(const Var& x) {
  return scale(reduce_sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var reduce_sum_sq(const Var& x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v * v;
  Tensor tangent;
  if (x.has_tangent()) {
    double ts = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) ts += 2.0 * xv[i] * x.tangent()[i];
    tangent = Tensor::scalar(ts);
  }
  NodePtr px = Builder::node(x);
  return Builder::make("reduce_sum_sq", Tensor::scalar(s), std::move(tangent), {px}, [px](const Tensor& g) {
    Tensor c = px->value;
    for (auto& v : c.data()) v *= 2.0 * g[0];
    accumulate(*px, std::move(c));
  });
}

Var sum_sq_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_rank2("sum_sq_rows", xv);
  Tensor value({xv.rows(), 1});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (double v : xv.row_span(r)) value[r] += v * v;
  Tensor tangent;
  if (x.has_tangent()) {
    tangent = Tensor({xv.rows(), 1});
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < xv.cols(); ++c) tangent[r] += 2.0 * xv.at(r, c) * x.tangent().at(r, c);
  }
  NodePtr px = Builder::node(x);
  return Builder::make("sum_sq_rows", std::move(value), std::move(tangent), {px}, [px](const Tensor& g) {
    Tensor c = px->value;
    for (std::size_t r = 0; r < c.rows(); ++r)
      for (auto& v : c.row_span(r)) v *= 2.0 * g[r];
    accumulate(*px, std::move(c));
  });
}

Var mean_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_rank2("mean_rows", xv);
  const double inv = 1.0 / static_cast<double>(xv.cols());
  auto reduce = [inv](const Tensor& t) {
    Tensor out({t.rows(), 1});
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double s = 0.0;
      for (double v : t.row_span(r)) s += v;
      out[r] = s * inv;
    }
    return out;
  };
  Tensor value = reduce(xv);
  Tensor tangent;
  if (x.has_tangent()) tangent = reduce(x.tangent());
  NodePtr px = Builder::node(x);
  return Builder::make("mean_rows", std::move(value), std::move(tangent), {px}, [px, inv](const Tensor& g) {
    Tensor c(px->value.shape());
    for (std::size_t r = 0; r < c.rows(); ++r)
      for (auto& v : c.row_span(r)) v = g[r] * inv;
    accumulate(*px, std::move(c));
  });
}

Var stop_grad(const Var& x) { return Var::constant(x.value()); }

JvpResult jvp(const VarFn& f, std::span<const Tensor> point, std::span<const Tensor> tangent) {
  if (point.size() != tangent.size())
    throw std::invalid_argument("jvp: " + std::to_string(point.size()) + " inputs but " +
                                std::to_string(tangent.size()) + " tangents");
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    require_same_shape("jvp", point[i], tangent[i]);
    inputs.push_back(Var::with_tangent(point[i], tangent[i]));
  }
  Var out = f(inputs);
  return {out.value(), out.tangent_or_zero()};
}

std::vector<Tensor> gradient(const VarFn& f, std::span<const Tensor> point) {
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const auto& p : point) inputs.push_back(Var::parameter(p));
  Var out = f(inputs);
  backward(out);
  std::vector<Tensor> grads;
  grads.reserve(inputs.size());
  for (const auto& v : inputs) grads.push_back(v.grad_or_zero());
  return grads;
}

}  // namespace mvf::ad
