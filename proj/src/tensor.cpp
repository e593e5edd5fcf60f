#include "mvf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace mvf {

namespace {
std::atomic<Precision> g_precision{Precision::F64};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

Precision precision() { return g_precision.load(std::memory_order_relaxed); }

void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

double round_to_precision(double v) {
  if (precision() == Precision::F32) return static_cast<double>(static_cast<float>(v));
  return v;
}

std::string precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f64" || name == "64") return Precision::F64;
  if (name == "f32" || name == "32") return Precision::F32;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f64 or f32)");
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}


std::span<const double> Tensor::row_span(std::size_t r) const {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

std::span<double> Tensor::row_span(std::size_t r) {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) throw ShapeError("reshape", shape_, shape);
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::row_copy(std::size_t r) const { return rows_slice(r, r + 1); }

Tensor Tensor::rows_slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > rows())
    throw ShapeError("rows_slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_str(shape_));
  const auto c = cols();
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

void Tensor::finalize([[maybe_unused]] const char* op) {
  if (precision() == Precision::F32)
    for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
#ifndef NDEBUG
  if (!all_finite()) throw NumericalError(std::string("non-finite value produced by ") + op);
#endif
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  out.finalize("add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  out.finalize("sub");
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out = a;
  for (auto& v : out.data()) v *= k;
  out.finalize("scale");
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  out.finalize("mul");
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) throw ShapeError("matmul", a.shape(), b.shape());
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out({m, n});
  Eigen::Map<const RowMajor> ea(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  Eigen::Map<const RowMajor> eb(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  Eigen::Map<RowMajor> eo(out.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  eo.noalias() = ea * eb;
  out.finalize("matmul");
  return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const auto c = rows.front().size();
  std::vector<double> data;
  data.reserve(c * rows.size());
  for (const auto& r : rows) {
    if (r.size() != c) throw ShapeError("stack_rows", rows.front().shape(), r.shape());
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return Tensor({rows.size(), c}, std::move(data));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const auto m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m) throw ShapeError("concat_cols", parts.front().shape(), p.shape());
    n += p.cols();
  }
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    auto dst = out.row_span(r).begin();
    for (const auto& p : parts) dst = std::copy(p.row_span(r).begin(), p.row_span(r).end(), dst);
  }
  return out;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

double mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s / static_cast<double>(a.size());
}

}  // namespace mvf
