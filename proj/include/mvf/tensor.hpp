#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvf {

// Arithmetic precision applied to every op result. Storage is always double;
// in F32 mode values are rounded to the nearest float after each op.
enum class Precision { F64, F32 };

Precision precision();
void set_precision(Precision p);
double round_to_precision(double v);
std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

// RAII guard used by tests that need a specific precision.
class ScopedPrecision {
 public:
  explicit ScopedPrecision(Precision p) : saved_(precision()) { set_precision(p); }
  ~ScopedPrecision() { set_precision(saved_); }
  ScopedPrecision(const ScopedPrecision&) = delete;
  ScopedPrecision& operator=(const ScopedPrecision&) = delete;

 private:
  Precision saved_;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of real scalars.
///
/// Rank-2 tensors are the working format of the network code: rows are batch
/// items, columns are features. A scalar is a 1x1 tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1, 1}, v); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor row(std::initializer_list<double> values);
  static Tensor column(std::span<const double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }

  // Leading dimension and product of the remaining dimensions.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row_span(std::size_t r) const;
  std::span<double> row_span(std::size_t r);

  // Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  Tensor row_copy(std::size_t r) const;
  Tensor rows_slice(std::size_t begin, std::size_t end) const;

  // Rounds in place to the active precision and, in checked builds, rejects
  // non-finite entries.
  void finalize(const char* op);

  bool all_finite() const;
  bool bitwise_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain (non-recorded) helpers used by samplers and data code.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor concat_cols(std::span<const Tensor> parts);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double sum_sq(const Tensor& a);
double mean(const Tensor& a);

void require_same_shape(const char* op, const Tensor& a, const Tensor& b);

}  // namespace mvf
