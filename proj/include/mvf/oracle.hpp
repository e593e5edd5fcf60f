#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvf/autodiff.hpp"
#include "mvf/rng.hpp"
#include "mvf/ssim.hpp"
#include "mvf/tensor.hpp"

namespace mvf::oracle {

/// Independent-per-dimension data law N(mean_d, stddev^2) with a standard
/// normal prior. stddev == 0 is a point mass at `mean`.
struct GaussianTask {
  std::vector<double> mean{0.0};  // one entry, or one per dimension
  double stddev = 0.0;

  static GaussianTask point_mass(double x0) { return {{x0}, 0.0}; }
  static GaussianTask normal(double mu, double sigma) { return {{mu}, sigma}; }

  void validate() const;
  double mean_at(std::size_t dim) const { return mean.size() == 1 ? mean[0] : mean.at(dim); }
  bool is_point_mass() const { return stddev == 0.0; }
};

// E[eps - x | z_t = z] from the linear-Gaussian posterior; (z - x0)/t for a point mass.
Tensor analytic_instantaneous_velocity(const GaussianTask& task, const Tensor& z, double t);

enum class AverageMethod { ClosedForm, Quadrature };

// Mean of v along the exact ODE trajectory through (z_t, t) over [r, t].
Tensor analytic_average_velocity(const GaussianTask& task, const Tensor& z_t, double r, double t,
                                 AverageMethod method = AverageMethod::ClosedForm);

// Position at time tau of the ODE trajectory passing through (z_t, t).
Tensor trajectory(const GaussianTask& task, const Tensor& z_t, double t, double tau);

// Adaptive Simpson on [a, b] with absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-9,
                        int max_depth = 50);

struct FdCheck {
  Tensor analytic;
  Tensor numeric;
  double rel_error = 0.0;
};

double relative_error(const Tensor& a, const Tensor& b);

// JVP of f at point along tangent vs the central difference (f(p + h d) - f(p - h d)) / 2h.
FdCheck finite_difference_check(const ad::VarFn& f, std::span<const Tensor> point, std::span<const Tensor> tangent,
                                double h);

// <grad f, d> from the reverse pass vs the same central difference, for scalar f.
FdCheck gradient_check(const ad::VarFn& f, std::span<const Tensor> point, std::span<const Tensor> direction,
                       double h);

struct DistributionGap {
  std::vector<double> mean_gap;  // |mean_a - mean_b| per dimension
  std::vector<double> std_gap;   // |std_a - std_b| per dimension
  double energy = 0.0;
};

// Samples are rows of [n, d] tensors.
DistributionGap distribution_distance(const Tensor& a, const Tensor& b);

// V-statistic 2E|X-Y| - E|X-X'| - E|Y-Y'|.
double energy_distance(const Tensor& a, const Tensor& b);

struct PermutationTest {
  double statistic = 0.0;
  double p_value = 1.0;
  double quantile_99 = 0.0;  // 99th percentile of the permutation statistics
  std::size_t permutations = 0;
};

PermutationTest energy_permutation_test(const Tensor& a, const Tensor& b, std::size_t permutations, Rng& rng);

struct KsTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov on 1-D samples, asymptotic p-value.
KsTest ks_two_sample(std::span<const double> a, std::span<const double> b);

// Per-window SSIM with explicit loops and a 2-D Gaussian kernel, for comparison
// against the filtered implementation.
double ssim_reference(const Tensor& a, const Tensor& b, const SsimConfig& cfg);

}  // namespace mvf::oracle
