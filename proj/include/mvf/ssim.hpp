#pragma once

#include <vector>

#include "mvf/autodiff.hpp"
#include "mvf/tensor.hpp"

namespace mvf {

// Structural similarity over valid (unpadded) Gaussian windows.
struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double min_range = 1e-6;

  void validate() const;
};

std::vector<double> gaussian_window(std::size_t size, double sigma);

// max - min over both inputs, clamped below by cfg.min_range. Symmetric in (a, b).
double ssim_dynamic_range(const Tensor& a, const Tensor& b, const SsimConfig& cfg);

// a and b are [H, W]. The dynamic range is computed from the values and held
// constant for differentiation.
ad::Var ssim(const ad::Var& a, const ad::Var& b, const SsimConfig& cfg);

double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg);

}  // namespace mvf
