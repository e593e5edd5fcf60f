#include "mvf/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mvf {

void SsimConfig::validate() const {
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("ssim.window must be odd and positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("ssim.sigma must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("ssim.k1 and ssim.k2 must be positive");
  if (!(min_range > 0.0)) throw std::invalid_argument("ssim.min_range must be positive");
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

double ssim_dynamic_range(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  require_same_shape("ssim_dynamic_range", a, b);
  auto [amin, amax] = std::minmax_element(a.data().begin(), a.data().end());
  auto [bmin, bmax] = std::minmax_element(b.data().begin(), b.data().end());
  return std::max(std::max(*amax, *bmax) - std::min(*amin, *bmin), cfg.min_range);
}

namespace {

// Banded matrix applying the 1-D window along one axis: [n - w + 1, n].
Tensor window_matrix(std::size_t n, const std::vector<double>& w) {
  const auto out = n - w.size() + 1;
  Tensor m({out, n});
  for (std::size_t i = 0; i < out; ++i)
    for (std::size_t k = 0; k < w.size(); ++k) m.at(i, i + k) = w[k];
  return m;
}

Tensor transposed(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  return out;
}

}  // namespace

ad::Var ssim(const ad::Var& a, const ad::Var& b, const SsimConfig& cfg) {
  cfg.validate();
  require_same_shape("ssim", a.value(), b.value());
  if (a.value().rank() != 2) throw ShapeError("ssim expects [H, W] patches, got " + shape_str(a.shape()));
  const auto h = a.shape()[0], w = a.shape()[1];
  if (h < cfg.window || w < cfg.window)
    throw ShapeError("ssim: patch " + shape_str(a.shape()) + " is smaller than the " + std::to_string(cfg.window) +
                     "-wide window");

  const auto win = gaussian_window(cfg.window, cfg.sigma);
  const ad::Var rows = ad::Var::constant(window_matrix(h, win));
  const ad::Var cols = ad::Var::constant(transposed(window_matrix(w, win)));
  auto filter = [&](const ad::Var& x) { return ad::matmul(ad::matmul(rows, x), cols); };

  const double range = ssim_dynamic_range(a.value(), b.value(), cfg);
  const double c1 = (cfg.k1 * range) * (cfg.k1 * range);
  const double c2 = (cfg.k2 * range) * (cfg.k2 * range);

  const ad::Var mu_a = filter(a);
  const ad::Var mu_b = filter(b);
  const ad::Var mu_aa = ad::mul(mu_a, mu_a);
  const ad::Var mu_bb = ad::mul(mu_b, mu_b);
  const ad::Var mu_ab = ad::mul(mu_a, mu_b);
  const ad::Var var_a = ad::sub(filter(ad::mul(a, a)), mu_aa);
  const ad::Var var_b = ad::sub(filter(ad::mul(b, b)), mu_bb);
  const ad::Var cov = ad::sub(filter(ad::mul(a, b)), mu_ab);

  const ad::Var num = ad::mul(ad::add_scalar(ad::scale(mu_ab, 2.0), c1), ad::add_scalar(ad::scale(cov, 2.0), c2));
  const ad::Var den = ad::mul(ad::add_scalar(ad::add(mu_aa, mu_bb), c1), ad::add_scalar(ad::add(var_a, var_b), c2));
  return ad::reduce_mean(ad::div(num, den));
}

double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  return ssim(ad::Var::constant(a), ad::Var::constant(b), cfg).value().item();
}

}  // namespace mvf
