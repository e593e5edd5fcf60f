#include "mvf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mvf::oracle {

void GaussianTask::validate() const {
  if (mean.empty()) throw std::invalid_argument("GaussianTask: mean must not be empty");
  if (!(stddev >= 0.0)) throw std::invalid_argument("GaussianTask: stddev must be >= 0");
}

namespace {

double path_scale(double sigma, double tau) {
  return std::sqrt((1.0 - tau) * (1.0 - tau) * sigma * sigma + tau * tau);
}

double velocity_1d(double mu, double sigma, double z, double t) {
  const double var = (1.0 - t) * (1.0 - t) * sigma * sigma + t * t;
  return -mu + (t - (1.0 - t) * sigma * sigma) / var * (z - (1.0 - t) * mu);
}

double trajectory_1d(double mu, double sigma, double z_t, double t, double tau) {
  const double xi = (z_t - (1.0 - t) * mu) / path_scale(sigma, t);
  return (1.0 - tau) * mu + path_scale(sigma, tau) * xi;
}

void check_time(const GaussianTask& task, double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument(std::string(op) + ": t must lie in [0, 1]");
  if (task.is_point_mass() && t == 0.0)
    throw std::domain_error(std::string(op) + ": point-mass velocity is singular at t = 0");
}

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

}  // namespace

Tensor analytic_instantaneous_velocity(const GaussianTask& task, const Tensor& z, double t) {
  task.validate();
  check_time(task, t, "analytic_instantaneous_velocity");
  Tensor v(z.shape());
  const auto cols = z.cols();
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double mu = task.mean_at(i % cols);
    v[i] = task.is_point_mass() ? (z[i] - mu) / t : velocity_1d(mu, task.stddev, z[i], t);
  }
  return v;
}

Tensor trajectory(const GaussianTask& task, const Tensor& z_t, double t, double tau) {
  task.validate();
  check_time(task, t, "trajectory");
  Tensor out(z_t.shape());
  const auto cols = z_t.cols();
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = trajectory_1d(task.mean_at(i % cols), task.stddev, z_t[i], t, tau);
  return out;
}

Tensor analytic_average_velocity(const GaussianTask& task, const Tensor& z_t, double r, double t, AverageMethod method) {
  task.validate();
  check_time(task, t, "analytic_average_velocity");
  if (!(r >= 0.0)) throw std::invalid_argument("analytic_average_velocity: r must be >= 0");
  if (r > t) throw std::invalid_argument("analytic_average_velocity: r must not exceed t");
  if (r == t) return analytic_instantaneous_velocity(task, z_t, t);

  Tensor u(z_t.shape());
  const auto cols = z_t.cols();
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double mu = task.mean_at(i % cols);
    if (task.is_point_mass()) {
      u[i] = (z_t[i] - mu) / t;
    } else if (method == AverageMethod::ClosedForm) {
      u[i] = (z_t[i] - trajectory_1d(mu, task.stddev, z_t[i], t, r)) / (t - r);
    } else {
      const double sigma = task.stddev, z = z_t[i];
      auto f = [&](double tau) { return velocity_1d(mu, sigma, trajectory_1d(mu, sigma, z, t, tau), tau); };
      u[i] = adaptive_simpson(f, r, t) / (t - r);
    }
  }
  return u;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, int max_depth) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

double relative_error(const Tensor& a, const Tensor& b) {
  require_same_shape("relative_error", a, b);
  const double diff = std::sqrt(sum_sq(sub(a, b)));
  const double denom = std::max({std::sqrt(sum_sq(a)), std::sqrt(sum_sq(b)), 1e-300});
  return diff / denom;
}

namespace {

std::vector<Tensor> shifted(std::span<const Tensor> point, std::span<const Tensor> dir, double h) {
  if (point.size() != dir.size()) throw std::invalid_argument("finite difference: point/direction arity mismatch");
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < point.size(); ++i) {
    require_same_shape("finite difference", point[i], dir[i]);
    Tensor p = point[i];
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += h * dir[i][k];
    out.push_back(std::move(p));
  }
  return out;
}

Tensor eval_plain(const ad::VarFn& f, std::span<const Tensor> point) {
  std::vector<ad::Var> vars;
  for (const auto& p : point) vars.push_back(ad::Var::constant(p));
  return f(vars).value();
}

Tensor central_difference(const ad::VarFn& f, std::span<const Tensor> point, std::span<const Tensor> dir, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference: h must be > 0");
  const Tensor plus = eval_plain(f, shifted(point, dir, h));
  const Tensor minus = eval_plain(f, shifted(point, dir, -h));
  return scale(sub(plus, minus), 1.0 / (2.0 * h));
}

}  // namespace

FdCheck finite_difference_check(const ad::VarFn& f, std::span<const Tensor> point, std::span<const Tensor> tangent,
                                double h) {
  FdCheck out;
  out.analytic = ad::jvp(f, point, tangent).tangent;
  out.numeric = central_difference(f, point, tangent, h);
  out.rel_error = relative_error(out.analytic, out.numeric);
  return out;
}

FdCheck gradient_check(const ad::VarFn& f, std::span<const Tensor> point, std::span<const Tensor> direction, double h) {
  const auto grads = ad::gradient(f, point);
  double dot = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t k = 0; k < grads[i].size(); ++k) dot += grads[i][k] * direction[i][k];
  FdCheck out;
  out.analytic = Tensor::scalar(dot);
  out.numeric = central_difference(f, point, direction, h);
  out.rel_error = relative_error(out.analytic, out.numeric);
  return out;
}

DistributionGap distribution_distance(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("distribution_distance", a.shape(), b.shape());
  DistributionGap out;
  auto moments = [](const Tensor& x, std::size_t d) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) m += x.at(i, d);
    m /= static_cast<double>(x.rows());
    double sq = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) sq += (x.at(i, d) - m) * (x.at(i, d) - m);
    return std::pair{m, std::sqrt(sq / static_cast<double>(x.rows()))};
  };
  for (std::size_t d = 0; d < a.cols(); ++d) {
    const auto [ma, sa] = moments(a, d);
    const auto [mb, sb] = moments(b, d);
    out.mean_gap.push_back(std::abs(ma - mb));
    out.std_gap.push_back(std::abs(sa - sb));
  }
  out.energy = energy_distance(a, b);
  return out;
}

namespace {

// Sum over unordered pairs of |x_i - x_j| for sorted x.
double pair_sum_sorted(std::span<const double> x) {
  double total = 0.0, prefix = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    total += x[j] * static_cast<double>(j) - prefix;
    prefix += x[j];
  }
  return total;
}

double energy_from_sums(double s_ab, double s_a, double s_b, double n, double m) {
  return 2.0 * s_ab / (n * m) - 2.0 * s_a / (n * n) - 2.0 * s_b / (m * m);
}

// Within-group pair sums for labels over the sorted pooled sample.
std::pair<double, double> labelled_pair_sums(std::span<const double> sorted, std::span<const char> in_a) {
  double s_a = 0.0, s_b = 0.0, sum_a = 0.0, sum_b = 0.0, cnt_a = 0.0, cnt_b = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    if (in_a[j]) {
      s_a += sorted[j] * cnt_a - sum_a;
      sum_a += sorted[j];
      cnt_a += 1.0;
    } else {
      s_b += sorted[j] * cnt_b - sum_b;
      sum_b += sorted[j];
      cnt_b += 1.0;
    }
  }
  return {s_a, s_b};
}

double row_distance(const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
  double sq = 0.0;
  for (std::size_t d = 0; d < x.cols(); ++d) {
    const double diff = x.at(i, d) - y.at(j, d);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

}  // namespace

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("energy_distance", a.shape(), b.shape());
  const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
  if (a.cols() == 1) {
    std::vector<double> xa(a.data().begin(), a.data().end()), xb(b.data().begin(), b.data().end());
    std::vector<double> pooled(xa);
    pooled.insert(pooled.end(), xb.begin(), xb.end());
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    std::sort(pooled.begin(), pooled.end());
    const double s_a = pair_sum_sorted(xa), s_b = pair_sum_sorted(xb);
    return energy_from_sums(pair_sum_sorted(pooled) - s_a - s_b, s_a, s_b, n, m);
  }
  double s_ab = 0.0, s_a = 0.0, s_b = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) s_ab += row_distance(a, i, b, j);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.rows(); ++j) s_a += row_distance(a, i, a, j);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = i + 1; j < b.rows(); ++j) s_b += row_distance(b, i, b, j);
  return energy_from_sums(s_ab, s_a, s_b, n, m);
}

PermutationTest energy_permutation_test(const Tensor& a, const Tensor& b, std::size_t permutations, Rng& rng) {
  if (permutations == 0) throw std::invalid_argument("energy_permutation_test: need at least one permutation");
  if (a.cols() != b.cols()) throw ShapeError("energy_permutation_test", a.shape(), b.shape());
  const std::size_t n = a.rows(), m = b.rows(), total = n + m;
  const Tensor pooled = stack_rows(std::vector<Tensor>{a, b});

  std::vector<double> stats;
  stats.reserve(permutations);
  PermutationTest out;
  out.statistic = energy_distance(a, b);
  out.permutations = permutations;

  if (a.cols() == 1) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<double> sorted(total);
    std::vector<std::size_t> rank(total);
    for (std::size_t k = 0; k < total; ++k) {
      sorted[k] = pooled[idx[k]];
      rank[idx[k]] = k;
    }
    const double s_pool = pair_sum_sorted(sorted);
    std::vector<char> in_a(total);
    for (std::size_t p = 0; p < permutations; ++p) {
      const auto perm = rng.permutation(total);
      std::fill(in_a.begin(), in_a.end(), 0);
      for (std::size_t k = 0; k < n; ++k) in_a[rank[perm[k]]] = 1;
      const auto [s_a, s_b] = labelled_pair_sums(sorted, in_a);
      stats.push_back(energy_from_sums(s_pool - s_a - s_b, s_a, s_b, static_cast<double>(n), static_cast<double>(m)));
    }
  } else {
    std::vector<double> dist(total * total);
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t j = 0; j < total; ++j) dist[i * total + j] = row_distance(pooled, i, pooled, j);
    std::vector<char> in_a(total);
    for (std::size_t p = 0; p < permutations; ++p) {
      const auto perm = rng.permutation(total);
      std::fill(in_a.begin(), in_a.end(), 0);
      for (std::size_t k = 0; k < n; ++k) in_a[perm[k]] = 1;
      double s_ab = 0.0, s_a = 0.0, s_b = 0.0;
      for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j) {
          const double d = dist[i * total + j];
          if (in_a[i] && in_a[j]) s_a += d;
          else if (!in_a[i] && !in_a[j]) s_b += d;
          else s_ab += d;
        }
      stats.push_back(energy_from_sums(s_ab, s_a, s_b, static_cast<double>(n), static_cast<double>(m)));
    }
  }
  std::size_t extreme = 0;
  for (double s : stats) extreme += s >= out.statistic ? 1 : 0;
  out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
  std::sort(stats.begin(), stats.end());
  const auto q = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(permutations)));
  out.quantile_99 = stats[std::min(q == 0 ? 0 : q - 1, stats.size() - 1)];
  return out;
}

KsTest ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const double n = static_cast<double>(xa.size()), m = static_cast<double>(xb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xa.size() && j < xb.size()) {
    const double v = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] == v) ++i;
    while (j < xb.size() && xb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsTest out;
  out.statistic = d;
  const double en = std::sqrt(n * m / (n + m));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double q = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    q += term;
    if (std::abs(term) < 1e-12) break;
    sign = -sign;
  }
  out.p_value = lambda < 1e-3 ? 1.0 : std::clamp(q, 0.0, 1.0);
  return out;
}

double ssim_reference(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  cfg.validate();
  require_same_shape("ssim_reference", a, b);
  const std::size_t h = a.shape()[0], w = a.shape()[1], k = cfg.window;
  if (a.rank() != 2 || h < k || w < k) throw ShapeError("ssim_reference: bad patch shape " + shape_str(a.shape()));

  std::vector<double> kernel(k * k);
  const double c = (static_cast<double>(k) - 1.0) / 2.0;
  double norm = 0.0;
  for (std::size_t u = 0; u < k; ++u)
    for (std::size_t v = 0; v < k; ++v) {
      const double du = static_cast<double>(u) - c, dv = static_cast<double>(v) - c;
      kernel[u * k + v] = std::exp(-(du * du + dv * dv) / (2.0 * cfg.sigma * cfg.sigma));
      norm += kernel[u * k + v];
    }
  for (auto& x : kernel) x /= norm;

  double lo = a[0], hi = a[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, a[i], b[i]});
    hi = std::max({hi, a[i], b[i]});
  }
  const double range = std::max(hi - lo, cfg.min_range);
  const double c1 = std::pow(cfg.k1 * range, 2), c2 = std::pow(cfg.k2 * range, 2);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t i = 0; i + k <= h; ++i)
    for (std::size_t j = 0; j + k <= w; ++j) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t u = 0; u < k; ++u)
        for (std::size_t v = 0; v < k; ++v) {
          ma += kernel[u * k + v] * a.at(i + u, j + v);
          mb += kernel[u * k + v] * b.at(i + u, j + v);
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (std::size_t u = 0; u < k; ++u)
        for (std::size_t v = 0; v < k; ++v) {
          const double da = a.at(i + u, j + v) - ma, db = b.at(i + u, j + v) - mb;
          va += kernel[u * k + v] * da * da;
          vb += kernel[u * k + v] * db * db;
          cov += kernel[u * k + v] * da * db;
        }
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

}  // namespace mvf::oracle
