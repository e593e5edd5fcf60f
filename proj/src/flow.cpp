#include "mvf/flow.hpp"

#include <stdexcept>
#include <string>

namespace mvf {

FlowSample FlowBatch::item(std::size_t i) const {
  FlowSample s;
  s.x = x.row_copy(i);
  s.eps = eps.row_copy(i);
  s.t = t[i];
  s.r = r[i];
  s.t_prime = t_prime[i];
  s.z_t = z.row_copy(i);
  s.v_t = v.row_copy(i);
  s.s = this->s.row_copy(i);
  s.c = c.row_copy(i);
  s.kind = kind[i];
  return s;
}

FlowBatch FlowBatch::from_samples(std::span<const FlowSample> samples) {
  if (samples.empty()) throw std::invalid_argument("FlowBatch: empty sample list");
  std::vector<Tensor> xs, es, zs, vs, ss, cs;
  FlowBatch b;
  for (const auto& s : samples) {
    xs.push_back(s.x);
    es.push_back(s.eps);
    zs.push_back(s.z_t);
    vs.push_back(s.v_t);
    ss.push_back(s.s);
    cs.push_back(s.c);
    b.t.push_back(s.t);
    b.r.push_back(s.r);
    b.t_prime.push_back(s.t_prime);
    b.kind.push_back(s.kind);
  }
  b.x = stack_rows(xs);
  b.eps = stack_rows(es);
  b.z = stack_rows(zs);
  b.v = stack_rows(vs);
  b.s = stack_rows(ss);
  b.c = stack_rows(cs);
  b.validate();
  return b;
}

void FlowBatch::validate() const {
  const auto n = size();
  if (n == 0) throw std::invalid_argument("FlowBatch: empty");
  if (r.size() != n || t_prime.size() != n || kind.size() != n)
    throw std::invalid_argument("FlowBatch: per-item vectors disagree in length");
  for (const Tensor* m : {&x, &eps, &z, &v, &s, &c})
    if (m->rank() != 2 || m->rows() != n)
      throw ShapeError("FlowBatch: expected " + std::to_string(n) + " rows, got " + shape_str(m->shape()));
  require_same_shape("FlowBatch z/v", z, v);
  for (std::size_t i = 0; i < n; ++i)
    if (r[i] > t[i]) throw std::invalid_argument("FlowBatch: r > t in item " + std::to_string(i));
}

PathPoint make_path_point(const Tensor& x, const Tensor& eps, double t) {
  require_same_shape("make_path_point", x, eps);
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("make_path_point: t outside [0, 1]");
  PathPoint p{Tensor(x.shape()), Tensor(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    p.z_t[i] = (1.0 - t) * x[i] + t * eps[i];
    p.v_t[i] = eps[i] - x[i];
  }
  p.z_t.finalize("make_path_point");
  p.v_t.finalize("make_path_point");
  return p;
}

PathPoint make_path_points(const Tensor& x, const Tensor& eps, std::span<const double> t) {
  require_same_shape("make_path_points", x, eps);
  if (t.size() != x.rows()) throw std::invalid_argument("make_path_points: one time per row required");
  PathPoint p{Tensor(x.shape()), Tensor(x.shape())};
  const auto cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double tr = t[r];
    if (!(tr >= 0.0 && tr <= 1.0)) throw std::invalid_argument("make_path_points: t outside [0, 1]");
    for (std::size_t k = r * cols; k < (r + 1) * cols; ++k) {
      p.z_t[k] = (1.0 - tr) * x[k] + tr * eps[k];
      p.v_t[k] = eps[k] - x[k];
    }
  }
  p.z_t.finalize("make_path_points");
  p.v_t.finalize("make_path_points");
  return p;
}

double sample_logit_normal(const TimeSamplerConfig& cfg, Rng& rng) {
  return sigmoid(cfg.logit_mean + cfg.logit_stddev * rng.normal());
}

TimePair sample_times(const TimeSamplerConfig& cfg, Rng& rng) {
  TimePair p;
  p.raw_first = sample_logit_normal(cfg, rng);
  p.raw_second = sample_logit_normal(cfg, rng);
  p.t = std::max(p.raw_first, p.raw_second);
  p.r = std::min(p.raw_first, p.raw_second);
  if (rng.uniform() < cfg.r_equals_t_prob) {
    p.r = p.t;
    p.collapsed = true;
  }
  return p;
}

ad::Var adaptive_distance_rows(const ad::Var& a, const ad::Var& b) {
  ad::Var sq = ad::sum_sq_rows(ad::sub(a, b));
  ad::Var denom = ad::add_scalar(ad::stop_grad(sq), kAdaptiveEps);
  return ad::div(sq, denom);
}

ad::Var adaptive_distance(const ad::Var& a, const ad::Var& b) { return ad::reduce_mean(adaptive_distance_rows(a, b)); }

ad::Var cfm_loss(const ad::Var& v_pred, const Tensor& v_t) {
  require_same_shape("cfm_loss", v_pred.value(), v_t);
  return adaptive_distance(v_pred, ad::Var::constant(v_t));
}

namespace {

// Combines v and the JVP tangent into the target, row by row.
Tensor assemble_target(const FlowBatch& batch, const Tensor& tangent) {
  Tensor target = batch.v;
  const auto cols = target.cols();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.r[i] == batch.t[i]) continue;
    const double dt = batch.t[i] - batch.r[i];
    for (std::size_t k = i * cols; k < (i + 1) * cols; ++k) target[k] = batch.v[k] - dt * tangent[k];
  }
  target.finalize("meanflow_target");
  return target;
}

NetInputs dual_inputs(const FlowBatch& batch) {
  const auto n = batch.size();
  return NetInputs{ad::Var::with_tangent(batch.z, batch.v),
                   ad::Var::constant(time_column(batch.r)),
                   ad::Var::with_tangent(time_column(batch.t), Tensor::ones({n, 1})),
                   ad::Var::constant(time_column(batch.t_prime)),
                   batch.s,
                   batch.c};
}

}  // namespace

Tensor meanflow_target(const NetConfig& config, const ModelParams& params, const FlowBatch& batch) {
  batch.validate();
  BoundParams bound(params, false);
  ad::Var out = u_theta(config, bound, dual_inputs(batch));
  return assemble_target(batch, out.tangent_or_zero());
}

MeanFlowTerms meanflow_loss(const NetConfig& config, const BoundParams& params, const FlowBatch& batch) {
  batch.validate();
  ad::Var pred = u_theta(config, params, dual_inputs(batch));
  Tensor target = assemble_target(batch, pred.tangent_or_zero());
  ad::Var per_item = adaptive_distance_rows(pred, ad::Var::constant(target));
  return {ad::reduce_mean(per_item), per_item, pred.value(), std::move(target)};
}

std::vector<double> uniform_grid(std::size_t steps, double start) {
  if (steps == 0) throw std::invalid_argument("uniform_grid: steps must be >= 1");
  if (!(start > 0.0 && start <= 1.0)) throw std::invalid_argument("uniform_grid: start must lie in (0, 1]");
  std::vector<double> g(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    g[k] = start * static_cast<double>(steps - k) / static_cast<double>(steps);
  return g;
}

namespace {

void displace(Tensor& z, double dt, const Tensor& velocity) {
  require_same_shape("sampler step", z, velocity);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = z[i] - dt * velocity[i];
  z.finalize("sampler step");
}

}  // namespace

Tensor euler_sample(const Tensor& z_start, std::size_t steps, const InstantField& field) {
  const auto grid = uniform_grid(steps);
  Tensor z = z_start;
  for (std::size_t k = 0; k < steps; ++k) displace(z, grid[k] - grid[k + 1], field(z, grid[k]));
  return z;
}

Tensor meanflow_sample(const Tensor& z_start, std::span<const double> grid, const AverageField& field) {
  if (grid.size() < 2) throw std::invalid_argument("meanflow_sample: grid needs at least two points");
  if (grid.back() != 0.0) throw std::invalid_argument("meanflow_sample: grid must end at 0");
  if (grid.front() > 1.0) throw std::invalid_argument("meanflow_sample: grid must start at or below 1");
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    if (!(grid[k] > grid[k + 1])) throw std::invalid_argument("meanflow_sample: grid must be strictly decreasing");
  Tensor z = z_start;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    displace(z, grid[k] - grid[k + 1], field(z, grid[k + 1], grid[k]));
  return z;
}

AverageField network_field(const NetConfig& config, const ModelParams& params, Tensor s, Tensor c, double t_prime) {
  return [&config, &params, s = std::move(s), c = std::move(c), t_prime](const Tensor& z, double r, double t) {
    const auto n = z.rows();
    const std::vector<double> rs(n, r), ts(n, t), tps(n, t_prime);
    return u_theta_eval(config, params, z, rs, ts, tps, s, c);
  };
}

Tensor standard_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = round_to_precision(rng.normal());
  return t;
}

}  // namespace mvf
