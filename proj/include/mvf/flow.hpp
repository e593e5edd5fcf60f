#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mvf/autodiff.hpp"
#include "mvf/rng.hpp"
#include "mvf/tensor.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf {

enum class InputKind { PureNoise, DiffusedSource };

/// One training item on the straight path between data x and prior eps.
struct FlowSample {
  Tensor x;
  Tensor eps;
  double t = 1.0;
  double r = 1.0;
  double t_prime = 1.0;
  Tensor z_t;
  Tensor v_t;
  Tensor s;
  Tensor c;
  InputKind kind = InputKind::PureNoise;
};

/// Row-batched FlowSamples; row i of each tensor belongs to item i.
struct FlowBatch {
  Tensor x, eps, z, v, s, c;
  std::vector<double> t, r, t_prime;
  std::vector<InputKind> kind;

  std::size_t size() const { return t.size(); }
  FlowSample item(std::size_t i) const;
  static FlowBatch from_samples(std::span<const FlowSample> samples);
  void validate() const;
};

struct PathPoint {
  Tensor z_t;
  Tensor v_t;
};

// z_t = (1 - t) x + t eps, v_t = eps - x.
PathPoint make_path_point(const Tensor& x, const Tensor& eps, double t);
// Same with one t per row.
PathPoint make_path_points(const Tensor& x, const Tensor& eps, std::span<const double> t);

struct TimeSamplerConfig {
  double logit_mean = 0.0;
  double logit_stddev = 1.0;
  double r_equals_t_prob = 0.75;
};

struct TimePair {
  double t = 0.0;
  double r = 0.0;
  // Draws before ordering, exposed for distribution tests.
  double raw_first = 0.0;
  double raw_second = 0.0;
  bool collapsed = false;  // r was set to t
};

TimePair sample_times(const TimeSamplerConfig& cfg, Rng& rng);
double sample_logit_normal(const TimeSamplerConfig& cfg, Rng& rng);

inline constexpr double kAdaptiveEps = 1e-3;

// Per-row ||a-b||^2 / sg(||a-b||^2 + 1e-3), shape [B,1].
ad::Var adaptive_distance_rows(const ad::Var& a, const ad::Var& b);
// Batch mean of adaptive_distance_rows.
ad::Var adaptive_distance(const ad::Var& a, const ad::Var& b);

ad::Var cfm_loss(const ad::Var& v_pred, const Tensor& v_t);

// u_tgt = v - (t - r) * (dz u . v + dt u), computed by one JVP with tangent
// (v, 0, 1). Rows with r == t return v unchanged. Result carries no gradient.
Tensor meanflow_target(const NetConfig& config, const ModelParams& params, const FlowBatch& batch);

struct MeanFlowTerms {
  ad::Var loss;      // scalar
  ad::Var per_item;  // [B,1]
  Tensor prediction;
  Tensor target;
};

// Mean adaptive distance between u_theta and the stop-gradient target. The
// prediction and the JVP tangent come from the same dual pass.
MeanFlowTerms meanflow_loss(const NetConfig& config, const BoundParams& params, const FlowBatch& batch);

using InstantField = std::function<Tensor(const Tensor& z, double t)>;
using AverageField = std::function<Tensor(const Tensor& z, double r, double t)>;

// Descending uniform grid start = g_0 > ... > g_steps = 0.
std::vector<double> uniform_grid(std::size_t steps, double start = 1.0);

// z <- z - dt v(z, t_k) over uniform_grid(steps).
Tensor euler_sample(const Tensor& z_start, std::size_t steps, const InstantField& field);

// z <- z - (t_k - t_{k+1}) u(z, t_{k+1}, t_k) over a strictly decreasing grid ending at 0.
Tensor meanflow_sample(const Tensor& z_start, std::span<const double> grid, const AverageField& field);

// Network field with fixed conditions (one row per z row).
AverageField network_field(const NetConfig& config, const ModelParams& params, Tensor s, Tensor c, double t_prime);

Tensor standard_normal(Shape shape, Rng& rng);

}  // namespace mvf
