#pragma once

#include <vector>

#include "mvf/flow.hpp"
#include "mvf/rng.hpp"
#include "mvf/tensor.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf::testing {

inline Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Initialized parameters with every tensor (including the zero output layer) perturbed.
inline ModelParams random_params(const NetConfig& cfg, std::uint64_t seed, double scale = 0.3) {
  ModelParams p = init_params(cfg, seed);
  Rng rng(seed, 99);
  for (auto& param : p)
    for (auto& v : param.value.data()) v += scale * rng.normal();
  return p;
}

inline NetConfig small_net(std::size_t data_dim = 2) {
  NetConfig cfg;
  cfg.data_dim = data_dim;
  cfg.hidden_dim = 16;
  cfg.depth = 2;
  cfg.time_embed_dim = 4;
  cfg.speaker_dim = 2;
  cfg.content_dim = 1;
  cfg.max_frequency = 3.0;
  return cfg;
}

// Pure-noise batch on the straight path with sampled (r, t).
inline FlowBatch random_batch(const NetConfig& cfg, std::size_t n, Rng& rng, double r_equals_t_prob = 0.5) {
  FlowBatch b;
  b.x = randn({n, cfg.data_dim}, rng);
  b.eps = randn({n, cfg.data_dim}, rng);
  b.s = randn({n, cfg.speaker_dim}, rng);
  b.c = randn({n, cfg.content_dim}, rng);
  TimeSamplerConfig times;
  times.r_equals_t_prob = r_equals_t_prob;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tp = sample_times(times, rng);
    b.t.push_back(tp.t);
    b.r.push_back(tp.r);
    b.t_prime.push_back(1.0);
    b.kind.push_back(InputKind::PureNoise);
  }
  const auto path = make_path_points(b.x, b.eps, b.t);
  b.z = path.z_t;
  b.v = path.v_t;
  return b;
}

}  // namespace mvf::testing
