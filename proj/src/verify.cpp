#include "mvf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <stdexcept>

#include "mvf/mvf_losses.hpp"
#include "mvf/oracle.hpp"
#include "mvf/ssim.hpp"

namespace mvf::verify {

namespace {

PropertyResult make(const std::string& suite, const std::string& name, const std::string& anchor,
                    const std::string& cmp, double measured, double threshold, double threshold_hi = 0.0,
                    std::string detail = {}) {
  PropertyResult r{suite, name, anchor, cmp, measured, threshold, threshold_hi, false, std::move(detail)};
  if (cmp == "<") r.passed = measured < threshold;
  else if (cmp == "<=") r.passed = measured <= threshold;
  else if (cmp == ">") r.passed = measured > threshold;
  else if (cmp == "==") r.passed = measured == threshold;
  else if (cmp == "in") r.passed = measured >= threshold && measured <= threshold_hi;
  else throw std::logic_error("unknown comparison " + cmp);
  return r;
}

NetConfig small_net(Activation act) {
  NetConfig c;
  c.data_dim = 3;
  c.hidden_dim = 8;
  c.depth = 2;
  c.time_embed_dim = 4;
  c.speaker_dim = 2;
  c.content_dim = 2;
  c.activation = act;
  c.max_frequency = 6.0;
  return c;
}

ModelParams random_params(const NetConfig& cfg, Rng& rng) {
  ModelParams p = init_params(cfg, rng.next_u64());
  for (auto& prm : p) {
    for (auto& v : prm.value.data()) v += 0.3 * rng.normal();
  }
  return p;
}

Tensor randn(Shape shape, Rng& rng) { return standard_normal(std::move(shape), rng); }

FlowBatch random_batch(const NetConfig& net, std::size_t n, const TimeSamplerConfig& times, Rng& rng) {
  FlowBatch b;
  b.x = randn({n, net.data_dim}, rng);
  b.eps = randn({n, net.data_dim}, rng);
  b.s = randn({n, net.speaker_dim}, rng);
  b.c = randn({n, net.content_dim}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tp = sample_times(times, rng);
    b.t.push_back(tp.t);
    b.r.push_back(tp.r);
    b.t_prime.push_back(0.5 + 0.5 * rng.uniform());
  }
  b.kind.assign(n, InputKind::PureNoise);
  auto path = make_path_points(b.x, b.eps, b.t);
  b.z = std::move(path.z_t);
  b.v = std::move(path.v_t);
  return b;
}

double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------- autodiff

std::vector<PropertyResult> autodiff_suite(const Options& opts) {
  const std::string S = "autodiff";
  std::vector<PropertyResult> out;
  Rng rng(opts.seed, 1);

  {
    auto f = [](std::span<const ad::Var> in) {
      const ad::Var x = in[0];
      const ad::Var x2 = ad::mul(x, x);
      return ad::add(ad::sub(ad::mul(x2, x), x), ad::scale(x2, 2.0));
    };
    const std::vector<Tensor> p{Tensor({2, 3}, {0.3, -1.2, 2.0, 0.7, 1.1, -0.4})};
    const std::vector<Tensor> d{Tensor({2, 3}, {1.0, 0.5, -0.25, 2.0, -1.0, 0.1})};
    const auto fd = oracle::finite_difference_check(f, p, d, 1e-5);
    out.push_back(make(S, "polynomial_jvp_fd", "jvp(x^3+2x^2-x) vs central difference", "<", fd.rel_error, 1e-10));
  }

  double worst_jvp = 0.0, worst_grad = 0.0;
  const std::size_t cases = 100;
  for (std::size_t k = 0; k < cases; ++k) {
    const NetConfig net = small_net(k % 2 == 0 ? Activation::SiLU : Activation::Tanh);
    const ModelParams params = random_params(net, rng);
    const std::size_t n = 1 + rng.below(4);
    std::vector<double> r(n), t(n), tp(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 0.2 + 0.8 * rng.uniform();
      r[i] = t[i] * 0.8 * rng.uniform();
      tp[i] = 0.3 + 0.7 * rng.uniform();
    }
    const Tensor s = randn({n, net.speaker_dim}, rng), c = randn({n, net.content_dim}, rng);
    auto f = [&](std::span<const ad::Var> in) {
      const BoundParams bound(params, false);
      return u_theta(net, bound, NetInputs{in[0], in[1], in[2], in[3], s, c});
    };
    const std::vector<Tensor> point{randn({n, net.data_dim}, rng), time_column(r), time_column(t), time_column(tp)};
    std::vector<Tensor> tangent{randn({n, net.data_dim}, rng), Tensor({n, 1}), Tensor({n, 1}), Tensor({n, 1})};
    for (std::size_t j = 1; j < 4; ++j)
      for (auto& v : tangent[j].data()) v = 0.1 * rng.normal();
    worst_jvp = std::max(worst_jvp, oracle::finite_difference_check(f, point, tangent, 1e-5).rel_error);

    // Parameter gradient of a random linear read-out vs a central difference.
    const Tensor w = randn({n, net.data_dim}, rng);
    ModelParams p = params;
    p.zero_grads();
    {
      const BoundParams bound(p, true);
      const ad::Var u = u_theta(net, bound,
                                NetInputs{ad::Var::constant(point[0]), ad::Var::constant(point[1]),
                                          ad::Var::constant(point[2]), ad::Var::constant(point[3]), s, c});
      ad::backward(ad::reduce_sum(ad::mul(u, ad::Var::constant(w))));
      bound.accumulate_grads(p);
    }
    std::vector<Tensor> dir;
    double analytic = 0.0;
    for (const auto& prm : p) {
      dir.push_back(randn(prm.value.shape(), rng));
      for (std::size_t q = 0; q < prm.grad.size(); ++q) analytic += prm.grad[q] * dir.back()[q];
    }
    auto loss_at = [&](double h) {
      ModelParams shifted = params;
      for (std::size_t i = 0; i < shifted.size(); ++i)
        for (std::size_t q = 0; q < shifted[i].value.size(); ++q) shifted[i].value[q] += h * dir[i][q];
      const Tensor u = u_theta_eval(net, shifted, point[0], r, t, tp, s, c);
      double acc = 0.0;
      for (std::size_t q = 0; q < u.size(); ++q) acc += u[q] * w[q];
      return acc;
    };
    const double h = 1e-5;
    const double numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
    worst_grad = std::max(worst_grad, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-300}));
  }
  out.push_back(make(S, "net_jvp_fd", "jvp(u_theta) vs central difference, 100 random cases", "<", worst_jvp, 1e-5));
  out.push_back(make(S, "net_param_grad_fd", "<grad_theta L, d> vs central difference, 100 random cases", "<",
                     worst_grad, 1e-5));

  {
    // Composite x * sg(x^2): its tangent must equal the derivative of the frozen composite x * c.
    const Tensor x0({1, 3}, {0.4, -1.3, 2.2});
    const Tensor dx({1, 3}, {1.0, -0.5, 0.3});
    auto f = [](std::span<const ad::Var> in) { return ad::mul(in[0], ad::stop_grad(ad::mul(in[0], in[0]))); };
    const Tensor frozen = hadamard(x0, x0);
    auto g = [&frozen](std::span<const ad::Var> in) { return ad::mul(in[0], ad::Var::constant(frozen)); };
    const std::vector<Tensor> p{x0}, d{dx};
    const Tensor analytic = ad::jvp(f, p, d).tangent;
    const auto fd = oracle::finite_difference_check(g, p, d, 1e-5);
    out.push_back(make(S, "stop_grad_barrier_jvp", "jvp(x sg(x^2)) == d/dh of x c with c frozen", "<",
                       oracle::relative_error(analytic, fd.numeric), 1e-9));
    const auto grads = ad::gradient([&](std::span<const ad::Var> in) { return ad::reduce_sum(f(in)); }, p);
    out.push_back(make(S, "stop_grad_barrier_grad", "grad of sum(x sg(x^2)) == sg(x^2)", "==",
                       max_abs_diff(grads[0], frozen), 0.0));
  }

  {
    bool refused = false;
    try {
      ad::jvp([](std::span<const ad::Var> in) { return ad::relu(in[0]); }, std::vector<Tensor>{Tensor::scalar(0.5)},
              std::vector<Tensor>{Tensor::scalar(1.0)});
    } catch (const ad::JvpError&) {
      refused = true;
    }
    out.push_back(make(S, "kinked_primitive_refuses_tangent", "jvp through relu raises", "==", refused ? 1.0 : 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------- flow

std::vector<PropertyResult> flow_suite(const Options& opts) {
  const std::string S = "flow";
  std::vector<PropertyResult> out;
  Rng rng(opts.seed, 2);
  const TargetFn target = opts.target ? opts.target : TargetFn(meanflow_target);

  {
    const Tensor x = randn({4, 3}, rng), eps = randn({4, 3}, rng);
    const auto p0 = make_path_point(x, eps, 0.0), p1 = make_path_point(x, eps, 1.0);
    const double worst = std::max({max_abs_diff(p0.z_t, x), max_abs_diff(p1.z_t, eps), max_abs_diff(p0.v_t, sub(eps, x))});
    out.push_back(make(S, "path_endpoints", "z_0 = x, z_1 = eps, v = eps - x", "==", worst, 0.0));
  }

  {
    const ad::Var a = ad::Var::parameter(Tensor::scalar(0.0));
    const ad::Var d = adaptive_distance(a, ad::Var::constant(Tensor::scalar(3.0)));
    ad::backward(d);
    const double ev = std::abs(d.value().item() - 9.0 / 9.001);
    const double eg = std::abs(a.grad().item() - (-6.0 / 9.001));
    out.push_back(make(S, "adaptive_distance_value", "d(0,3) = 9 / (9 + 1e-3)", "<", ev, 1e-15));
    out.push_back(make(S, "adaptive_distance_grad", "dd/da(0,3) = -6 / (9 + 1e-3)", "<", eg, 1e-15));
  }

  {
    TimeSamplerConfig cfg;
    const std::size_t n = 100000;
    std::size_t collapsed = 0, ordered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto tp = sample_times(cfg, rng);
      collapsed += tp.r == tp.t ? 1 : 0;
      ordered += (tp.r <= tp.t && tp.r > 0.0 && tp.t < 1.0) ? 1 : 0;
    }
    const double frac = static_cast<double>(collapsed) / n;
    const double band = 4.0 * std::sqrt(0.75 * 0.25 / n);
    out.push_back(make(S, "time_sampler_collapse_rate", "P(r = t) = 0.75", "in", frac, 0.75 - band, 0.75 + band));
    out.push_back(make(S, "time_sampler_order", "0 < r <= t < 1", "==", static_cast<double>(ordered), static_cast<double>(n)));
  }

  {
    TimeSamplerConfig collapse;
    collapse.r_equals_t_prob = 1.0;
    std::size_t exact = 0;
    const std::size_t batches = 1000;
    for (std::size_t k = 0; k < batches; ++k) {
      const NetConfig net = small_net(Activation::SiLU);
      const ModelParams params = random_params(net, rng);
      const FlowBatch b = random_batch(net, 8, collapse, rng);
      exact += target(net, params, b).bitwise_equal(b.v) ? 1 : 0;
    }
    out.push_back(make(S, "r_equals_t_reduction", "u_tgt == v_t bitwise when r = t (1000 batches)", "==",
                       static_cast<double>(exact), static_cast<double>(batches)));
  }

  {
    TimeSamplerConfig open;
    open.r_equals_t_prob = 0.0;
    double worst = 0.0, worst_fused = 0.0;
    for (std::size_t k = 0; k < 20; ++k) {
      const NetConfig net = small_net(k % 2 ? Activation::Tanh : Activation::SiLU);
      const ModelParams params = random_params(net, rng);
      const FlowBatch b = random_batch(net, 6, open, rng);
      const Tensor tgt = target(net, params, b);
      const double h = 1e-5;
      auto shifted = [&](double sign) {
        Tensor z = b.z;
        std::vector<double> t = b.t;
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += sign * h * b.v[i];
        for (auto& v : t) v += sign * h;
        return u_theta_eval(net, params, z, b.r, t, b.t_prime, b.s, b.c);
      };
      const Tensor total_derivative = scale(sub(shifted(1.0), shifted(-1.0)), 1.0 / (2.0 * h));
      Tensor implied(tgt.shape());
      const auto cols = tgt.cols();
      for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t q = 0; q < cols; ++q)
          implied.at(i, q) = (b.v.at(i, q) - tgt.at(i, q)) / (b.t[i] - b.r[i]);
      worst = std::max(worst, oracle::relative_error(implied, total_derivative));

      const BoundParams bound(params, false);
      worst_fused = std::max(worst_fused, max_abs_diff(meanflow_loss(net, bound, b).target, tgt));
    }
    out.push_back(make(S, "target_total_derivative_fd",
                       "(v - u_tgt)/(t - r) == d/dh u(z + h v, r, t + h) by central difference", "<", worst, 1e-5));
    out.push_back(make(S, "fused_loss_target", "meanflow_loss target == standalone target", "<", worst_fused, 1e-12));
  }

  {
    const NetConfig net = small_net(Activation::SiLU);
    const ModelParams params = random_params(net, rng);
    const Tensor z = randn({5, 3}, rng), s = randn({5, 2}, rng), c = randn({5, 2}, rng);
    const std::vector<double> grid{1.0, 0.0};
    const Tensor one = meanflow_sample(z, grid, network_field(net, params, s, c, 1.0));
    const std::vector<double> zeros(5, 0.0), ones(5, 1.0);
    const Tensor direct = sub(z, u_theta_eval(net, params, z, zeros, ones, ones, s, c));
    out.push_back(make(S, "one_step_sampler", "grid [1, 0] gives z1 - u(z1, 0, 1)", "==", max_abs_diff(one, direct), 0.0));
  }
  return out;
}

// ---------------------------------------------------------------- mvf

std::vector<PropertyResult> mvf_suite(const Options& opts) {
  const std::string S = "mvf";
  std::vector<PropertyResult> out;
  Rng rng(opts.seed, 3);
  const SsimConfig ssim_cfg;

  {
    double worst = 0.0, worst_self = 0.0;
    for (std::size_t k = 0; k < 100; ++k) {
      const std::size_t h = 12 + rng.below(10), w = 12 + rng.below(10);
      const Tensor a = randn({h, w}, rng);
      Tensor b = randn({h, w}, rng);
      const double mix = rng.uniform();
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = mix * a[i] + (1.0 - mix) * b[i];
      worst = std::max(worst, std::abs(ssim_value(a, b, ssim_cfg) - oracle::ssim_reference(a, b, ssim_cfg)));
      worst_self = std::max(worst_self, std::abs(ssim_value(a, a, ssim_cfg) - 1.0));
    }
    out.push_back(make(S, "ssim_reference_match", "filtered SSIM == per-window SSIM (100 pairs)", "<", worst, 1e-8));
    out.push_back(make(S, "ssim_identity", "SSIM(x, x) == 1", "<", worst_self, 1e-6));
  }

  NetConfig net;
  net.data_dim = 16 * 16;
  net.hidden_dim = 16;
  net.depth = 1;
  net.time_embed_dim = 4;
  net.speaker_dim = 3;
  net.content_dim = 2;
  const PatchShape patch{16, 16};

  {
    const ModelParams params = random_params(net, rng);
    const std::size_t n = 4;
    const Tensor s = randn({n, net.speaker_dim}, rng), c = randn({n, net.content_dim}, rng);
    const std::vector<double> zeros(n, 0.0), ones(n, 1.0);
    const Tensor x_bar = sub(Tensor::zeros({n, net.data_dim}), u_theta_eval(net, params, Tensor::zeros({n, net.data_dim}),
                                                                             zeros, ones, ones, s, c));
    Tensor close = x_bar;
    for (auto& v : close.data()) v += 0.01 * rng.normal();
    auto grad_max = [&](const Tensor& x, double* min_ssim) {
      ModelParams p = params;
      p.zero_grads();
      const BoundParams bound(p, true);
      const auto zr = zero_input_reconstruction(net, bound, x, s, c, ZeroRecConfig{}, ssim_cfg, patch);
      ad::backward(zr.loss);
      bound.accumulate_grads(p);
      *min_ssim = *std::min_element(zr.ssim.begin(), zr.ssim.end());
      double g = 0.0;
      for (const auto& prm : p) g = std::max(g, max_abs(prm.grad));
      return g;
    };
    double ssim_close = 0.0, ssim_far = 0.0;
    const double g_close = grad_max(close, &ssim_close);
    const double g_far = grad_max(randn({n, net.data_dim}, rng), &ssim_far);
    out.push_back(make(S, "margin_dead_zone", "SSIM > 1 - m gives zero parameter gradient", "==",
                       ssim_close > 0.7 ? g_close : -1.0, 0.0, 0.0, "min ssim " + std::to_string(ssim_close)));
    out.push_back(make(S, "margin_active_gradient", "SSIM < 1 - m gives nonzero gradient", ">",
                       ssim_far < 0.7 ? g_far : 0.0, 0.0));
  }

  {
    const ModelParams params = random_params(net, rng);
    const std::size_t n = 32;
    const Tensor s = randn({n, net.speaker_dim}, rng), c = randn({n, net.content_dim}, rng);
    const std::vector<double> ones(n, 1.0);
    const auto src = synthesize_diffused_source(net, params, s, c, ones, rng);
    out.push_back(make(S, "eps_hat_at_t_prime_one", "eps_hat == z1 bitwise at t' = 1", "==",
                       src.eps_hat.bitwise_equal(src.z1) ? 1.0 : 0.0, 1.0));
    std::size_t deranged = 0;
    for (std::size_t k = 0; k < 1000; ++k) {
      const auto perm = rng.derangement(n);
      bool ok = true;
      for (std::size_t i = 0; i < n; ++i) ok = ok && perm[i] != i;
      deranged += ok ? 1 : 0;
    }
    out.push_back(make(S, "speaker_shuffle_derangement", "no item keeps its own speaker (1000 trials, batch 32)", "==",
                       static_cast<double>(deranged), 1000.0));
  }

  {
    const ModelParams params = random_params(net, rng);
    const std::size_t n = 8;
    const Tensor x = randn({n, net.data_dim}, rng), s = randn({n, net.speaker_dim}, rng),
                 c = randn({n, net.content_dim}, rng);
    const FlowBatch b = build_training_batch(net, params, x, s, c, BatchConfig{}, rng);
    FlowBatch frozen = b;
    frozen.eps = Tensor(b.eps.shape(), std::vector<double>(b.eps.data().begin(), b.eps.data().end()));
    auto path = make_path_points(frozen.x, frozen.eps, frozen.t);
    frozen.z = path.z_t;
    frozen.v = path.v_t;
    ObjectiveConfig obj;
    obj.patch = patch;
    auto grads = [&](const FlowBatch& batch) {
      ModelParams p = params;
      p.zero_grads();
      const BoundParams bound(p, true);
      ad::backward(total_objective(net, bound, batch, obj).total);
      bound.accumulate_grads(p);
      return p;
    };
    const ModelParams ga = grads(b), gb = grads(frozen);
    double diff = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) diff = std::max(diff, max_abs_diff(ga[i].grad, gb[i].grad));
    out.push_back(make(S, "no_grad_through_synthesis", "gradient equals the constant-eps_hat run", "==", diff, 0.0));

    ObjectiveConfig off = obj;
    off.zerorec.weight = 0.0;
    const BoundParams bound(params, false);
    const auto terms = total_objective(net, bound, b, off);
    out.push_back(make(S, "zerorec_weight_zero", "weight 0 reduces the objective to L_MF", "==",
                       std::abs(terms.total.value().item() - terms.l_mf), 0.0));
  }

  {
    const ModelParams params = random_params(net, rng);
    const std::size_t n = 3;
    const Tensor s = randn({n, net.speaker_dim}, rng), c = randn({n, net.content_dim}, rng);
    const Tensor eps = randn({n, net.data_dim}, rng);
    const Tensor a = convert(net, params, randn({n, net.data_dim}, rng), s, c, 1.0, eps);
    const Tensor b = convert(net, params, randn({n, net.data_dim}, rng), s, c, 1.0, eps);
    out.push_back(make(S, "convert_t_prime_one_ignores_source", "t' = 1 output independent of the source patch", "==",
                       a.bitwise_equal(b) ? 1.0 : 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------- oracle

std::vector<PropertyResult> oracle_suite(const Options& opts) {
  const std::string S = "oracle";
  std::vector<PropertyResult> out;
  Rng rng(opts.seed, 4);
  using namespace oracle;

  {
    const double v = analytic_instantaneous_velocity(GaussianTask::point_mass(0.0), Tensor::scalar(1.0), 0.5).item();
    out.push_back(make(S, "point_mass_velocity", "v(z=1, t=0.5 | x0=0) = 2", "==", v, 2.0));
  }

  {
    double worst = 0.0;
    const std::vector<GaussianTask> tasks{GaussianTask::normal(0.0, 1.0), GaussianTask::normal(1.0, 0.5)};
    for (const auto& task : tasks)
      for (double z : {-0.8, 0.0, 0.7}) {
        const double t = 0.5, mu = task.mean[0], sigma = task.stddev;
        double wsum = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < 1000000; ++i) {
          const double x = mu + sigma * rng.normal();
          const double eps = (z - (1.0 - t) * x) / t;
          const double w = std::exp(-0.5 * eps * eps);
          wsum += w;
          acc += w * (eps - x);
        }
        const double analytic = analytic_instantaneous_velocity(task, Tensor::scalar(z), t).item();
        worst = std::max(worst, std::abs(acc / wsum - analytic));
      }
    out.push_back(make(S, "gaussian_velocity_monte_carlo", "E[eps - x | z_t] closed form vs 1e6-sample posterior", "<",
                       worst, 1e-2));
  }

  const GaussianTask gauss = GaussianTask::normal(1.0, 0.5);
  {
    const Tensor z = Tensor::row({-1.5, 0.3, 2.2});
    const double t = 0.6;
    const Tensor v = analytic_instantaneous_velocity(gauss, z, t);
    std::vector<double> errs;
    for (double delta : {1e-2, 1e-4, 1e-6}) errs.push_back(max_abs_diff(analytic_average_velocity(gauss, z, t - delta, t), v));
    const bool decreasing = errs[0] > errs[1] && errs[1] > errs[2];
    out.push_back(make(S, "average_to_instantaneous_chain", "u(z, t - delta, t) -> v(z, t), delta in {1e-2, 1e-4, 1e-6}",
                       "<", decreasing ? errs[2] : 1.0, 1e-5));
    out.push_back(make(S, "average_at_equal_times", "u(z, t, t) == v(z, t)", "<",
                       max_abs_diff(analytic_average_velocity(gauss, z, t, t), v), 1e-8));
  }

  {
    double worst = 0.0;
    for (std::size_t k = 0; k < 20; ++k) {
      const Tensor z = randn({1, 4}, rng);
      const double t = 0.1 + 0.9 * rng.uniform(), r = t * rng.uniform();
      worst = std::max(worst, max_abs_diff(analytic_average_velocity(gauss, z, r, t, AverageMethod::Quadrature),
                                           analytic_average_velocity(gauss, z, r, t, AverageMethod::ClosedForm)));
    }
    out.push_back(make(S, "quadrature_vs_closed_form", "adaptive Simpson mean of v == closed-form average velocity", "<",
                       worst, 1e-6));
  }

  {
    double worst = 0.0;
    for (std::size_t k = 0; k < 20; ++k) {
      const Tensor z = randn({1, 3}, rng);
      const double t = 0.2 + 0.7 * rng.uniform(), r = (t - 0.05) * rng.uniform(), h = 1e-4;
      const Tensor u = analytic_average_velocity(gauss, z, r, t);
      const Tensor v = analytic_instantaneous_velocity(gauss, z, t);
      const Tensor up = analytic_average_velocity(gauss, trajectory(gauss, z, t, t + h), r, t + h);
      const Tensor um = analytic_average_velocity(gauss, trajectory(gauss, z, t, t - h), r, t - h);
      const Tensor du = scale(sub(up, um), 1.0 / (2.0 * h));
      worst = std::max(worst, max_abs_diff(u, sub(v, scale(du, t - r))));
    }
    out.push_back(make(S, "mean_flow_identity", "u = v - (t - r) du/dt along the trajectory", "<", worst, 1e-6));
  }

  {
    const GaussianTask pm = GaussianTask::point_mass(0.7);
    const Tensor z1 = randn({1, 64}, rng);
    const Tensor one = sub(z1, analytic_average_velocity(pm, z1, 0.0, 1.0));
    out.push_back(make(S, "point_mass_one_step_exact", "z1 - u(z1, 0, 1) == x0", "<",
                       max_abs_diff(one, Tensor({1, 64}, 0.7)), 1e-12));
  }

  {
    const Tensor z1 = Tensor::row({-1.7, -0.4, 0.9, 1.8, 2.6});
    const Tensor exact = trajectory(gauss, z1, 1.0, 0.0);
    std::vector<double> ns, errs;
    for (std::size_t n = 1; n <= 1024; n *= 2) {
      const Tensor zn = euler_sample(z1, n, [&](const Tensor& z, double t) {
        return analytic_instantaneous_velocity(gauss, z, t);
      });
      ns.push_back(static_cast<double>(n));
      errs.push_back(std::sqrt(sum_sq(sub(zn, exact)) / static_cast<double>(z1.size())));
    }
    out.push_back(make(S, "euler_first_order", "log-error vs log-N slope of Euler on the Gaussian task", "in",
                       log_log_slope(ns, errs), -1.2, -0.8));
    const Tensor one = sub(z1, analytic_average_velocity(gauss, z1, 0.0, 1.0));
    out.push_back(make(S, "gaussian_one_step_exact", "z1 - u(z1, 0, 1) == trajectory endpoint", "<",
                       max_abs_diff(one, exact), 1e-12));
  }

  {
    const Tensor a = randn({1000, 2}, rng);
    const auto same = distribution_distance(a, a);
    const double worst = std::max({same.mean_gap[0], same.mean_gap[1], same.std_gap[0], same.std_gap[1], std::abs(same.energy)});
    out.push_back(make(S, "distance_identical", "identical samples give zero gaps", "<", worst, 1e-12));

    const Tensor x = randn({10000, 1}, rng);
    Tensor y = randn({10000, 1}, rng);
    for (auto& v : y.data()) v += 1.0;
    out.push_back(make(S, "distance_mean_shift", "N(0,1) vs N(1,1) mean gap", "in",
                       distribution_distance(x, y).mean_gap[0], 0.97, 1.03));

    const Tensor y0 = randn({10000, 1}, rng);
    const auto test = energy_permutation_test(x, y0, 200, rng);
    out.push_back(make(S, "energy_same_law", "energy distance of two same-law draws below permutation q99", "<",
                       test.statistic, test.quantile_99));
  }
  return out;
}

}  // namespace

std::vector<std::string> suite_names() { return {"autodiff", "flow", "mvf", "oracle"}; }

std::vector<PropertyResult> run_suite(const std::string& suite, const Options& opts) {
  ScopedPrecision f64(Precision::F64);
  if (suite == "autodiff") return autodiff_suite(opts);
  if (suite == "flow") return flow_suite(opts);
  if (suite == "mvf") return mvf_suite(opts);
  if (suite == "oracle") return oracle_suite(opts);
  if (suite == "all") {
    std::vector<PropertyResult> all;
    for (const auto& name : suite_names()) {
      auto part = run_suite(name, opts);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw std::invalid_argument("unknown suite '" + suite + "' (expected autodiff, flow, mvf, oracle or all)");
}

bool all_passed(const std::vector<PropertyResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.passed; });
}

std::string to_json(const std::vector<PropertyResult>& results) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j{{"suite", r.suite},          {"name", r.name},           {"anchor", r.anchor},
                     {"comparison", r.comparison}, {"measured", r.measured},   {"threshold", r.threshold},
                     {"passed", r.passed}};
    if (r.comparison == "in") j["threshold_hi"] = r.threshold_hi;
    if (!r.detail.empty()) j["detail"] = r.detail;
    props.push_back(std::move(j));
  }
  return nlohmann::json{{"passed", all_passed(results)}, {"properties", props}}.dump(2);
}

}  // namespace mvf::verify
