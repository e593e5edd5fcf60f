#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvf/cli.hpp"
#include "mvf/config.hpp"
#include "mvf/evaluate.hpp"
#include "mvf/flow.hpp"
#include "mvf/mvf_losses.hpp"
#include "mvf/oracle.hpp"
#include "mvf/ssim.hpp"
#include "mvf/trainer.hpp"
#include "test_util.hpp"

using namespace mvf;
using mvf::testing::randn;
using mvf::testing::random_params;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunConfig load_config(const std::string& name, std::uint64_t seed) {
  RunConfig cfg = preset("desk");
  apply_config_file(cfg, fs::path(MVF_CONFIG_DIR) / name);
  cfg.train.seed = seed;
  cfg.resolve();
  return cfg;
}

struct Trained {
  RunConfig cfg;
  Dataset data;
  ModelParams params;
};

Trained train_config(const std::string& name, std::uint64_t seed) {
  Trained t{load_config(name, seed), {}, {}};
  t.data = build_dataset(t.cfg.data);
  t.params = train(initial_checkpoint(t.cfg), t.data).state.params;
  return t;
}

std::vector<double> ones(std::size_t n, double v = 1.0) { return std::vector<double>(n, v); }

// One-step generations z - u(z, 0, 1) of a 1-D model with dummy conditions.
Tensor one_step_1d(const Trained& m, const Tensor& z) {
  const std::size_t n = z.rows();
  const Tensor u = u_theta_eval(m.cfg.net, m.params, z, ones(n, 0.0), ones(n), ones(n), Tensor::zeros({n, 1}),
                                Tensor::zeros({n, 1}));
  return sub(z, u);
}

double sample_mean(const Tensor& x) { return mean(x); }

double sample_std(const Tensor& x) {
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x.data()) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

NetConfig random_shape(Rng& rng) {
  NetConfig net;
  net.data_dim = 1 + rng.below(3);
  net.hidden_dim = 4 + rng.below(13);
  net.depth = 1 + rng.below(2);
  net.time_embed_dim = 2 + 2 * rng.below(3);
  net.speaker_dim = 1 + rng.below(3);
  net.content_dim = 1 + rng.below(2);
  net.activation = rng.below(2) == 0 ? Activation::SiLU : Activation::Tanh;
  net.max_frequency = 1.0 + 4.0 * rng.uniform();
  return net;
}

Tensor flat_grads(const ModelParams& p) {
  std::vector<double> all;
  for (const auto& q : p)
    for (double v : q.grad.data()) all.push_back(v);
  const std::size_t n = all.size();
  return Tensor({1, n}, std::move(all));
}

Outcome criterion1() {
  Stopwatch clock;
  Rng rng(101);
  double worst_jvp = 0.0, worst_grad = 0.0;
  const int cases = 120;
  for (int k = 0; k < cases; ++k) {
    const NetConfig net = random_shape(rng);
    const ModelParams params = random_params(net, 1000 + k, 0.2);
    const std::size_t n = 1 + rng.below(4);
    std::vector<double> r(n), t(n), tp(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = 0.1 + 0.9 * rng.uniform();
      r[i] = t[i] * rng.uniform();
      tp[i] = rng.uniform();
    }
    const Tensor s = randn({n, net.speaker_dim}, rng), c = randn({n, net.content_dim}, rng);
    const ad::VarFn f = [&](std::span<const ad::Var> in) {
      const BoundParams bound(params, false);
      return u_theta(net, bound, NetInputs{in[0], in[1], in[2], in[3], s, c});
    };
    const std::vector<Tensor> point{randn({n, net.data_dim}, rng), time_column(r), time_column(t), time_column(tp)};
    std::vector<Tensor> tangent{randn({n, net.data_dim}, rng), Tensor({n, 1}), Tensor({n, 1}), Tensor({n, 1})};
    for (std::size_t i = 0; i < n; ++i) {
      tangent[1][i] = 0.05 * rng.normal();
      tangent[2][i] = tangent[1][i] + 0.05 * std::abs(rng.normal());
      tangent[3][i] = 0.05 * rng.normal();
    }
    worst_jvp = std::max(worst_jvp, oracle::finite_difference_check(f, point, tangent, 1e-5).rel_error);

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
    for (const auto& q : p) {
      dir.push_back(randn(q.value.shape(), rng));
      for (std::size_t i = 0; i < q.grad.size(); ++i) analytic += q.grad[i] * dir.back()[i];
    }
    auto readout = [&](double h) {
      ModelParams shifted = params;
      for (std::size_t i = 0; i < shifted.size(); ++i)
        for (std::size_t j = 0; j < shifted[i].value.size(); ++j) shifted[i].value[j] += h * dir[i][j];
      const Tensor u = u_theta_eval(net, shifted, point[0], r, t, tp, s, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * w[i];
      return acc;
    };
    const double numeric = (readout(1e-5) - readout(-1e-5)) / 2e-5;
    worst_grad = std::max(worst_grad, std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-300));
  }
  const double secs = clock.seconds();
  return {worst_jvp < 1e-5 && worst_grad < 1e-5 && secs < 60.0,
          fmt("%d cases, worst jvp rel %.2e, worst grad rel %.2e, %.1fs", cases, worst_jvp, worst_grad, secs)};
}

Outcome criterion2() {
  Rng rng(202);
  int bitwise = 0, rows = 0;
  const int batches = 1000;
  for (int k = 0; k < batches; ++k) {
    const NetConfig net = random_shape(rng);
    const ModelParams params = random_params(net, 2000 + k);
    FlowBatch b = mvf::testing::random_batch(net, 1 + rng.below(8), rng, 0.5);
    for (std::size_t i = 0; i < b.size(); ++i) b.t_prime[i] = rng.uniform();
    const Tensor target = meanflow_target(net, params, b);
    bool all = true;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b.r[i] != b.t[i]) continue;
      ++rows;
      for (std::size_t d = 0; d < net.data_dim; ++d) all = all && target.at(i, d) == b.v.at(i, d);
    }
    bitwise += all;
  }
  return {bitwise == batches && rows > 0,
          fmt("%d/%d batches bitwise on %d collapsed rows", bitwise, batches, rows)};
}

Outcome criterion3() {
  Stopwatch clock;
  const double x0 = 0.7;
  const auto task = oracle::GaussianTask::point_mass(x0);
  Rng rng(303);
  double one_step = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Tensor z1 = Tensor::scalar(3.0 * rng.normal());
    const Tensor u = oracle::analytic_average_velocity(task, z1, 0.0, 1.0);
    one_step = std::max(one_step, std::abs(z1.item() - u.item() - x0));
  }
  const InstantField field = [&](const Tensor& z, double t) {
    return oracle::analytic_instantaneous_velocity(task, z, t);
  };
  const std::vector<double> z1s{-2.3, -0.4, 1.9, 3.1};
  double euler1_ratio = 1e300;
  for (double z : z1s) {
    const double err = std::abs(euler_sample(Tensor::scalar(z), 1, field).item() - x0);
    euler1_ratio = std::min(euler1_ratio, err / std::abs(z - x0));
  }
  std::vector<double> lx, ly;
  double worst = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= 1024; n *= 2) {
    double err = 0.0;
    for (double z : z1s) err += std::abs(euler_sample(Tensor::scalar(z), n, field).item() - x0);
    err /= static_cast<double>(z1s.size());
    worst = std::max(worst, err);
    if (err == 0.0) zero = true;
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(err));
  }
  double slope = std::nan("");
  if (!zero) {
    double mx = 0, my = 0, sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= lx.size(), my /= ly.size();
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    slope = sxy / sxx;
  }
  const double secs = clock.seconds();
  const bool a = one_step <= 1e-12;
  const bool b = euler1_ratio >= 0.1;
  const bool c = slope >= -1.2 && slope <= -0.8;
  return {a && b && c && secs < 60.0,
          fmt("one-step max err %.1e [%s]; 1-step Euler err/|z1-x0| min %.1e [%s]; Euler err max %.1e over "
              "N=1..1024, slope %.3f [%s]; %.2fs",
              one_step, a ? "ok" : "no", euler1_ratio, b ? "ok" : "no", worst, slope, c ? "ok" : "no", secs)};
}

Outcome criterion4() {
  Stopwatch clock;
  const Trained m = train_config("point_mass.ini", 0);
  const double x0 = m.cfg.data.gauss_mean;
  std::vector<double> grid;
  for (int i = 0; i <= 600; ++i) grid.push_back(-3.0 + 0.01 * i);
  const Tensor z = Tensor::column(grid);
  const Tensor x = one_step_1d(m, z);
  double field_err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) field_err = std::max(field_err, std::abs(x[i] - x0));
  Rng rng(404);
  const Tensor samples = one_step_1d(m, standard_normal({10000, 1}, rng));
  const double gap = std::abs(sample_mean(samples) - x0), sd = sample_std(samples);
  const double secs = clock.seconds();
  return {field_err < 0.1 && gap < 0.05 && sd < 0.1 && secs <= 300.0,
          fmt("max |u-(z-x0)| %.4f, |mean-x0| %.4f, std %.4f, %.0fs", field_err, gap, sd, secs)};
}

Outcome criterion5() {
  Stopwatch clock;
  const Trained m = train_config("gaussian.ini", 1);
  const double mu = m.cfg.data.gauss_mean, sigma = m.cfg.data.gauss_stddev;
  Rng noise(505);
  const Tensor samples = one_step_1d(m, standard_normal({10000, 1}, noise));
  Rng fresh_rng(4242);
  Tensor fresh = standard_normal({10000, 1}, fresh_rng);
  for (auto& v : fresh.data()) v = mu + sigma * v;
  Rng perm(7);
  const auto test = oracle::energy_permutation_test(samples, fresh, 500, perm);
  const double secs = clock.seconds();
  return {test.p_value > 0.01 && secs < 600.0,
          fmt("energy %.2e, permutation p %.3f, mean %.4f, std %.4f, %.0fs", test.statistic, test.p_value,
              sample_mean(samples), sample_std(samples), secs)};
}

NetConfig patch_net(std::size_t side) {
  NetConfig net;
  net.data_dim = side * side;
  net.hidden_dim = 16;
  net.depth = 1;
  net.time_embed_dim = 4;
  net.speaker_dim = 3;
  net.content_dim = 2;
  return net;
}

Outcome criterion6() {
  const std::size_t side = 16;
  const NetConfig net = patch_net(side);
  int zero = 0, checked = 0;
  double min_ssim = 1.0;
  for (int k = 0; k < 50; ++k) {
    const ModelParams params = random_params(net, 600 + k);
    Rng rng(600 + k);
    const std::size_t n = 1 + rng.below(6);
    const Tensor s = randn({n, 3}, rng), c = randn({n, 2}, rng);
    const ZeroRecConfig cfg;
    const std::vector<double> r(n, 0.0), t(n, 1.0);
    const Tensor xbar = scale(u_theta_eval(net, params, Tensor::zeros({n, net.data_dim}), r, t, t, s, c), -1.0);
    const double rms = std::sqrt(sum_sq(xbar) / static_cast<double>(xbar.size()));
    const Tensor x = add(xbar, randn(xbar.shape(), rng, 0.1 * rms * rng.uniform()));
    ModelParams p = params;
    p.zero_grads();
    const BoundParams bound(p, true);
    const auto terms = zero_input_reconstruction(net, bound, x, s, c, cfg, SsimConfig{}, {side, side});
    bool above = true;
    for (double v : terms.ssim) above = above && v > 1.0 - cfg.margin, min_ssim = std::min(min_ssim, v);
    if (!above) continue;
    ad::backward(terms.loss);
    bound.accumulate_grads(p);
    ++checked;
    zero += max_abs(flat_grads(p)) == 0.0;
  }
  return {checked >= 40 && zero == checked,
          fmt("%d/%d batches with SSIM > 0.7 (min %.3f) have exactly zero gradient", zero, checked, min_ssim)};
}

Outcome criterion7() {
  Rng rng(707);
  const SsimConfig cfg;
  double worst_ref = 0.0, worst_self = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = 11 + rng.below(22), w = 11 + rng.below(22);
    const Tensor a = randn({h, w}, rng, 0.1 + 2.0 * rng.uniform());
    const Tensor b = add(scale(a, 2.0 * rng.uniform() - 0.5), randn({h, w}, rng, 2.0 * rng.uniform()));
    worst_ref = std::max(worst_ref, std::abs(ssim_value(a, b, cfg) - oracle::ssim_reference(a, b, cfg)));
    worst_self = std::max(worst_self, std::abs(ssim_value(a, a, cfg) - 1.0));
  }
  return {worst_ref < 1e-8 && worst_self < 1e-6,
          fmt("max |ssim - reference| %.2e on 100 pairs, max |ssim(x,x) - 1| %.2e", worst_ref, worst_self)};
}

Outcome criterion8() {
  const NetConfig net = patch_net(8);
  const ModelParams params = random_params(net, 808);
  Rng rng(808);
  const std::size_t batch = 32;
  const Tensor s = randn({batch, 3}, rng), c = randn({batch, 2}, rng);

  const auto full = synthesize_diffused_source(net, params, s, c, ones(batch), rng);
  const bool identity = full.eps_hat.bitwise_equal(full.z1);

  int deranged = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> tp(batch);
    for (auto& v : tp) v = rng.uniform();
    const auto src = synthesize_diffused_source(net, params, s, c, tp, rng);
    bool ok = true;
    for (std::size_t i = 0; i < batch; ++i) {
      ok = ok && src.source_index[i] != i;
      for (std::size_t d = 0; d < 3; ++d) ok = ok && src.s_src.at(i, d) == s.at(src.source_index[i], d);
    }
    deranged += ok;
  }

  const Tensor x = randn({batch, net.data_dim}, rng);
  Rng batch_rng(809);
  const FlowBatch b = build_training_batch(net, params, x, s, c, BatchConfig{}, batch_rng);
  FlowBatch frozen = b;
  for (Tensor* t : {&frozen.x, &frozen.eps, &frozen.z, &frozen.v, &frozen.s, &frozen.c})
    *t = Tensor(t->shape(), std::vector<double>(t->data().begin(), t->data().end()));
  ObjectiveConfig obj;
  obj.patch = {8, 8};
  obj.ssim.window = 7;
  auto grads = [&](const FlowBatch& fb) {
    ModelParams p = params;
    p.zero_grads();
    const BoundParams bound(p, true);
    ad::backward(total_objective(net, bound, fb, obj).total);
    bound.accumulate_grads(p);
    return flat_grads(p);
  };
  const double diff = max_abs_diff(grads(b), grads(frozen));

  ModelParams moved = params;
  for (auto& v : moved[0].value.data()) v += 0.1;
  Rng a_rng(810), b_rng(810);
  std::vector<double> half(batch, 0.5);
  const bool depends = !synthesize_diffused_source(net, params, s, c, half, a_rng)
                             .eps_hat.bitwise_equal(synthesize_diffused_source(net, moved, s, c, half, b_rng).eps_hat);

  return {identity && deranged == 1000 && diff == 0.0 && depends,
          fmt("eps_hat(t'=1) == draw: %s; derangements %d/1000; grad diff vs constant eps_hat %.1e "
              "(synthesis depends on params: %s)",
              identity ? "yes" : "no", deranged, diff, depends ? "yes" : "no")};
}

struct SweepSummary {
  double peak = 0.0;
  double range = 0.0;
};

SweepSummary sweep_summary(const Trained& m) {
  const auto rows = sweep_tprime(m.cfg, m.params, m.data, parse_grid("0.5:1.0:0.05"), 128, 5);
  SweepSummary out;
  double lo = 1.0, hi = 0.0;
  for (const auto& r : rows) {
    out.peak = std::max(out.peak, r.speaker_accuracy);
    if (r.t_prime >= 0.7 - 1e-9) lo = std::min(lo, r.speaker_accuracy), hi = std::max(hi, r.speaker_accuracy);
  }
  out.range = hi - lo;
  return out;
}

Outcome criterion9() {
  Stopwatch clock;
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = sweep_summary(train_config("patches.ini", seed));
    const auto a = sweep_summary(train_config("patches_noise_only.ini", seed));
    const bool ok = d.peak > a.peak && d.range < a.range;
    all = all && ok;
    detail += fmt("seed %llu peak %.3f vs %.3f, range %.3f vs %.3f [%s]; ", static_cast<unsigned long long>(seed),
                  d.peak, a.peak, d.range, a.range, ok ? "ok" : "no");
  }
  const double secs = clock.seconds();
  return {all && secs < 1800.0, detail + fmt("%.0fs", secs)};
}

// Mean pairwise per-pixel RMS distance of one-step generations sharing a condition.
double diversity(const Trained& m) {
  const std::size_t conditions = 8, draws = 16;
  Rng rng(1010);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k < conditions; ++k) {
    Tensor s({draws, m.data.speaker_dim()}), c({draws, m.data.content_dim()});
    for (std::size_t j = 0; j < draws; ++j) {
      for (std::size_t d = 0; d < s.cols(); ++d) s.at(j, d) = m.data.s.at(k, d);
      for (std::size_t d = 0; d < c.cols(); ++d) c.at(j, d) = m.data.c.at(k, d);
    }
    const Tensor z = standard_normal({draws, m.data.data_dim()}, rng);
    const Tensor x = sub(z, u_theta_eval(m.cfg.net, m.params, z, ones(draws, 0.0), ones(draws), ones(draws), s, c));
    for (std::size_t a = 0; a < draws; ++a)
      for (std::size_t b = a + 1; b < draws; ++b) {
        double acc = 0.0;
        for (std::size_t q = 0; q < x.cols(); ++q) acc += (x.at(a, q) - x.at(b, q)) * (x.at(a, q) - x.at(b, q));
        total += std::sqrt(acc / static_cast<double>(x.cols()));
        ++pairs;
      }
  }
  return total / static_cast<double>(pairs);
}

Outcome criterion10() {
  Stopwatch clock;
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double ssim_zero = diversity(train_config("patches.ini", seed));
    const double l2_all = diversity(train_config("patches_l2_all.ini", seed));
    const bool ok = l2_all < ssim_zero;
    all = all && ok;
    detail += fmt("seed %llu diversity l2/all %.4f vs ssim/zero %.4f [%s]; ", static_cast<unsigned long long>(seed),
                  l2_all, ssim_zero, ok ? "ok" : "no");
  }
  return {all, detail + fmt("%.0fs", clock.seconds())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli_train(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != cli::kExitOk) std::cerr << err.str();
  return code;
}

Outcome criterion11() {
  const fs::path dir = fs::temp_directory_path() / "mvf_acceptance_c11";
  fs::remove_all(dir);
  const std::vector<std::string> common{"--set", "data.size=64", "--set", "data.patch_height=16", "--set",
                                        "data.patch_width=16", "--set", "train.batch_size=16", "--set",
                                        "train.epochs=4", "--set", "train.seed=11"};
  auto train_args = [&](const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"train", "--output", out.string()};
    a.insert(a.end(), common.begin(), common.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  bool ran = cli_train(train_args(dir / "a")) == cli::kExitOk && cli_train(train_args(dir / "b")) == cli::kExitOk &&
             cli_train(train_args(dir / "part", {"--stop-after", "7"})) == cli::kExitOk &&
             cli_train({"train", "--resume", (dir / "part" / "checkpoint.mvft").string(), "--output",
                        (dir / "part").string()}) == cli::kExitOk;
  if (!ran) return {false, "a train invocation failed"};
  const std::string a = slurp(dir / "a" / "metrics.csv");
  const bool same = !a.empty() && a == slurp(dir / "b" / "metrics.csv");
  const bool resumed = a == slurp(dir / "part" / "metrics.csv");
  const bool params = load_checkpoint(dir / "a" / "checkpoint.mvft")
                          .params.bitwise_equal(load_checkpoint(dir / "part" / "checkpoint.mvft").params);
  fs::remove_all(dir);
  return {same && resumed && params,
          fmt("repeat csv identical: %s; resumed csv identical: %s; resumed params bitwise: %s", same ? "yes" : "no",
              resumed ? "yes" : "no", params ? "yes" : "no")};
}

const std::vector<std::function<Outcome()>> kCriteria{criterion1, criterion2, criterion3, criterion4,
                                                     criterion5, criterion6, criterion7, criterion8,
                                                     criterion9, criterion10, criterion11};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  const std::string arg = argc > 1 ? argv[1] : "all";
  if (arg == "all") {
    for (int i = 1; i <= static_cast<int>(kCriteria.size()); ++i) which.push_back(i);
  } else {
    const int n = std::atoi(arg.c_str());
    if (n < 1 || n > static_cast<int>(kCriteria.size())) {
      std::cerr << "usage: acceptance [all|1.." << kCriteria.size() << "]\n";
      return 2;
    }
    which.push_back(n);
  }
  int failed = 0;
  for (int n : which) {
    Outcome o;
    try {
      o = kCriteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
