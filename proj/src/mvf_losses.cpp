#include "mvf/mvf_losses.hpp"

#include <stdexcept>

namespace mvf {

std::string recon_loss_name(ReconLoss l) {
  switch (l) {
    case ReconLoss::None: return "none";
    case ReconLoss::SsimMargin: return "ssim_margin";
    case ReconLoss::L1: return "l1";
    case ReconLoss::L2: return "l2";
  }
  return "none";
}

ReconLoss parse_recon_loss(const std::string& name) {
  if (name == "none") return ReconLoss::None;
  if (name == "ssim_margin") return ReconLoss::SsimMargin;
  if (name == "l1") return ReconLoss::L1;
  if (name == "l2") return ReconLoss::L2;
  throw std::invalid_argument("unknown reconstruction loss '" + name + "'");
}

std::string recon_input_name(ReconInput i) { return i == ReconInput::All ? "all" : "zero"; }

ReconInput parse_recon_input(const std::string& name) {
  if (name == "zero") return ReconInput::Zero;
  if (name == "all") return ReconInput::All;
  throw std::invalid_argument("unknown reconstruction input '" + name + "' (expected zero or all)");
}

std::string convert_interval_name(ConvertInterval i) {
  return i == ConvertInterval::FromOne ? "from_one" : "from_t_prime";
}

ConvertInterval parse_convert_interval(const std::string& name) {
  if (name == "from_t_prime") return ConvertInterval::FromTPrime;
  if (name == "from_one") return ConvertInterval::FromOne;
  throw std::invalid_argument("unknown conversion interval '" + name + "' (expected from_t_prime or from_one)");
}

void ZeroRecConfig::validate() const {
  if (!(margin >= 0.0 && margin < 1.0)) throw std::invalid_argument("zerorec.margin must lie in [0, 1)");
  if (!(weight >= 0.0)) throw std::invalid_argument("zerorec.weight must be >= 0");
}

void DiffusedInputConfig::validate() const {
  if (!(inference_t_prime > 0.0 && inference_t_prime <= 1.0))
    throw std::invalid_argument("diffused.inference_t_prime must lie in (0, 1]");
}

ZeroRecTerms zero_input_reconstruction(const NetConfig& net, const BoundParams& params, const Tensor& x,
                                       const Tensor& s, const Tensor& c, const ZeroRecConfig& cfg,
                                       const SsimConfig& ssim_cfg, PatchShape patch, const Tensor* inputs,
                                       std::span<const double> input_t_prime) {
  cfg.validate();
  const auto n = x.rows();
  ZeroRecTerms out;
  if (cfg.loss == ReconLoss::None) {
    out.loss = ad::Var::constant(Tensor::scalar(0.0));
    out.per_item.assign(n, 0.0);
    return out;
  }

  Tensor z1 = Tensor::zeros(x.shape());
  std::vector<double> t_prime(n, 1.0);
  if (cfg.input == ReconInput::All) {
    if (!inputs) throw std::invalid_argument("zero_input_reconstruction: ReconInput::All needs the batch inputs");
    require_same_shape("zero_input_reconstruction", x, *inputs);
    z1 = *inputs;
    if (!input_t_prime.empty()) t_prime.assign(input_t_prime.begin(), input_t_prime.end());
  }
  NetInputs in{ad::Var::constant(z1), ad::Var::constant(time_column(n, 0.0)), ad::Var::constant(time_column(n, 1.0)),
               ad::Var::constant(time_column(t_prime)), s, c};
  const ad::Var x_bar = ad::sub(ad::Var::constant(z1), u_theta(net, params, in));
  out.reconstruction = x_bar.value();

  ad::Var per_item;
  if (cfg.loss == ReconLoss::SsimMargin) {
    if (patch.height * patch.width != x.cols())
      throw ShapeError("zero_input_reconstruction: patch " + std::to_string(patch.height) + "x" +
                       std::to_string(patch.width) + " does not match data dim " + std::to_string(x.cols()));
    const Shape hw{patch.height, patch.width};
    std::vector<ad::Var> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ad::Var a = ad::reshape(ad::slice_rows(x_bar, i, i + 1), hw);
      const ad::Var b = ad::Var::constant(x.row_copy(i).reshaped(hw));
      const ad::Var sim = ssim(a, b, ssim_cfg);
      out.ssim.push_back(sim.value().item());
      items.push_back(ad::maximum_scalar(ad::add_scalar(ad::neg(sim), 1.0), cfg.margin));
    }
    per_item = ad::concat_rows(items);
  } else {
    const ad::Var diff = ad::sub(x_bar, ad::Var::constant(x));
    per_item = cfg.loss == ReconLoss::L2 ? ad::mean_rows(ad::mul(diff, diff)) : ad::mean_rows(ad::abs(diff));
  }
  out.per_item.assign(per_item.value().data().begin(), per_item.value().data().end());
  out.loss = ad::reduce_mean(per_item);
  return out;
}

DiffusedSource synthesize_diffused_source(const NetConfig& net, const ModelParams& params, const Tensor& s_tgt,
                                          const Tensor& c_tgt, std::span<const double> t_prime, Rng& rng) {
  const auto n = s_tgt.rows();
  if (n < 2) throw std::invalid_argument("synthesize_diffused_source: batch size must be >= 2 to shuffle speakers");
  if (t_prime.size() != n || c_tgt.rows() != n)
    throw std::invalid_argument("synthesize_diffused_source: inconsistent batch sizes");
  for (double tp : t_prime)
    if (!(tp > 0.0 && tp <= 1.0)) throw std::invalid_argument("synthesize_diffused_source: t' outside (0, 1]");

  DiffusedSource out;
  out.t_prime.assign(t_prime.begin(), t_prime.end());
  out.z1 = standard_normal({n, net.data_dim}, rng);
  out.source_index = rng.derangement(n);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (auto k : out.source_index) rows.push_back(s_tgt.row_copy(k));
  out.s_src = stack_rows(rows);

  // Constant-parameter pass: nothing here is recorded for backward.
  const std::vector<double> ones(n, 1.0);
  const Tensor u = u_theta_eval(net, params, out.z1, t_prime, ones, ones, out.s_src, c_tgt);
  out.eps_hat = out.z1;
  const auto cols = out.eps_hat.cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (t_prime[i] == 1.0) continue;
    const double w = 1.0 - t_prime[i];
    for (std::size_t k = i * cols; k < (i + 1) * cols; ++k) out.eps_hat[k] = out.z1[k] - w * u[k];
  }
  out.eps_hat.finalize("synthesize_diffused_source");
  return out;
}

FlowBatch build_training_batch(const NetConfig& net, const ModelParams& params, const Tensor& x, const Tensor& s,
                               const Tensor& c, const BatchConfig& cfg, Rng& rng) {
  const auto n = x.rows();
  if (s.rows() != n || c.rows() != n) throw std::invalid_argument("build_training_batch: inconsistent row counts");
  const bool diffused = cfg.diffused.enabled;
  if (diffused && n % 2 != 0)
    throw std::invalid_argument("build_training_batch: diffused-input training needs an even batch size, got " +
                                std::to_string(n));
  const std::size_t n_diffused = diffused ? n / 2 : 0;
  const std::size_t n_pure = n - n_diffused;

  FlowBatch b;
  b.x = x;
  b.s = s;
  b.c = c;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tp = sample_times(cfg.times, rng);
    b.t.push_back(tp.t);
    b.r.push_back(tp.r);
  }
  b.eps = Tensor(x.shape());
  const Tensor pure = standard_normal({n_pure, x.cols()}, rng);
  std::copy(pure.data().begin(), pure.data().end(), b.eps.data().begin());
  b.t_prime.assign(n_pure, 1.0);
  b.kind.assign(n_pure, InputKind::PureNoise);

  if (n_diffused > 0) {
    std::vector<double> tps(n_diffused);
    for (auto& v : tps) v = sample_logit_normal(cfg.diffused.t_prime_sampler, rng);
    const auto src = synthesize_diffused_source(net, params, s.rows_slice(n_pure, n), c.rows_slice(n_pure, n), tps, rng);
    std::copy(src.eps_hat.data().begin(), src.eps_hat.data().end(),
              b.eps.data().begin() + static_cast<std::ptrdiff_t>(n_pure * x.cols()));
    b.t_prime.insert(b.t_prime.end(), tps.begin(), tps.end());
    b.kind.insert(b.kind.end(), n_diffused, InputKind::DiffusedSource);
  }
  auto path = make_path_points(b.x, b.eps, b.t);
  b.z = std::move(path.z_t);
  b.v = std::move(path.v_t);
  b.validate();
  return b;
}

ObjectiveTerms total_objective(const NetConfig& net, const BoundParams& params, const FlowBatch& batch,
                               const ObjectiveConfig& cfg) {
  const auto mf = meanflow_loss(net, params, batch);
  ObjectiveTerms out;
  out.l_mf = mf.loss.value().item();
  out.total = mf.loss;
  if (cfg.zerorec.loss == ReconLoss::None) return out;

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (!cfg.zerorec.pure_noise_only || batch.kind[i] == InputKind::PureNoise) rows.push_back(i);
  if (rows.empty()) return out;
  auto gather = [&rows](const Tensor& t) {
    std::vector<Tensor> rs;
    for (auto i : rows) rs.push_back(t.row_copy(i));
    return stack_rows(rs);
  };
  std::vector<double> tps;
  for (auto i : rows) tps.push_back(batch.t_prime[i]);
  const Tensor inputs = gather(batch.eps);
  const auto zr = zero_input_reconstruction(net, params, gather(batch.x), gather(batch.s), gather(batch.c),
                                            cfg.zerorec, cfg.ssim, cfg.patch, &inputs, tps);
  out.l_zerorec = zr.loss.value().item();
  if (cfg.zerorec.weight != 0.0) out.total = ad::add(mf.loss, ad::scale(zr.loss, cfg.zerorec.weight));
  return out;
}

Tensor diffuse_source(const Tensor& x_src, const Tensor& eps, double t_prime) {
  const std::vector<double> t(x_src.rows(), t_prime);
  return make_path_points(x_src, eps, t).z_t;
}

Tensor convert(const NetConfig& net, const ModelParams& params, const Tensor& x_src, const Tensor& s_tgt,
               const Tensor& c_src, double t_prime, const Tensor& eps, const ConvertOptions& opts) {
  if (!(t_prime > 0.0 && t_prime <= 1.0)) throw std::invalid_argument("convert: t' must lie in (0, 1]");
  const Tensor source = diffuse_source(x_src, eps, t_prime);
  const double start = opts.interval == ConvertInterval::FromTPrime ? t_prime : 1.0;
  const auto grid = uniform_grid(opts.steps, start);
  return meanflow_sample(source, grid, network_field(net, params, s_tgt, c_src, opts.condition_t_prime.value_or(t_prime)));
}

}  // namespace mvf
