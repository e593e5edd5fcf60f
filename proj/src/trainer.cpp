#include "mvf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mvf/flow.hpp"
#include "mvf/mvf_losses.hpp"

namespace mvf {

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.value.shape()));
    s.v.push_back(Tensor::zeros(p.value.shape()));
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state, double lr, const AdamHyper& h) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state has " + std::to_string(state.m.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.shape() != p.value.shape()) throw ShapeError("adam_step grad " + p.name, p.grad.shape(), p.value.shape());
    if (state.m[i].shape() != p.value.shape()) throw ShapeError("adam_step moment " + p.name, state.m[i].shape(), p.value.shape());
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p.value[k] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
    m.finalize("adam.m");
    v.finalize("adam.v");
    p.value.finalize("adam.param");
  }
}

double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup, std::uint64_t total) {
  if (step >= total) return 0.0;
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += sum_sq(p.grad);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.grad.data()) g *= k;
      p.grad.finalize("clip_grad_norm");
    }
  }
  return norm;
}

namespace {

std::string g17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string metrics_header() { return "step,lr,l_mf,l_zerorec,l_total,wall_ms"; }

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + g17(r.lr) + "," + g17(r.l_mf) + "," + g17(r.l_zerorec) + "," + g17(r.l_total) +
         "," + g17(r.wall_ms);
}

TensorFile Checkpoint::to_file() const {
  TensorFile f;
  f.set_meta("format", kFormat);
  f.set_meta("config", to_config_text(config));
  f.set_meta("digest", digest);
  f.set_meta("step", std::to_string(step));
  f.set_meta("adam_step", std::to_string(adam.step));
  f.set_meta("rng", rng_state);
  for (std::size_t i = 0; i < params.size(); ++i) {
    f.add("param/" + params[i].name, params[i].value);
    f.add("adam_m/" + params[i].name, adam.m[i]);
    f.add("adam_v/" + params[i].name, adam.v[i]);
  }
  if (!order.empty()) {
    const std::size_t n = order.size();
    f.add("order", Tensor({1, n}, std::vector<double>(order.begin(), order.end())));
  }
  return f;
}

Checkpoint Checkpoint::from_file(const TensorFile& f) {
  if (!f.has_meta("format") || f.meta_value("format") != kFormat) throw FormatError("not a checkpoint file");
  Checkpoint c;
  apply_config_text(c.config, f.meta_value("config"), "<checkpoint config>");
  c.config.resolve();
  c.digest = f.meta_value("digest");
  if (c.digest != config_digest(c.config)) throw FormatError("checkpoint digest does not match its stored config");
  c.step = std::stoull(f.meta_value("step"));
  c.rng_state = f.meta_value("rng");

  const ModelParams layout = init_params(c.config.net, 0);
  c.adam.step = std::stoull(f.meta_value("adam_step"));
  for (const auto& p : layout) {
    const Tensor& v = f.tensor("param/" + p.name);
    if (v.shape() != p.value.shape()) throw FormatError("parameter '" + p.name + "' has shape " + shape_str(v.shape()) +
                                                        ", expected " + shape_str(p.value.shape()));
    c.params.add(p.name, v);
    c.adam.m.push_back(f.tensor("adam_m/" + p.name));
    c.adam.v.push_back(f.tensor("adam_v/" + p.name));
  }
  if (f.has_tensor("order"))
    for (double v : f.tensor("order").data()) c.order.push_back(static_cast<std::size_t>(v));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_tensor_file(path, ckpt.to_file(), Precision::F64);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return Checkpoint::from_file(read_tensor_file(path)); }

namespace {

constexpr std::uint64_t kTrainStream = 0x7a11;
constexpr std::uint64_t kEvalStream = 0xe7a1;

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), t.cols()});
  const auto cols = t.cols();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(t.row_span(rows[i]).begin(), cols, out.row_span(i).begin());
  return out;
}

void check_dataset(const RunConfig& cfg, const Dataset& data) {
  if (data.data_dim() != cfg.net.data_dim || data.speaker_dim() != cfg.net.speaker_dim ||
      data.content_dim() != cfg.net.content_dim)
    throw std::invalid_argument("dataset dims (" + std::to_string(data.data_dim()) + ", " +
                                std::to_string(data.speaker_dim()) + ", " + std::to_string(data.content_dim()) +
                                ") do not match the network config");
  if (data.size() < cfg.train.batch_size) throw std::invalid_argument("dataset smaller than one batch");
}

std::filesystem::path dump_batch(const std::filesystem::path& dir, std::uint64_t step, const FlowBatch& b) {
  if (dir.empty()) return {};
  TensorFile f;
  f.set_meta("format", "mvf-nan-dump");
  f.set_meta("step", std::to_string(step));
  f.add("x", b.x);
  f.add("eps", b.eps);
  f.add("z", b.z);
  f.add("v", b.v);
  f.add("s", b.s);
  f.add("c", b.c);
  f.add("t", time_column(b.t));
  f.add("r", time_column(b.r));
  f.add("t_prime", time_column(b.t_prime));
  const auto path = dir / ("nan_batch_step" + std::to_string(step) + ".mvft");
  write_tensor_file(path, f, Precision::F64);
  return path;
}

}  // namespace

Checkpoint initial_checkpoint(const RunConfig& cfg) {
  Checkpoint c;
  c.config = cfg;
  c.config.resolve();
  c.params = init_params(c.config.net, c.config.train.seed);
  c.adam = AdamState::zeros_like(c.params);
  c.rng_state = Rng(c.config.train.seed, kTrainStream).state();
  c.digest = config_digest(c.config);
  return c;
}

void check_resume_compatible(const Checkpoint& ckpt, const RunConfig& cfg) {
  const auto want = config_digest(cfg);
  if (want != ckpt.digest)
    throw std::runtime_error("refusing to resume: config digest " + want + " differs from checkpoint digest " +
                             ckpt.digest);
}

EvalSnapshot evaluate_snapshot(const RunConfig& cfg, const Dataset& data, const ModelParams& params, std::uint64_t step) {
  EvalSnapshot snap;
  snap.step = step;
  Rng rng(cfg.train.seed, kEvalStream);
  const std::size_t n = cfg.data.task == TaskKind::Patches ? 64 : 4096;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i % data.size();
  const Tensor s = gather_rows(data.s, rows);
  const Tensor c = gather_rows(data.c, rows);
  const Tensor z1 = standard_normal({n, cfg.net.data_dim}, rng);
  const std::vector<double> grid{1.0, 0.0};
  const Tensor x = meanflow_sample(z1, grid, network_field(cfg.net, params, s, c, 1.0));

  if (cfg.data.task == TaskKind::Patches) {
    const Readback readback(data.speakers, cfg.data.patch);
    double hits = 0.0, content_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto rb = readback(x.row_span(i));
      hits += rb.speaker == data.speaker[rows[i]] ? 1.0 : 0.0;
      content_err += std::abs(rb.content - data.content[rows[i]]);
    }
    snap.values = {{"speaker_accuracy", hits / n}, {"content_error", content_err / n}};
    return snap;
  }
  for (std::size_t d = 0; d < x.cols(); ++d) {
    double m = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += x.at(i, d);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += (x.at(i, d) - m) * (x.at(i, d) - m);
    snap.values.emplace_back("sample_mean_" + std::to_string(d), m);
    snap.values.emplace_back("sample_std_" + std::to_string(d), std::sqrt(sq / static_cast<double>(n - 1)));
  }
  return snap;
}

TrainResult train(const Checkpoint& start, const Dataset& data, const TrainHooks& hooks) {
  const RunConfig& cfg = start.config;
  cfg.validate();
  check_dataset(cfg, data);
  ScopedPrecision precision_guard(cfg.train.precision);

  TrainResult out;
  out.state = start;
  Checkpoint& st = out.state;
  Rng rng(0);
  rng.restore(st.rng_state);

  const std::size_t n = data.size();
  const std::size_t bs = cfg.train.batch_size;
  const std::size_t spe = cfg.steps_per_epoch();
  const std::uint64_t total = cfg.total_steps();
  const AdamHyper hyper{cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps};
  const BatchConfig batch_cfg{cfg.train.times, cfg.diffused};
  const ObjectiveConfig obj_cfg{cfg.zerorec, cfg.ssim, cfg.patch_shape()};

  while (st.step < total) {
    const std::uint64_t k = st.step + 1;
    const auto clock_start = std::chrono::steady_clock::now();
    const std::size_t pos = static_cast<std::size_t>((k - 1) % spe);
    if (pos == 0 || st.order.size() != n) st.order = rng.permutation(n);
    const std::span<const std::size_t> rows(st.order.data() + pos * bs, bs);

    const FlowBatch batch = build_training_batch(cfg.net, st.params, gather_rows(data.x, rows),
                                                 gather_rows(data.s, rows), gather_rows(data.c, rows), batch_cfg, rng);
    st.params.zero_grads();
    ObjectiveTerms terms;
    try {
      const BoundParams bound(st.params, true);
      terms = total_objective(cfg.net, bound, batch, obj_cfg);
      if (!std::isfinite(terms.total.value().item()))
        throw NumericalError("non-finite loss (l_mf=" + g17(terms.l_mf) + ", l_zerorec=" + g17(terms.l_zerorec) + ")");
      ad::backward(terms.total);
      bound.accumulate_grads(st.params);
      for (const auto& p : st.params)
        if (!p.grad.all_finite()) throw NumericalError("non-finite gradient in '" + p.name + "'");
    } catch (const NumericalError& e) {
      const auto path = dump_batch(hooks.dump_dir, k, batch);
      throw TrainingAbort("step " + std::to_string(k) + ": " + e.what() +
                              (path.empty() ? std::string() : "; batch dumped to " + path.string()),
                          path);
    }
    if (cfg.train.grad_clip > 0.0) clip_grad_norm(st.params, cfg.train.grad_clip);
    const double lr = lr_schedule(k, cfg.train.lr, cfg.train.warmup_steps, total);
    adam_step(st.params, st.adam, lr, hyper);
    st.step = k;
    st.rng_state = rng.state();

    MetricsRow row{k, lr, terms.l_mf, terms.l_zerorec, terms.total.value().item(), 0.0};
    if (cfg.train.log_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - clock_start).count();
    out.metrics.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (hooks.on_eval && cfg.train.eval_every > 0 && k % cfg.train.eval_every == 0)
      hooks.on_eval(evaluate_snapshot(cfg, data, st.params, k));
    if (hooks.on_checkpoint && cfg.train.checkpoint_every > 0 && k % cfg.train.checkpoint_every == 0)
      hooks.on_checkpoint(st);
    if (hooks.stop_after > 0 && k >= hooks.stop_after) break;
  }
  out.completed = st.step >= total;
  return out;
}

TrainResult train(const RunConfig& cfg, const Dataset& data, const ModelParams& params, const TrainHooks& hooks) {
  Checkpoint start = initial_checkpoint(cfg);
  if (params.size() > 0) {
    if (params.size() != start.params.size()) throw std::invalid_argument("train: parameter layout mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name != start.params[i].name || params[i].value.shape() != start.params[i].value.shape())
        throw std::invalid_argument("train: parameter '" + params[i].name + "' does not match the network config");
    start.params = params;
  }
  return train(start, data, hooks);
}

}  // namespace mvf
