#include "mvf/velocity_net.hpp"

#include <cmath>
#include <stdexcept>

#include "mvf/rng.hpp"

namespace mvf {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
  }
  return "silu";
}

Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::ReLU;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void NetConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("net.") + name + " must be positive");
  };
  positive(data_dim, "data_dim");
  positive(hidden_dim, "hidden_dim");
  positive(depth, "depth");
  positive(time_embed_dim, "time_embed_dim");
  positive(speaker_dim, "speaker_dim");
  positive(content_dim, "content_dim");
  if (time_embed_dim % 2 != 0) throw std::invalid_argument("net.time_embed_dim must be even");
  if (!(max_frequency > 0.0)) throw std::invalid_argument("net.max_frequency must be positive");
}

void ModelParams::add(std::string name, Tensor value) {
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  params_.push_back({std::move(name), std::move(value), {}});
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ModelParams::index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

const Tensor& ModelParams::value(const std::string& name) const { return params_[index(name)].value; }
Tensor& ModelParams::value(const std::string& name) { return params_[index(name)].value; }

void ModelParams::zero_grads() {
  for (auto& p : params_) p.grad = Tensor::zeros(p.value.shape());
}

bool ModelParams::bitwise_equal(const ModelParams& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name != other.params_[i].name || !params_[i].value.bitwise_equal(other.params_[i].value))
      return false;
  return true;
}

BoundParams::BoundParams(const ModelParams& params, bool trainable) {
  vars_.reserve(params.size());
  for (const auto& p : params)
    vars_.push_back(trainable ? ad::Var::parameter(p.value) : ad::Var::constant(p.value));
}

void BoundParams::accumulate_grads(ModelParams& params) const {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    auto& slot = params[i].grad;
    if (slot.empty()) slot = Tensor::zeros(params[i].value.shape());
    const Tensor& g = vars_[i].grad();
    if (g.empty()) continue;
    for (std::size_t k = 0; k < g.size(); ++k) slot[k] += g[k];
    slot.finalize("grad");
  }
}

std::vector<double> time_frequencies(std::size_t dim, double max_frequency) {
  const std::size_t half = dim / 2;
  std::vector<double> f(half);
  for (std::size_t k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(half - 1);
    f[k] = std::exp(frac * std::log(max_frequency));
  }
  return f;
}

ad::Var time_embedding(const ad::Var& times, std::size_t dim, double max_frequency) {
  const auto freqs = time_frequencies(dim, max_frequency);
  Tensor row({1, freqs.size()}, freqs);
  // [B,1] x [1,K] outer product keeps the time derivative in the graph.
  ad::Var phase = ad::matmul(times, ad::Var::constant(row));
  const ad::Var parts[] = {ad::sin(phase), ad::cos(phase)};
  return ad::concat_cols(parts);
}

namespace {

Tensor gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = round_to_precision(stddev * rng.normal());
  return t;
}

ad::Var activate(Activation a, const ad::Var& x) {
  switch (a) {
    case Activation::SiLU: return ad::silu(x);
    case Activation::Tanh: return ad::tanh(x);
    case Activation::ReLU: return ad::relu(x);
  }
  return ad::silu(x);
}

void require_column(const char* name, const ad::Var& v, std::size_t rows) {
  if (v.shape() != Shape{rows, 1})
    throw ShapeError(std::string("u_theta: ") + name + " must be [" + std::to_string(rows) + ", 1], got " +
                     shape_str(v.shape()));
}

}  // namespace

ModelParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, 0x1417);
  ModelParams p;
  const auto h = config.hidden_dim;
  const auto in = config.input_dim();
  p.add("in.w", gaussian_matrix(rng, in, h, 1.0 / std::sqrt(static_cast<double>(in))));
  p.add("in.b", Tensor::zeros({1, h}));
  for (std::size_t k = 0; k < config.depth; ++k) {
    const auto prefix = "block" + std::to_string(k) + ".";
    p.add(prefix + "w1", gaussian_matrix(rng, h, h, 1.0 / std::sqrt(static_cast<double>(h))));
    p.add(prefix + "b1", Tensor::zeros({1, h}));
    p.add(prefix + "w2", gaussian_matrix(rng, h, h, 0.5 / std::sqrt(static_cast<double>(h))));
    p.add(prefix + "b2", Tensor::zeros({1, h}));
  }
  // Zero output layer: the initial field is identically zero.
  p.add("out.w", Tensor::zeros({h, config.data_dim}));
  p.add("out.b", Tensor::zeros({1, config.data_dim}));
  p.add("gate.w", Tensor::zeros({h, 1}));
  p.add("gate.b", Tensor::zeros({1, 1}));
  return p;
}

ad::Var u_theta(const NetConfig& config, const BoundParams& params, const NetInputs& in) {
  const auto batch = in.z.value().rows();
  if (in.z.shape() != Shape{batch, config.data_dim})
    throw ShapeError("u_theta: z must be [" + std::to_string(batch) + ", " + std::to_string(config.data_dim) +
                     "], got " + shape_str(in.z.shape()));
  require_column("r", in.r, batch);
  require_column("t", in.t, batch);
  require_column("t_prime", in.t_prime, batch);
  if (in.s.shape() != Shape{batch, config.speaker_dim}) throw ShapeError("u_theta: speaker embedding", in.s.shape(), {batch, config.speaker_dim});
  if (in.c.shape() != Shape{batch, config.content_dim}) throw ShapeError("u_theta: content embedding", in.c.shape(), {batch, config.content_dim});
  for (std::size_t i = 0; i < batch; ++i)
    if (in.r.value()[i] > in.t.value()[i])
      throw std::invalid_argument("u_theta: r > t in row " + std::to_string(i) + " (r=" +
                                  std::to_string(in.r.value()[i]) + ", t=" + std::to_string(in.t.value()[i]) + ")");
  const std::size_t expected = 6 + 4 * config.depth;
  if (params.size() != expected)
    throw std::invalid_argument("u_theta: expected " + std::to_string(expected) + " parameter tensors, got " +
                                std::to_string(params.size()));

  const ad::Var features[] = {
      in.z,
      time_embedding(in.t, config.time_embed_dim, config.max_frequency),
      time_embedding(in.r, config.time_embed_dim, config.max_frequency),
      time_embedding(in.t_prime, config.time_embed_dim, config.max_frequency),
      ad::Var::constant(in.s),
      ad::Var::constant(in.c),
  };
  ad::Var h = activate(config.activation, ad::affine(ad::concat_cols(features), params[0], params[1]));
  for (std::size_t k = 0; k < config.depth; ++k) {
    const std::size_t base = 2 + 4 * k;
    ad::Var inner = activate(config.activation, ad::affine(h, params[base], params[base + 1]));
    h = ad::add(h, ad::affine(inner, params[base + 2], params[base + 3]));
  }
  const std::size_t out = 2 + 4 * config.depth;
  const ad::Var a = activate(config.activation, h);
  // Per-row scalar gate on a z skip path; the MLP alone cannot pass z through its width.
  const ad::Var gate = ad::affine(a, params[out + 2], params[out + 3]);
  return ad::add(ad::affine(a, params[out], params[out + 1]), ad::mul_col(in.z, gate));
}

Tensor time_column(std::span<const double> times) { return Tensor::column(times); }

Tensor time_column(std::size_t rows, double value) { return Tensor({rows, 1}, value); }

Tensor u_theta_eval(const NetConfig& config, const ModelParams& params, const Tensor& z, std::span<const double> r,
                    std::span<const double> t, std::span<const double> t_prime, const Tensor& s, const Tensor& c) {
  BoundParams bound(params, false);
  NetInputs in{ad::Var::constant(z),
               ad::Var::constant(time_column(r)),
               ad::Var::constant(time_column(t)),
               ad::Var::constant(time_column(t_prime)),
               s,
               c};
  return u_theta(config, bound, in).value();
}

}  // namespace mvf
