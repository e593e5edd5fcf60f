#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvf/autodiff.hpp"
#include "mvf/tensor.hpp"

namespace mvf {

enum class Activation { SiLU, Tanh, ReLU };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct NetConfig {
  std::size_t data_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t depth = 2;  // residual blocks
  std::size_t time_embed_dim = 16;
  std::size_t speaker_dim = 1;
  std::size_t content_dim = 1;
  Activation activation = Activation::SiLU;
  // Highest angular frequency of the sinusoidal time features.
  double max_frequency = 30.0;

  void validate() const;
  std::size_t input_dim() const { return data_dim + 3 * time_embed_dim + speaker_dim + content_dim; }
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named parameter tensors of the velocity network with gradient slots.
class ModelParams {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  std::size_t count() const;  // total scalar count
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  std::size_t index(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads();
  bool bitwise_equal(const ModelParams& other) const;

 private:
  std::vector<Param> params_;
};

/// Parameters lifted into a graph for one forward pass.
class BoundParams {
 public:
  // trainable=false binds constants; no reverse rules are recorded.
  BoundParams(const ModelParams& params, bool trainable);

  const ad::Var& operator[](std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

  // Adds this graph's gradients into params' grad slots.
  void accumulate_grads(ModelParams& params) const;

 private:
  std::vector<ad::Var> vars_;
};

// Sinusoidal features of a [B,1] time column, shape [B, dim].
ad::Var time_embedding(const ad::Var& times, std::size_t dim, double max_frequency);
std::vector<double> time_frequencies(std::size_t dim, double max_frequency);

struct NetInputs {
  ad::Var z;        // [B, data_dim]
  ad::Var r;        // [B, 1]
  ad::Var t;        // [B, 1]
  ad::Var t_prime;  // [B, 1]
  Tensor s;         // [B, speaker_dim]
  Tensor c;         // [B, content_dim]
};

ModelParams init_params(const NetConfig& config, std::uint64_t seed);

// Average velocity u(z, r, t | t', s, c). Requires r <= t per row.
ad::Var u_theta(const NetConfig& config, const BoundParams& params, const NetInputs& in);

// Constant-graph evaluation with per-row times.
Tensor u_theta_eval(const NetConfig& config, const ModelParams& params, const Tensor& z, std::span<const double> r,
                    std::span<const double> t, std::span<const double> t_prime, const Tensor& s, const Tensor& c);

Tensor time_column(std::span<const double> times);
Tensor time_column(std::size_t rows, double value);

}  // namespace mvf
