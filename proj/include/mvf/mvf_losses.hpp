#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvf/autodiff.hpp"
#include "mvf/flow.hpp"
#include "mvf/rng.hpp"
#include "mvf/ssim.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf {

// Reconstruction regularizer on the one-step output. SsimMargin is the
// structural margin loss; L1/L2 are element-wise ablations.
enum class ReconLoss { None, SsimMargin, L1, L2 };
// Zero: only the prior center z1 = 0. All: every item's own input noise.
enum class ReconInput { Zero, All };

std::string recon_loss_name(ReconLoss l);
ReconLoss parse_recon_loss(const std::string& name);
std::string recon_input_name(ReconInput i);
ReconInput parse_recon_input(const std::string& name);

struct ZeroRecConfig {
  double margin = 0.3;
  double weight = 1.0;
  ReconLoss loss = ReconLoss::SsimMargin;
  ReconInput input = ReconInput::Zero;
  // Restrict the constraint to the pure-noise half of a diffused-input batch.
  bool pure_noise_only = false;

  void validate() const;
};

struct DiffusedInputConfig {
  bool enabled = true;
  double inference_t_prime = 0.95;
  TimeSamplerConfig t_prime_sampler{};
  void validate() const;
};

struct PatchShape {
  std::size_t height = 0;
  std::size_t width = 0;
};

struct ZeroRecTerms {
  ad::Var loss;                  // scalar, batch mean
  std::vector<double> per_item;  // loss contribution of each item
  std::vector<double> ssim;      // SSIM of each reconstruction (SsimMargin only)
  Tensor reconstruction;         // one-step outputs x_bar
};

// x_bar = z1 - u(z1, 0, 1 | t'=1, s, c) with z1 = 0 (or z1 = inputs for
// ReconInput::All), penalized by max(1 - SSIM(x_bar, x), m) per item.
// `inputs` and `input_t_prime` are only read for ReconInput::All.
ZeroRecTerms zero_input_reconstruction(const NetConfig& net, const BoundParams& params, const Tensor& x,
                                       const Tensor& s, const Tensor& c, const ZeroRecConfig& cfg,
                                       const SsimConfig& ssim_cfg, PatchShape patch, const Tensor* inputs = nullptr,
                                       std::span<const double> input_t_prime = {});

struct DiffusedSource {
  Tensor eps_hat;  // gradient-blocked synthesized source mixture
  Tensor z1;       // the fresh noise it was synthesized from
  Tensor s_src;    // shuffled speaker embeddings
  std::vector<std::size_t> source_index;  // s_src row i = s_tgt row source_index[i]
  std::vector<double> t_prime;
};

// eps_hat = sg(z1 - (1 - t') u(z1, t', 1 | t'=1, s_src, c_tgt)), z1 ~ N(0, 1),
// s_src a derangement of s_tgt within the batch.
DiffusedSource synthesize_diffused_source(const NetConfig& net, const ModelParams& params, const Tensor& s_tgt,
                                          const Tensor& c_tgt, std::span<const double> t_prime, Rng& rng);

struct BatchConfig {
  TimeSamplerConfig times{};
  DiffusedInputConfig diffused{};
};

// First half pure noise (t'=1), second half diffused source when enabled.
FlowBatch build_training_batch(const NetConfig& net, const ModelParams& params, const Tensor& x, const Tensor& s,
                               const Tensor& c, const BatchConfig& cfg, Rng& rng);

struct ObjectiveTerms {
  ad::Var total;
  double l_mf = 0.0;
  double l_zerorec = 0.0;
};

struct ObjectiveConfig {
  ZeroRecConfig zerorec{};
  SsimConfig ssim{};
  PatchShape patch{};
};

// L_MF + weight * L_zerorec over the batch's (x, s, c).
ObjectiveTerms total_objective(const NetConfig& net, const BoundParams& params, const FlowBatch& batch,
                               const ObjectiveConfig& cfg);

enum class ConvertInterval { FromTPrime, FromOne };

std::string convert_interval_name(ConvertInterval i);
ConvertInterval parse_convert_interval(const std::string& name);

struct ConvertOptions {
  std::size_t steps = 1;
  ConvertInterval interval = ConvertInterval::FromTPrime;
  // Value fed to the t' condition; defaults to t' itself.
  std::optional<double> condition_t_prime;
};

// Diffused source (1 - t') x_src + t' eps, then a mean-flow displacement to 0.
// With FromTPrime and one step: src - t' u(src, 0, t' | t', s_tgt, c_src).
Tensor convert(const NetConfig& net, const ModelParams& params, const Tensor& x_src, const Tensor& s_tgt,
               const Tensor& c_src, double t_prime, const Tensor& eps, const ConvertOptions& opts = {});

// Same mixing formula as the training path points.
Tensor diffuse_source(const Tensor& x_src, const Tensor& eps, double t_prime);

}  // namespace mvf
