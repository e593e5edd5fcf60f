#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvf/flow.hpp"
#include "mvf/mvf_losses.hpp"
#include "mvf/ssim.hpp"
#include "mvf/synth_data.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  std::size_t epochs = 50;
  std::size_t max_steps = 0;  // 0: epochs * steps_per_epoch
  // 0 with warmup_auto: 2% of the total step count.
  std::size_t warmup_steps = 0;
  bool warmup_auto = true;
  std::uint64_t seed = 0;
  Precision precision = Precision::F64;
  double grad_clip = 0.0;  // global-norm clip, 0 = off
  std::size_t checkpoint_every = 0;
  std::size_t eval_every = 0;
  bool log_wall_time = false;
  TimeSamplerConfig times{};

  void validate() const;
};

struct RunConfig {
  NetConfig net{};
  TrainConfig train{};
  SsimConfig ssim{};
  ZeroRecConfig zerorec{};
  DiffusedInputConfig diffused{};
  DatasetSpec data{};
  ConvertInterval convert_interval = ConvertInterval::FromTPrime;
  std::string output_dir = "runs/default";

  // Fills data-dependent net dims and the automatic warmup; validates all.
  void resolve();
  void validate() const;

  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const;
  PatchShape patch_shape() const;
};

// "desk" (default) or "paper" baseline values.
RunConfig preset(const std::string& name);

// Strict key = value parser with [section] headers and '#' comments.
// Errors carry "<origin>:<line>:" prefixes.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// One "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical text of every setting; parses back to the same config.
std::string to_config_text(const RunConfig& cfg);
// CRC of the canonical text minus the [run] section.
std::string config_digest(const RunConfig& cfg);

}  // namespace mvf
