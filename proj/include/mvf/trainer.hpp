#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mvf/config.hpp"
#include "mvf/container.hpp"
#include "mvf/synth_data.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf {

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

// Bias-corrected Adam update from each Param's grad slot.
void adam_step(ModelParams& params, AdamState& state, double lr, const AdamHyper& hyper);

// Linear ramp 0 -> base_lr over `warmup` steps, then cosine decay to 0 at `total`.
double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup, std::uint64_t total);

// Scales all grads so their joint L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(ModelParams& params, double max_norm);

struct MetricsRow {
  std::uint64_t step = 0;
  double lr = 0.0;
  double l_mf = 0.0;
  double l_zerorec = 0.0;
  double l_total = 0.0;
  double wall_ms = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

class TrainingAbort : public NumericalError {
 public:
  TrainingAbort(const std::string& msg, std::filesystem::path dump)
      : NumericalError(msg), dump_(std::move(dump)) {}
  const std::filesystem::path& dump_path() const { return dump_; }

 private:
  std::filesystem::path dump_;
};

struct Checkpoint {
  static constexpr const char* kFormat = "mvf-checkpoint";

  RunConfig config;  // resolved
  ModelParams params;
  AdamState adam;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<std::size_t> order;  // current epoch permutation
  std::string digest;

  TensorFile to_file() const;
  // Throws FormatError on a non-checkpoint file or a digest that does not match the stored config.
  static Checkpoint from_file(const TensorFile& file);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fresh parameters and optimizer state for a resolved config.
Checkpoint initial_checkpoint(const RunConfig& cfg);

// Refuses (std::runtime_error) when cfg's digest differs from the checkpoint's.
void check_resume_compatible(const Checkpoint& ckpt, const RunConfig& cfg);

struct EvalSnapshot {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, double>> values;
};

// One-step generation statistics on a fixed evaluation stream.
EvalSnapshot evaluate_snapshot(const RunConfig& cfg, const Dataset& data, const ModelParams& params, std::uint64_t step);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every train.checkpoint_every steps
  std::function<void(const EvalSnapshot&)> on_eval;      // every train.eval_every steps
  std::uint64_t stop_after = 0;                          // 0: run to the end
  std::filesystem::path dump_dir;                        // where a non-finite batch is written
};

struct TrainResult {
  Checkpoint state;
  std::vector<MetricsRow> metrics;
  bool completed = false;
};

TrainResult train(const Checkpoint& start, const Dataset& data, const TrainHooks& hooks = {});
TrainResult train(const RunConfig& cfg, const Dataset& data, const ModelParams& params, const TrainHooks& hooks = {});

}  // namespace mvf
