#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvf/rng.hpp"
#include "mvf/tensor.hpp"

namespace mvf {

enum class TaskKind { Gaussian1D, Gaussian2D, Patches };

std::string task_name(TaskKind task);
TaskKind parse_task(const std::string& name);

/// Spectrogram-like patch: rows are frequency bins, columns are frames.
struct PatchSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  double noise_floor = 0.03;
  double gain_jitter = 0.15;  // per-patch band gain drawn from 1 +- gain_jitter
  double band_width = 1.0;
  double contour_amplitude = 2.5;

  void validate(std::size_t min_side) const;
  std::size_t pixels() const { return height * width; }
};

// A speaker is a harmonic band layout: fundamental row, spacing, level decay.
struct ToySpeaker {
  int id = 0;
  double base = 6.0;
  double spacing = 7.0;
  double decay = 0.3;
};

// Content drives the temporal contour shared by every band.
struct ToyContent {
  double coordinate = 0.0;  // in [-1, 1]
};

inline constexpr std::size_t kPatchSpeakerDim = 6;
inline constexpr std::size_t kPatchContentDim = 4;

std::vector<ToySpeaker> make_speakers(std::size_t count, std::uint64_t seed);

// Noise-free patch at unit gain, [H, W].
Tensor clean_patch(const ToySpeaker& speaker, const ToyContent& content, const PatchSpec& spec);
// Clean patch with per-patch gain jitter and additive noise, [H, W].
Tensor generate(const ToySpeaker& speaker, const ToyContent& content, const PatchSpec& spec, Rng& rng);

Tensor oracle_embed(const ToySpeaker& speaker);          // [1, kPatchSpeakerDim]
Tensor oracle_embed_content(const ToyContent& content);  // [1, kPatchContentDim]
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct ReadbackResult {
  int speaker = -1;  // -1: unknown
  double content = 0.0;
  double confidence = 0.0;  // best template correlation
};

/// Template matcher over (speaker, content grid). Correlation is invariant to
/// the generator's gain and offset.
class Readback {
 public:
  Readback(std::vector<ToySpeaker> speakers, PatchSpec spec, double content_step = 0.01,
           double unknown_threshold = 0.5);

  ReadbackResult operator()(std::span<const double> patch) const;
  double threshold() const { return threshold_; }

 private:
  std::vector<ToySpeaker> speakers_;
  PatchSpec spec_;
  double threshold_;
  std::vector<double> contents_;
  std::vector<std::vector<double>> templates_;  // standardized, [speaker * contents + j]
};

struct DatasetSpec {
  TaskKind task = TaskKind::Patches;
  std::size_t size = 1024;
  std::uint64_t seed = 1;
  // Gaussian tasks: N(mean, stddev^2); stddev 0 is a point mass.
  double gauss_mean = 1.0;
  double gauss_stddev = 0.5;
  std::size_t speakers = 4;
  PatchSpec patch;

  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  Tensor x;  // [N, data_dim]
  Tensor s;  // [N, speaker_dim]
  Tensor c;  // [N, content_dim]
  std::vector<int> speaker;
  std::vector<double> content;
  std::vector<ToySpeaker> speakers;

  std::size_t size() const { return x.rows(); }
  std::size_t data_dim() const { return x.cols(); }
  std::size_t speaker_dim() const { return s.cols(); }
  std::size_t content_dim() const { return c.cols(); }
};

Dataset build_dataset(const DatasetSpec& spec);

// Speaker embedding rows for the 2-D mixture task.
Tensor mixture_speaker_embedding(std::size_t speaker, std::size_t speakers);
Tensor mixture_mean(std::size_t speaker, std::size_t speakers);

}  // namespace mvf
