#include "mvf/synth_data.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mvf {

std::string task_name(TaskKind task) {
  switch (task) {
    case TaskKind::Gaussian1D: return "gaussian1d";
    case TaskKind::Gaussian2D: return "gaussian2d";
    case TaskKind::Patches: return "patches";
  }
  return "patches";
}

TaskKind parse_task(const std::string& name) {
  if (name == "gaussian1d") return TaskKind::Gaussian1D;
  if (name == "gaussian2d") return TaskKind::Gaussian2D;
  if (name == "patches") return TaskKind::Patches;
  throw std::invalid_argument("unknown task '" + name + "' (expected gaussian1d, gaussian2d or patches)");
}

void PatchSpec::validate(std::size_t min_side) const {
  if (height < min_side || width < min_side)
    throw std::invalid_argument("patch dimensions must be at least the SSIM window (" + std::to_string(min_side) + ")");
  if (noise_floor < 0.0 || gain_jitter < 0.0 || gain_jitter >= 1.0 || !(band_width > 0.0))
    throw std::invalid_argument("invalid patch noise/gain/band settings");
}

namespace {

double unit(double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; }

constexpr double kBaseLo = 3.5, kBaseHi = 11.0;
constexpr double kSpacingLo = 5.0, kSpacingHi = 9.0;
constexpr double kDecayLo = 0.1, kDecayHi = 0.6;

// Band energy at (row, frame) before gain and offset.
double band_energy(const ToySpeaker& sp, const ToyContent& co, const PatchSpec& spec, std::size_t row,
                   std::size_t frame) {
  const double phase = 2.0 * std::numbers::pi * (static_cast<double>(frame) + 0.5) / static_cast<double>(spec.width);
  const double shift = spec.contour_amplitude * co.coordinate * std::sin(phase);
  const double inv = 1.0 / (2.0 * spec.band_width * spec.band_width);
  double e = 0.0;
  for (int k = 0;; ++k) {
    const double center = sp.base + k * sp.spacing + shift;
    if (center > static_cast<double>(spec.height) + 3.0 * spec.band_width) break;
    const double d = static_cast<double>(row) - center;
    e += std::exp(-k * sp.decay) * std::exp(-d * d * inv);
  }
  return e;
}

Tensor render(const ToySpeaker& sp, const ToyContent& co, const PatchSpec& spec, double gain, Rng* noise) {
  Tensor p({spec.height, spec.width});
  for (std::size_t h = 0; h < spec.height; ++h)
    for (std::size_t w = 0; w < spec.width; ++w) {
      double v = -1.0 + 2.0 * gain * band_energy(sp, co, spec, h, w);
      if (noise) v += spec.noise_floor * noise->normal();
      p.at(h, w) = round_to_precision(v);
    }
  return p;
}

}  // namespace

std::vector<ToySpeaker> make_speakers(std::size_t count, std::uint64_t seed) {
  Rng rng(seed, 0x5e);
  std::vector<ToySpeaker> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100000) throw std::runtime_error("make_speakers: could not find distinct speakers");
    ToySpeaker sp{static_cast<int>(out.size()), kBaseLo + (kBaseHi - kBaseLo) * rng.uniform(),
                  kSpacingLo + (kSpacingHi - kSpacingLo) * rng.uniform(),
                  kDecayLo + (kDecayHi - kDecayLo) * rng.uniform()};
    const auto e = oracle_embed(sp);
    bool distinct = true;
    for (const auto& o : out) {
      const bool layout_close = std::abs(o.base - sp.base) < 1.5 && std::abs(o.spacing - sp.spacing) < 1.5;
      if (layout_close || cosine_similarity(e.data(), oracle_embed(o).data()) >= 0.99) distinct = false;
    }
    if (distinct) out.push_back(sp);
  }
  return out;
}

Tensor clean_patch(const ToySpeaker& speaker, const ToyContent& content, const PatchSpec& spec) {
  return render(speaker, content, spec, 1.0, nullptr);
}

Tensor generate(const ToySpeaker& speaker, const ToyContent& content, const PatchSpec& spec, Rng& rng) {
  const double gain = 1.0 + spec.gain_jitter * (2.0 * rng.uniform() - 1.0);
  return render(speaker, content, spec, gain, &rng);
}

Tensor oracle_embed(const ToySpeaker& speaker) {
  const double b = unit(speaker.base, kBaseLo, kBaseHi);
  const double s = unit(speaker.spacing, kSpacingLo, kSpacingHi);
  const double d = unit(speaker.decay, kDecayLo, kDecayHi);
  const double half_pi = std::numbers::pi / 2.0;
  return Tensor({1, kPatchSpeakerDim}, {b, s, d, std::cos(half_pi * b), std::cos(half_pi * s), std::cos(half_pi * d)});
}

Tensor oracle_embed_content(const ToyContent& content) {
  const double c = content.coordinate;
  return Tensor({1, kPatchContentDim},
                {c, c * c, std::sin(std::numbers::pi * c / 2.0), std::cos(std::numbers::pi * c / 2.0)});
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

namespace {

std::vector<double> standardized(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  std::vector<double> out(v.size());
  double n = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] - m;
    n += out[i] * out[i];
  }
  n = std::sqrt(n);
  if (n > 0.0)
    for (auto& x : out) x /= n;
  return out;
}

}  // namespace

Readback::Readback(std::vector<ToySpeaker> speakers, PatchSpec spec, double content_step, double unknown_threshold)
    : speakers_(std::move(speakers)), spec_(spec), threshold_(unknown_threshold) {
  const auto n = static_cast<int>(std::lround(2.0 / content_step));
  for (int j = 0; j <= n; ++j) contents_.push_back(-1.0 + 2.0 * j / n);
  for (const auto& sp : speakers_)
    for (double c : contents_) templates_.push_back(standardized(clean_patch(sp, {c}, spec_).data()));
}

ReadbackResult Readback::operator()(std::span<const double> patch) const {
  if (patch.size() != spec_.pixels())
    throw ShapeError("readback: expected " + std::to_string(spec_.pixels()) + " values, got " +
                     std::to_string(patch.size()));
  const auto z = standardized(patch);
  ReadbackResult best;
  best.confidence = -2.0;
  for (std::size_t s = 0; s < speakers_.size(); ++s)
    for (std::size_t j = 0; j < contents_.size(); ++j) {
      const auto& t = templates_[s * contents_.size() + j];
      double corr = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) corr += z[i] * t[i];
      if (corr > best.confidence) best = {speakers_[s].id, contents_[j], corr};
    }
  if (best.confidence < threshold_) best.speaker = -1;
  return best;
}

void DatasetSpec::validate() const {
  if (size == 0) throw std::invalid_argument("data.size must be positive");
  if (gauss_stddev < 0.0) throw std::invalid_argument("data.gauss_stddev must be >= 0");
  if ((task != TaskKind::Gaussian1D) && speakers == 0) throw std::invalid_argument("data.speakers must be positive");
}

Tensor mixture_mean(std::size_t speaker, std::size_t speakers) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(speaker) / static_cast<double>(speakers);
  return Tensor({1, 2}, {2.0 * std::cos(a), 2.0 * std::sin(a)});
}

Tensor mixture_speaker_embedding(std::size_t speaker, std::size_t speakers) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(speaker) / static_cast<double>(speakers);
  return Tensor({1, 2}, {std::cos(a), std::sin(a)});
}

Dataset build_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  Rng rng(spec.seed, 0xda7a);
  const auto n = spec.size;
  switch (spec.task) {
    case TaskKind::Gaussian1D: {
      d.x = Tensor({n, 1});
      for (auto& v : d.x.data()) v = round_to_precision(spec.gauss_mean + spec.gauss_stddev * rng.normal());
      d.s = Tensor::zeros({n, 1});
      d.c = Tensor::zeros({n, 1});
      d.speaker.assign(n, 0);
      d.content.assign(n, 0.0);
      break;
    }
    case TaskKind::Gaussian2D: {
      d.x = Tensor({n, 2});
      d.s = Tensor({n, 2});
      d.c = Tensor({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = rng.below(spec.speakers);
        const double co = 2.0 * rng.uniform() - 1.0;
        const auto mu = mixture_mean(k, spec.speakers);
        const auto e = mixture_speaker_embedding(k, spec.speakers);
        // Content slides the point tangentially around the speaker's center.
        d.x.at(i, 0) = round_to_precision(mu[0] - 0.5 * co * e[1] + spec.gauss_stddev * 0.2 * rng.normal());
        d.x.at(i, 1) = round_to_precision(mu[1] + 0.5 * co * e[0] + spec.gauss_stddev * 0.2 * rng.normal());
        d.s.at(i, 0) = e[0];
        d.s.at(i, 1) = e[1];
        d.c.at(i, 0) = co;
        d.speaker.push_back(static_cast<int>(k));
        d.content.push_back(co);
      }
      break;
    }
    case TaskKind::Patches: {
      d.speakers = make_speakers(spec.speakers, spec.seed);
      std::vector<Tensor> xs, ss, cs;
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = rng.below(spec.speakers);
        const ToyContent co{2.0 * rng.uniform() - 1.0};
        xs.push_back(generate(d.speakers[k], co, spec.patch, rng).reshaped({1, spec.patch.pixels()}));
        ss.push_back(oracle_embed(d.speakers[k]));
        cs.push_back(oracle_embed_content(co));
        d.speaker.push_back(static_cast<int>(k));
        d.content.push_back(co.coordinate);
      }
      d.x = stack_rows(xs);
      d.s = stack_rows(ss);
      d.c = stack_rows(cs);
      break;
    }
  }
  return d;
}

}  // namespace mvf
