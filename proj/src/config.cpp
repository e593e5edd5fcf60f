#include "mvf/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "mvf/container.hpp"

namespace mvf {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be > 0");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (epochs == 0 && max_steps == 0) throw ConfigError("train.epochs or train.max_steps must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (!(times.logit_stddev > 0.0)) throw ConfigError("train.time_logit_stddev must be > 0");
  if (!(times.r_equals_t_prob >= 0.0 && times.r_equals_t_prob <= 1.0))
    throw ConfigError("train.r_equals_t_prob must lie in [0, 1]");
}

std::size_t RunConfig::steps_per_epoch() const {
  return train.batch_size == 0 ? 0 : data.size / train.batch_size;
}

std::size_t RunConfig::total_steps() const {
  return train.max_steps > 0 ? train.max_steps : train.epochs * steps_per_epoch();
}

PatchShape RunConfig::patch_shape() const {
  if (data.task != TaskKind::Patches) return {};
  return {data.patch.height, data.patch.width};
}

void RunConfig::resolve() {
  switch (data.task) {
    case TaskKind::Gaussian1D:
      net.data_dim = 1;
      net.speaker_dim = 1;
      net.content_dim = 1;
      break;
    case TaskKind::Gaussian2D:
      net.data_dim = 2;
      net.speaker_dim = 2;
      net.content_dim = 1;
      break;
    case TaskKind::Patches:
      net.data_dim = data.patch.pixels();
      net.speaker_dim = kPatchSpeakerDim;
      net.content_dim = kPatchContentDim;
      break;
  }
  if (train.warmup_auto) train.warmup_steps = total_steps() / 50;
  validate();
}

void RunConfig::validate() const {
  try {
    net.validate();
    ssim.validate();
    zerorec.validate();
    diffused.validate();
    data.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (steps_per_epoch() == 0)
    throw ConfigError("data.size (" + std::to_string(data.size) + ") is smaller than train.batch_size (" +
                      std::to_string(train.batch_size) + ")");
  if (diffused.enabled && train.batch_size % 2 != 0)
    throw ConfigError("diffused-input training needs an even train.batch_size");
  if (diffused.enabled && train.batch_size < 4)
    throw ConfigError("diffused-input training needs train.batch_size >= 4");
  if (zerorec.loss == ReconLoss::SsimMargin) {
    if (data.task != TaskKind::Patches) throw ConfigError("zerorec.loss = ssim_margin needs data.task = patches");
    if (data.patch.height < ssim.window || data.patch.width < ssim.window)
      throw ConfigError("patch is smaller than the SSIM window");
  }
  if (train.warmup_steps > total_steps()) throw ConfigError("train.warmup_steps exceeds the total step count");
  if (output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) throw ConfigError("expected a finite number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

template <class F>
auto rethrow_as_config(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define MVF_DOUBLE(sec, key, field) \
  Key{sec, key, [](const RunConfig& c) { return fmt_double(c.field); }, [](RunConfig& c, const std::string& v) { c.field = to_double(v); }}
#define MVF_UINT(sec, key, field)                                                 \
  Key{sec, key, [](const RunConfig& c) { return std::to_string(c.field); },        \
      [](RunConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_uint(v)); }}
#define MVF_BOOL(sec, key, field)                                                          \
  Key{sec, key, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
      [](RunConfig& c, const std::string& v) { c.field = to_bool(v); }}
#define MVF_ENUM(sec, key, field, name_fn, parse_fn)                   \
  Key{sec, key, [](const RunConfig& c) { return name_fn(c.field); }, \
      [](RunConfig& c, const std::string& v) { c.field = rethrow_as_config([&] { return parse_fn(v); }); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      MVF_ENUM("data", "task", data.task, task_name, parse_task),
      MVF_UINT("data", "size", data.size),
      MVF_UINT("data", "seed", data.seed),
      MVF_DOUBLE("data", "gauss_mean", data.gauss_mean),
      MVF_DOUBLE("data", "gauss_stddev", data.gauss_stddev),
      MVF_UINT("data", "speakers", data.speakers),
      MVF_UINT("data", "patch_height", data.patch.height),
      MVF_UINT("data", "patch_width", data.patch.width),
      MVF_DOUBLE("data", "noise_floor", data.patch.noise_floor),
      MVF_DOUBLE("data", "gain_jitter", data.patch.gain_jitter),
      MVF_DOUBLE("data", "band_width", data.patch.band_width),
      MVF_DOUBLE("data", "contour_amplitude", data.patch.contour_amplitude),

      MVF_UINT("net", "hidden_dim", net.hidden_dim),
      MVF_UINT("net", "depth", net.depth),
      MVF_UINT("net", "time_embed_dim", net.time_embed_dim),
      MVF_ENUM("net", "activation", net.activation, activation_name, parse_activation),
      MVF_DOUBLE("net", "max_frequency", net.max_frequency),

      MVF_UINT("train", "batch_size", train.batch_size),
      MVF_DOUBLE("train", "lr", train.lr),
      MVF_DOUBLE("train", "beta1", train.beta1),
      MVF_DOUBLE("train", "beta2", train.beta2),
      MVF_DOUBLE("train", "adam_eps", train.adam_eps),
      MVF_UINT("train", "epochs", train.epochs),
      MVF_UINT("train", "max_steps", train.max_steps),
      Key{"train", "warmup_steps",
          [](const RunConfig& c) { return c.train.warmup_auto ? std::string("auto") : std::to_string(c.train.warmup_steps); },
          [](RunConfig& c, const std::string& v) {
            if (v == "auto") {
              c.train.warmup_auto = true;
              c.train.warmup_steps = 0;
            } else {
              c.train.warmup_auto = false;
              c.train.warmup_steps = static_cast<std::size_t>(to_uint(v));
            }
          }},
      MVF_UINT("train", "seed", train.seed),
      MVF_ENUM("train", "precision", train.precision, precision_name, parse_precision),
      MVF_DOUBLE("train", "grad_clip", train.grad_clip),
      MVF_UINT("train", "checkpoint_every", train.checkpoint_every),
      MVF_UINT("train", "eval_every", train.eval_every),
      MVF_BOOL("train", "log_wall_time", train.log_wall_time),
      MVF_DOUBLE("train", "time_logit_mean", train.times.logit_mean),
      MVF_DOUBLE("train", "time_logit_stddev", train.times.logit_stddev),
      MVF_DOUBLE("train", "r_equals_t_prob", train.times.r_equals_t_prob),

      MVF_UINT("ssim", "window", ssim.window),
      MVF_DOUBLE("ssim", "sigma", ssim.sigma),
      MVF_DOUBLE("ssim", "k1", ssim.k1),
      MVF_DOUBLE("ssim", "k2", ssim.k2),
      MVF_DOUBLE("ssim", "min_range", ssim.min_range),

      MVF_ENUM("zerorec", "loss", zerorec.loss, recon_loss_name, parse_recon_loss),
      MVF_ENUM("zerorec", "input", zerorec.input, recon_input_name, parse_recon_input),
      MVF_DOUBLE("zerorec", "margin", zerorec.margin),
      MVF_DOUBLE("zerorec", "weight", zerorec.weight),
      MVF_BOOL("zerorec", "pure_noise_only", zerorec.pure_noise_only),

      MVF_BOOL("diffused", "enabled", diffused.enabled),
      MVF_DOUBLE("diffused", "inference_t_prime", diffused.inference_t_prime),
      MVF_DOUBLE("diffused", "tprime_logit_mean", diffused.t_prime_sampler.logit_mean),
      MVF_DOUBLE("diffused", "tprime_logit_stddev", diffused.t_prime_sampler.logit_stddev),

      Key{"run", "output_dir", [](const RunConfig& c) { return c.output_dir; },
          [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      MVF_ENUM("run", "convert_interval", convert_interval, convert_interval_name, parse_convert_interval),
  };
  return table;
}

#undef MVF_DOUBLE
#undef MVF_UINT
#undef MVF_BOOL
#undef MVF_ENUM

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& k : keys())
    if (section == k.section) return true;
  return false;
}

void set_key(RunConfig& cfg, const std::string& section, const std::string& name, const std::string& value) {
  if (!known_section(section)) throw ConfigError("unknown section [" + section + "]");
  const Key* k = find_key(section, name);
  if (!k) throw ConfigError("unknown key '" + name + "' in section [" + section + "]");
  try {
    k->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(section + "." + name + ": " + e.what());
  }
}

}  // namespace

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  if (name == "desk") return cfg;
  if (name == "paper") {
    cfg.train.batch_size = 32;
    cfg.train.lr = 2e-4;
    cfg.train.beta1 = 0.5;
    cfg.train.beta2 = 0.9;
    cfg.train.epochs = 500;
    cfg.train.warmup_auto = false;
    cfg.train.warmup_steps = 10000;
    cfg.data.size = 16384;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' appears before any [section]");
    if (key.empty()) throw ConfigError(where + "empty key");
    try {
      set_key(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set_key(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
          trim(assignment.substr(eq + 1)));
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      if (!section.empty()) out << "\n";
      section = k.section;
      out << "[" << section << "]\n";
    }
    out << k.name << " = " << k.get(cfg) << "\n";
  }
  return out.str();
}

std::string config_digest(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : keys()) {
    if (std::string(k.section) == "run") continue;
    out << k.section << "." << k.name << "=" << k.get(cfg) << "\n";
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(8) << std::setfill('0') << crc32_of(out.str());
  return hex.str();
}

}  // namespace mvf
