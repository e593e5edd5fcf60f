#include "mvf/evaluate.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "mvf/ssim.hpp"

namespace mvf {

TensorFile dataset_to_file(const Dataset& data) {
  RunConfig holder;
  holder.data = data.spec;
  TensorFile f;
  f.set_meta("format", "mvf-dataset");
  f.set_meta("config", to_config_text(holder));
  f.add("x", data.x);
  f.add("s", data.s);
  f.add("c", data.c);
  const std::size_t n = data.speaker.size();
  f.add("speaker", Tensor({1, n}, std::vector<double>(data.speaker.begin(), data.speaker.end())));
  f.add("content", Tensor({1, data.content.size()}, data.content));
  return f;
}

Dataset dataset_from_file(const TensorFile& f) {
  if (!f.has_meta("format") || f.meta_value("format") != "mvf-dataset") throw FormatError("not a dataset file");
  RunConfig holder;
  apply_config_text(holder, f.meta_value("config"), "<dataset config>");
  Dataset d;
  d.spec = holder.data;
  d.spec.validate();
  d.x = f.tensor("x");
  d.s = f.tensor("s");
  d.c = f.tensor("c");
  for (double v : f.tensor("speaker").data()) d.speaker.push_back(static_cast<int>(v));
  const auto content = f.tensor("content").data();
  d.content.assign(content.begin(), content.end());
  if (d.x.rows() != d.spec.size || d.s.rows() != d.spec.size || d.c.rows() != d.spec.size ||
      d.speaker.size() != d.spec.size || d.content.size() != d.spec.size)
    throw FormatError("dataset tensors do not match data.size = " + std::to_string(d.spec.size));
  if (d.spec.task == TaskKind::Patches) {
    d.speakers = make_speakers(d.spec.speakers, d.spec.seed);
    if (d.x.cols() != d.spec.patch.pixels()) throw FormatError("dataset patch size does not match its spec");
  }
  return d;
}

ConvertOptions convert_options_for(const RunConfig& cfg, std::size_t steps) {
  ConvertOptions opts;
  opts.steps = steps;
  opts.interval = cfg.convert_interval;
  if (!cfg.diffused.enabled) opts.condition_t_prime = 1.0;
  return opts;
}

namespace {

void require_patches(const RunConfig& cfg, const Dataset& data) {
  if (cfg.data.task != TaskKind::Patches || data.speakers.empty())
    throw std::invalid_argument("conversion needs a patch-task model and dataset");
  if (data.data_dim() != cfg.net.data_dim) throw std::invalid_argument("dataset does not match the model's data dim");
}

}  // namespace

ConversionResult convert_item(const RunConfig& cfg, const ModelParams& params, const Dataset& data, std::size_t item,
                              int target_speaker, double t_prime, std::size_t steps, std::uint64_t seed) {
  require_patches(cfg, data);
  if (item >= data.size())
    throw std::out_of_range("source item " + std::to_string(item) + " not found (dataset has " +
                            std::to_string(data.size()) + " items)");
  if (target_speaker < 0 || static_cast<std::size_t>(target_speaker) >= data.speakers.size())
    throw std::out_of_range("target speaker " + std::to_string(target_speaker) + " not found (" +
                            std::to_string(data.speakers.size()) + " speakers)");
  Rng rng(seed);
  const Tensor x_src = data.x.row_copy(item);
  const Tensor eps = standard_normal(x_src.shape(), rng);
  const Tensor s_tgt = oracle_embed(data.speakers[static_cast<std::size_t>(target_speaker)]);
  ConversionResult out;
  out.converted = convert(cfg.net, params, x_src, s_tgt, data.c.row_copy(item), t_prime, eps,
                          convert_options_for(cfg, steps));

  const Readback readback(data.speakers, cfg.data.patch);
  const auto rb = readback(out.converted.data());
  const Shape hw{cfg.data.patch.height, cfg.data.patch.width};
  auto& r = out.report;
  r.source_item = item;
  r.source_speaker = data.speaker[item];
  r.target_speaker = target_speaker;
  r.t_prime = t_prime;
  r.steps = steps;
  r.readback_speaker = rb.speaker;
  r.readback_confidence = rb.confidence;
  r.content = rb.content;
  r.content_error = std::abs(rb.content - data.content[item]);
  r.ssim_to_source = ssim_value(out.converted.reshaped(hw), x_src.reshaped(hw), cfg.ssim);
  return out;
}

std::string report_json(const ConversionReport& r) {
  const nlohmann::json j{{"source_item", r.source_item},
                         {"source_speaker", r.source_speaker},
                         {"target_speaker", r.target_speaker},
                         {"t_prime", r.t_prime},
                         {"steps", r.steps},
                         {"readback_speaker", r.readback_speaker},
                         {"readback_confidence", r.readback_confidence},
                         {"readback_content", r.content},
                         {"content_error", r.content_error},
                         {"ssim_to_source", r.ssim_to_source}};
  return j.dump(2);
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("bad number '" + s + "' in grid '" + spec + "'");
    return v;
  };
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("grid '" + spec + "' must be lo:hi:step");
    const double lo = num(parts[0]), hi = num(parts[1]), step = num(parts[2]);
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("grid '" + spec + "' needs step > 0 and hi >= lo");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < n; ++k) out.push_back(k + 1 == n && std::abs(lo + k * step - hi) < 1e-9 ? hi : lo + k * step);
  } else {
    std::stringstream ss(spec);
    std::string p;
    while (std::getline(ss, p, ','))
      if (!p.empty()) out.push_back(num(p));
  }
  if (out.empty()) throw std::invalid_argument("empty t' grid");
  for (double v : out)
    if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("grid value " + std::to_string(v) + " outside (0, 1]");
  return out;
}

std::vector<SweepRow> sweep_tprime(const RunConfig& cfg, const ModelParams& params, const Dataset& data,
                                   const std::vector<double>& grid, std::size_t items, std::uint64_t seed,
                                   std::size_t steps) {
  require_patches(cfg, data);
  if (grid.empty()) throw std::invalid_argument("empty t' grid");
  items = std::min(items, data.size());
  const std::size_t k = data.speakers.size();
  if (k < 2) throw std::invalid_argument("sweep needs at least two speakers");

  std::vector<Tensor> s_rows;
  for (std::size_t i = 0; i < items; ++i) {
    const auto own = static_cast<std::size_t>(data.speaker[i]);
    const std::size_t target = (own + 1 + i % (k - 1)) % k;
    s_rows.push_back(oracle_embed(data.speakers[target]));
  }
  const Tensor x_src = data.x.rows_slice(0, items);
  const Tensor c_src = data.c.rows_slice(0, items);
  const Tensor s_tgt = stack_rows(s_rows);
  Rng rng(seed);
  const Tensor eps = standard_normal(x_src.shape(), rng);
  const Readback readback(data.speakers, cfg.data.patch);
  const Shape hw{cfg.data.patch.height, cfg.data.patch.width};
  const ConvertOptions opts = convert_options_for(cfg, steps);

  std::vector<SweepRow> rows;
  for (double tp : grid) {
    const Tensor out = convert(cfg.net, params, x_src, s_tgt, c_src, tp, eps, opts);
    SweepRow row{tp, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < items; ++i) {
      const auto own = static_cast<std::size_t>(data.speaker[i]);
      const auto target = static_cast<int>((own + 1 + i % (k - 1)) % k);
      const auto rb = readback(out.row_span(i));
      row.speaker_accuracy += rb.speaker == target ? 1.0 : 0.0;
      row.content_error += std::abs(rb.content - data.content[i]);
      row.mean_ssim += ssim_value(out.row_copy(i).reshaped(hw), x_src.row_copy(i).reshaped(hw), cfg.ssim);
    }
    row.speaker_accuracy /= static_cast<double>(items);
    row.content_error /= static_cast<double>(items);
    row.mean_ssim /= static_cast<double>(items);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "t_prime,speaker_accuracy,content_error,mean_ssim\n";
  for (const auto& r : rows) os << r.t_prime << "," << r.speaker_accuracy << "," << r.content_error << "," << r.mean_ssim << "\n";
  return os.str();
}

}  // namespace mvf
