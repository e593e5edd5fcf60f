#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvf/config.hpp"
#include "mvf/container.hpp"
#include "mvf/mvf_losses.hpp"
#include "mvf/synth_data.hpp"

namespace mvf {

// Dataset <-> tensor container. The [data] settings travel as metadata so the
// loader can re-derive speakers and check dims.
TensorFile dataset_to_file(const Dataset& data);
Dataset dataset_from_file(const TensorFile& file);

// Conversion options derived from a trained run: models trained without the
// diffused-input branch only ever saw the t' condition at 1.
ConvertOptions convert_options_for(const RunConfig& cfg, std::size_t steps);

struct ConversionReport {
  std::size_t source_item = 0;
  int source_speaker = 0;
  int target_speaker = 0;
  double t_prime = 0.0;
  std::size_t steps = 1;
  int readback_speaker = -1;
  double readback_confidence = 0.0;
  double content = 0.0;
  double content_error = 0.0;
  double ssim_to_source = 0.0;
};

struct ConversionResult {
  Tensor converted;  // [1, data_dim]
  ConversionReport report;
};

ConversionResult convert_item(const RunConfig& cfg, const ModelParams& params, const Dataset& data, std::size_t item,
                              int target_speaker, double t_prime, std::size_t steps, std::uint64_t seed);

std::string report_json(const ConversionReport& r);

struct SweepRow {
  double t_prime = 0.0;
  double speaker_accuracy = 0.0;
  double content_error = 0.0;
  double mean_ssim = 0.0;
};

// Parses "lo:hi:step" or a comma list.
std::vector<double> parse_grid(const std::string& spec);

// Converts the first `items` dataset items, each to a speaker other than its
// own, at every t' in the grid with shared noise.
std::vector<SweepRow> sweep_tprime(const RunConfig& cfg, const ModelParams& params, const Dataset& data,
                                   const std::vector<double>& grid, std::size_t items, std::uint64_t seed,
                                   std::size_t steps = 1);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace mvf
