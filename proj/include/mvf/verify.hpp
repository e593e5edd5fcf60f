#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvf/flow.hpp"
#include "mvf/velocity_net.hpp"

namespace mvf::verify {

struct PropertyResult {
  std::string suite;
  std::string name;
  std::string anchor;      // the relation being checked
  std::string comparison;  // "<", "<=", ">", "==", "in"
  double measured = 0.0;
  double threshold = 0.0;
  double threshold_hi = 0.0;  // upper bound for "in"
  bool passed = false;
  std::string detail;
};

using TargetFn = std::function<Tensor(const NetConfig&, const ModelParams&, const FlowBatch&)>;

struct Options {
  std::uint64_t seed = 20240917;
  // Mean-flow target under test; defaults to meanflow_target.
  TargetFn target;
};

std::vector<std::string> suite_names();  // autodiff, flow, mvf, oracle

// Runs one suite, or every suite for "all". Throws std::invalid_argument on an unknown name.
std::vector<PropertyResult> run_suite(const std::string& suite, const Options& opts = {});

bool all_passed(const std::vector<PropertyResult>& results);
std::string to_json(const std::vector<PropertyResult>& results);

}  // namespace mvf::verify
