#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fdanet/tensor.hpp"

namespace fdanet::verify {

enum class CheckLevel { quick, full };
CheckLevel check_level_from_string(const std::string& s);

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst observed error or the measured quantity
  double tolerance = 0.0;  // bound the measurement is compared against
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> results;
  double seconds = 0.0;

  bool all_passed() const;
  std::string to_text() const;
  std::string to_json() const;
};

/// Runs the built-in property suites. `full` adds larger sweeps and an
/// end-to-end f64 gradient check of the tiny network.
CheckReport run_checks(CheckLevel level);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  std::string worst;  // name of the tensor with the largest error
};

/// Compares reverse-mode gradients of sum(forward() * R), R a fixed random
/// tensor, with central differences at `step`. Up to `max_per_tensor` seeded
/// entries of each tensor in `wrt` are probed. The error of one tensor is
/// max|analytic - numeric| / max(|numeric|_inf, |analytic|_inf, 1e-6).
GradCheckResult gradient_check(const std::function<Tensor<double>()>& forward,
                               const std::vector<std::pair<std::string, Tensor<double>>>& wrt,
                               std::uint64_t seed, std::int64_t max_per_tensor = 16,
                               double step = 1e-5);

}  // namespace fdanet::verify
