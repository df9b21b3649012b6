#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace paramcrop {

struct GradcheckConfig {
  std::uint64_t seed = 0;
  std::size_t trials = 20;   // random instances per check
  double step = 1e-6;        // central-difference step
  double tolerance = 1e-5;   // on the max relative error
};

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t trials = 0;
  std::size_t redrawn = 0;  // instances rejected for sitting near a kink
  bool passed = false;
};

struct GradcheckReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  // nullptr when every check passed.
  const CheckResult* first_failure() const;
  // One line per check; stable for a given seed.
  std::string to_text() const;
};

// ||a - n||_inf / max(||a||_inf, ||n||_inf), or 0 when both are zero.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Central differences of f with respect to every entry of x, perturbed in place.
std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x, double h);

// Checks, in order: sampler, clamp_params, transform_grid, mlp_chain,
// nt_xent, mlp, encoder.
GradcheckReport run_gradcheck(const GradcheckConfig& config);

}  // namespace paramcrop
