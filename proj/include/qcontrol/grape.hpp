#pragma once

#include "qcontrol/protocol.hpp"
#include "qcontrol/quantum.hpp"
#include "qcontrol/result.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qcontrol {

struct FidelityGradient {
  double fidelity = 0.0;
  std::vector<double> gradient;  // dF/dh_n, one entry per bin
};

// Fidelity of raw field values on `grid` without the [-4, 4] check, so that
// difference quotients may step just past the bounds.
double fidelity_of_values(const ControlProblem& problem, const TimeGrid& grid, std::span<const double> values);

// Exact derivative of the discretized fidelity with respect to each bin value.
// One forward and one backward pass; inside each bin dU/dh is taken in the
// eigenbasis of H(h_n) with divided differences of exp(-i E dt).
FidelityGradient fidelity_gradient(const ControlProblem& problem, const Protocol& protocol);

// Continuum form 2 Im <phi(t)|X|psi(t)> dt evaluated at the end of each bin,
// with <phi(t)| = <psi(T)|psi_*><psi_*|U(T,t). Agrees with the exact
// derivative up to O(dt^2) per bin.
std::vector<double> fidelity_gradient_first_order(const ControlProblem& problem, const Protocol& protocol);

struct GrapeConfig {
  std::size_t max_iters = 10000;
  double eps0 = 100.0;
  double tolerance = 1e-10;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  // Check every accepted iterate against central differences (step 1e-5).
  bool audit = false;
};

struct GrapeStep {
  std::size_t iter = 0;
  double fidelity = 0.0;
  double step_size = 0.0;
  double grad_norm = 0.0;
  double audit_error = 0.0;  // max relative gradient error, audit mode only
};

struct GrapeRun {
  OptimizationResult result;
  std::vector<GrapeStep> steps;  // accepted iterates, starting with the initial protocol
};

// h <- clip(h + eps g, [-4, 4]) with eps = s eps0 / sqrt(N), N the number of
// accepted steps so far. A step that lowers F is rejected and s halved, so F
// never decreases. Stops when an accepted step gains less than `tolerance`,
// when the step no longer moves the protocol, or after max_iters attempts.
GrapeRun ascend_from(const ControlProblem& problem, const Protocol& start, const GrapeConfig& config);

// Same, from values drawn uniformly in [-4, 4].
GrapeRun ascend(const ControlProblem& problem, const TimeGrid& grid, const GrapeConfig& config, std::uint64_t seed);

// config.restarts runs seeded derive_seed(config.seed, {r}).
std::vector<GrapeRun> ensemble_ascend(const ControlProblem& problem, const TimeGrid& grid, const GrapeConfig& config);

// Max over bins of |g - g_fd| / max(|g|_inf, 1e-12), central differences.
double gradient_audit_error(const ControlProblem& problem, const Protocol& protocol, const std::vector<double>& gradient,
                            double step = 1e-5);

}  // namespace qcontrol
