#pragma once

#include "qcontrol/nelder_mead.hpp"
#include "qcontrol/protocol.hpp"
#include "qcontrol/quantum.hpp"
#include "qcontrol/result.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace qcontrol {

// h(t) = h0(t) (1 + sin^2(pi t / T) sum_i [A_i cos(w_i t) + B_i sin(w_i t)])
// with the ramp h0(t) = h_i + (h_f - h_i) t / T.
struct CrabAnsatz {
  double total_time = 0.0;
  double h_start = -2.0;
  double h_end = 2.0;
  std::vector<double> omega;
  std::vector<double> a;
  std::vector<double> b;

  std::size_t harmonics() const noexcept { return omega.size(); }
  double operator()(double t) const;
};

// Unclipped ansatz at the bin midpoints.
std::vector<double> crab_values(const CrabAnsatz& ansatz, const TimeGrid& grid);
// The same, clipped to [-4, 4] for simulation.
Protocol crab_protocol(const CrabAnsatz& ansatz, const TimeGrid& grid);

// (1 / (16 T)) int h^2 dt on the unclipped bin values.
double crab_penalty(std::span<const double> values, const TimeGrid& grid);

struct CrabCost {
  double fidelity = 0.0;
  double penalty = 0.0;
  double cost = 0.0;  // (1 - fidelity) + penalty
};

CrabCost crab_cost(const ControlProblem& problem, const CrabAnsatz& ansatz, const TimeGrid& grid);

struct CrabConfig {
  std::size_t harmonics = 10;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  // Also let the simplex move the frequencies.
  bool optimize_frequencies = false;
  double amplitude_range = 10.0;
  NelderMeadOptions simplex{};
  // Fresh random draws allowed when the simplex degenerates.
  std::size_t max_redraws = 5;
  unsigned threads = 0;
};

struct CrabRun {
  OptimizationResult result;  // trace: best simplex cost per iteration
  CrabAnsatz ansatz;
  CrabCost cost;
};

struct CrabOutcome {
  std::vector<CrabRun> runs;  // in restart order
  std::size_t best = 0;       // index of the highest-fidelity run
};

// Restart r draws w_i = (2 pi i / T)(1 + r_i), r_i ~ U[-0.5, 0.5], and A_i, B_i
// ~ U[-range, range] from derive_seed(config.seed, {r}), then minimizes the
// cost over (A, B) (and w with optimize_frequencies) by Nelder-Mead.
CrabOutcome crab_optimize(const ControlProblem& problem, const TimeGrid& grid, const CrabConfig& config);

}  // namespace qcontrol
