#include "qcontrol/crab.hpp"

#include "qcontrol/grape.hpp"
#include "qcontrol/parallel.hpp"
#include "qcontrol/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qcontrol {

double CrabAnsatz::operator()(double t) const {
  const double ramp = h_start + (h_end - h_start) * t / total_time;
  const double s = std::sin(std::numbers::pi * t / total_time);
  double series = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) series += a[i] * std::cos(omega[i] * t) + b[i] * std::sin(omega[i] * t);
  return ramp * (1.0 + s * s * series);
}

std::vector<double> crab_values(const CrabAnsatz& ansatz, const TimeGrid& grid) {
  if (ansatz.a.size() != ansatz.omega.size() || ansatz.b.size() != ansatz.omega.size()) {
    throw std::invalid_argument("CRAB coefficient vectors differ in length");
  }
  std::vector<double> v(grid.bins());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = ansatz(grid.bin_midpoint(n));
  return v;
}

Protocol crab_protocol(const CrabAnsatz& ansatz, const TimeGrid& grid) {
  std::vector<double> v = crab_values(ansatz, grid);
  for (double& x : v) x = std::isfinite(x) ? std::clamp(x, -kFieldMax, kFieldMax) : 0.0;
  return Protocol(grid, std::move(v));
}

double crab_penalty(std::span<const double> values, const TimeGrid& grid) {
  double sum = 0.0;
  for (double h : values) sum += h * h;
  return sum * grid.dt() / (16.0 * grid.total_time());
}

CrabCost crab_cost(const ControlProblem& problem, const CrabAnsatz& ansatz, const TimeGrid& grid) {
  const std::vector<double> raw = crab_values(ansatz, grid);
  CrabCost c;
  c.penalty = crab_penalty(raw, grid);
  if (!std::isfinite(c.penalty)) {
    c.cost = c.penalty;
    return c;
  }
  const Protocol p = crab_protocol(ansatz, grid);
  c.fidelity = fidelity_of_values(problem, grid, p.values());
  c.cost = (1.0 - c.fidelity) + c.penalty;
  return c;
}

namespace {

CrabRun run_once(const ControlProblem& problem, const TimeGrid& grid, const CrabConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  std::uniform_real_distribution<double> amp(-config.amplitude_range, config.amplitude_range);
  const std::size_t nc = config.harmonics;
  const double total = grid.total_time();

  CrabRun run{{Protocol::constant(grid, 0.0), 0.0, {}, 0, seed, false}, {}, {}};
  for (std::size_t attempt = 0; attempt <= config.max_redraws; ++attempt) {
    CrabAnsatz ansatz{total, problem.h_initial(), problem.h_target(), {}, {}, {}};
    for (std::size_t i = 1; i <= nc; ++i) {
      ansatz.omega.push_back(2.0 * std::numbers::pi * static_cast<double>(i) / total * (1.0 + offset(rng)));
    }
    std::vector<double> x0;
    for (std::size_t i = 0; i < 2 * nc; ++i) x0.push_back(amp(rng));
    if (config.optimize_frequencies) x0.insert(x0.end(), ansatz.omega.begin(), ansatz.omega.end());

    auto unpack = [&](std::span<const double> x) {
      CrabAnsatz s = ansatz;
      s.a.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nc));
      s.b.assign(x.begin() + static_cast<std::ptrdiff_t>(nc), x.begin() + static_cast<std::ptrdiff_t>(2 * nc));
      if (config.optimize_frequencies) {
        s.omega.assign(x.begin() + static_cast<std::ptrdiff_t>(2 * nc), x.end());
      }
      return s;
    };
    const NelderMeadResult nm = nelder_mead(
        [&](std::span<const double> x) { return crab_cost(problem, unpack(x), grid).cost; }, x0, config.simplex);
    run.result.fidelity_evaluations += nm.evaluations;
    if (nm.degenerate) continue;

    run.ansatz = unpack(nm.x);
    run.cost = crab_cost(problem, run.ansatz, grid);
    run.result.protocol = crab_protocol(run.ansatz, grid);
    run.result.fidelity = run.cost.fidelity;
    run.result.trace = nm.best_trace;
    run.result.converged = nm.converged;
    return run;
  }
  throw std::runtime_error("CRAB simplex degenerated on every redraw");
}

}  // namespace

CrabOutcome crab_optimize(const ControlProblem& problem, const TimeGrid& grid, const CrabConfig& config) {
  if (config.harmonics == 0) throw std::invalid_argument("CRAB needs at least one harmonic");
  if (config.restarts == 0) throw std::invalid_argument("CRAB needs at least one restart");
  CrabOutcome out;
  out.runs.resize(config.restarts, CrabRun{{Protocol::constant(grid, 0.0), 0.0, {}, 0, 0, false}, {}, {}});
  parallel_for(
      config.restarts,
      [&](std::size_t r) { out.runs[r] = run_once(problem, grid, config, derive_seed(config.seed, {r})); },
      config.threads);
  for (std::size_t r = 1; r < out.runs.size(); ++r) {
    if (out.runs[r].result.fidelity > out.runs[out.best].result.fidelity) out.best = r;
  }
  return out;
}

}  // namespace qcontrol
