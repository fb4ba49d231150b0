#include <doctest.h>

#include "qcontrol/crab.hpp"
#include "qcontrol/nelder_mead.hpp"
#include "qcontrol/sd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace qcontrol;

TEST_CASE("zero coefficients give the Landau-Zener ramp") {
  const TimeGrid grid = TimeGrid::with_bins(2.0, 40);
  CrabAnsatz a{2.0, -2.0, 2.0, {1.0, 2.0}, {0.0, 0.0}, {0.0, 0.0}};
  const auto v = crab_values(a, grid);
  const Protocol lz = lz_protocol(grid, -2.0, 2.0);
  for (std::size_t n = 0; n < grid.bins(); ++n) CHECK(v[n] == doctest::Approx(lz[n]).epsilon(1e-14));
}

TEST_CASE("single harmonic vanishes at the midpoint") {
  const double T = 1.7;
  CrabAnsatz a{T, -2.0, 2.0, {2 * std::numbers::pi / T}, {1.0}, {0.0}};
  CHECK(std::abs(a(T / 2)) < 1e-14);
}

TEST_CASE("the ansatz is pinned to the ramp at both ends") {
  CrabAnsatz a{1.0, -2.0, 2.0, {3.0, 7.5}, {2.0, -1.5}, {0.7, 3.0}};
  CHECK(a(0.0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(a(1.0) == doctest::Approx(2.0).epsilon(1e-12));
  double prev = 1e9;
  for (std::size_t bins : {10, 100, 1000}) {
    const TimeGrid grid = TimeGrid::with_bins(1.0, bins);
    const double ramp = -2.0 + 4.0 * grid.bin_midpoint(0);
    const double err = std::abs(crab_values(a, grid)[0] - ramp);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("penalty and cost") {
  const TimeGrid grid = TimeGrid::with_bins(2.0, 8);
  const std::vector<double> four(8, 4.0);
  CHECK(crab_penalty(four, grid) == doctest::Approx(1.0));
  const std::vector<double> big(8, 8.0);
  CHECK(crab_penalty(big, grid) == doctest::Approx(4.0));  // computed before clipping
  CHECK(crab_penalty(std::vector<double>(8, 0.0), grid) == 0.0);

  const ControlProblem problem{SpinChain(1)};
  CrabAnsatz a{2.0, -2.0, 2.0, {1.0}, {5.0}, {5.0}};
  const CrabCost c = crab_cost(problem, a, grid);
  CHECK(c.penalty >= 0.0);
  CHECK(c.cost == doctest::Approx(1.0 - c.fidelity + c.penalty));
  const Protocol p = crab_protocol(a, grid);
  for (double v : p.values()) CHECK(std::abs(v) <= 4.0);
  CHECK(c.fidelity == doctest::Approx(problem.fidelity(p)));
}

TEST_CASE("Nelder-Mead minimizes Rosenbrock with a non-increasing best vertex") {
  auto rosen = [](std::span<const double> x) {
    return 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1 - x[0]) * (1 - x[0]);
  };
  NelderMeadOptions o;
  o.tolerance = 1e-14;
  o.max_iters = 10000;
  const auto r = nelder_mead(rosen, {-1.2, 1.0}, o);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-3));
  for (std::size_t k = 1; k < r.best_trace.size(); ++k) CHECK(r.best_trace[k] <= r.best_trace[k - 1]);

  const auto bad = nelder_mead([](std::span<const double>) { return std::nan(""); }, {0.0}, o);
  CHECK(bad.degenerate);
}

TEST_CASE("CRAB runs are reproducible with monotone traces") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid(1.0, 0.05);
  CrabConfig cfg;
  cfg.harmonics = 3;
  cfg.restarts = 3;
  cfg.seed = 61;
  cfg.simplex.max_iters = 400;
  const auto a = crab_optimize(problem, grid, cfg);
  const auto b = crab_optimize(problem, grid, cfg);
  REQUIRE(a.runs.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(a.runs[r].result.protocol == b.runs[r].result.protocol);
    const auto& t = a.runs[r].result.trace;
    for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] <= t[k - 1]);
    // frequencies stay where they were drawn
    for (std::size_t i = 0; i < 3; ++i) {
      const double base = 2 * std::numbers::pi * (i + 1) / grid.total_time();
      CHECK(a.runs[r].ansatz.omega[i] >= 0.5 * base - 1e-12);
      CHECK(a.runs[r].ansatz.omega[i] <= 1.5 * base + 1e-12);
    }
  }
  for (const auto& r : a.runs) CHECK(r.result.fidelity <= a.runs[a.best].result.fidelity);
}

TEST_CASE("CRAB does not beat bang-bang SD in the glassy window") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid(1.5, 0.05);
  CrabConfig cfg;
  cfg.seed = 62;
  const auto crab = crab_optimize(problem, grid, cfg);
  SdConfig sd;
  sd.restarts = 100;
  sd.seed = 62;
  double best = 0.0;
  for (const auto& r : ensemble_descend(problem, grid, sd)) best = std::max(best, r.fidelity);
  CHECK(crab.runs[crab.best].result.fidelity <= best);
}
