#include <doctest.h>

#include "qcontrol/grape.hpp"
#include "qcontrol/random.hpp"

#include <algorithm>
#include <cmath>

using namespace qcontrol;

namespace {

Protocol random_protocol(const TimeGrid& grid, Rng& rng) {
  std::uniform_real_distribution<double> u(-3.9, 3.9);
  std::vector<double> v(grid.bins());
  for (double& x : v) x = u(rng);
  return Protocol(grid, v);
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("gradient agrees with central differences") {
  Rng rng = make_rng(51);
  for (int L : {1, 6}) {
    const ControlProblem problem{SpinChain(L)};
    const TimeGrid grid = TimeGrid::with_bins(L == 1 ? 2.0 : 3.2, L == 1 ? 40 : 28);
    for (int trial = 0; trial < 20; ++trial) {
      const Protocol p = random_protocol(grid, rng);
      const FidelityGradient fg = fidelity_gradient(problem, p);
      CHECK(fg.fidelity == doctest::Approx(problem.fidelity(p)).epsilon(1e-12));
      CHECK(gradient_audit_error(problem, p, fg.gradient) < 1e-6);
    }
  }
}

TEST_CASE("first-order gradient converges to the exact one as dt shrinks") {
  const ControlProblem problem{SpinChain(1)};
  double prev = 1e9;
  for (std::size_t bins : {20, 80, 320}) {
    const TimeGrid grid = TimeGrid::with_bins(2.0, bins);
    std::vector<double> v(bins);
    for (std::size_t n = 0; n < bins; ++n) v[n] = 3.0 * std::sin(3.0 * grid.bin_midpoint(n));
    const Protocol p(grid, v);
    const auto exact = fidelity_gradient(problem, p).gradient;
    const auto approx = fidelity_gradient_first_order(problem, p);
    std::vector<double> diff(bins);
    for (std::size_t n = 0; n < bins; ++n) diff[n] = exact[n] - approx[n];
    // both scale like dt; compare the relative mismatch
    const double rel = max_abs(diff) / max_abs(exact);
    CHECK(rel < prev);
    prev = rel;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("gradient maps to its negated time reverse under h(t) -> -h(T-t)") {
  Rng rng = make_rng(52);
  for (int L : {1, 4}) {
    const ControlProblem problem{SpinChain(L)};
    const TimeGrid grid = TimeGrid::with_bins(1.5, 15);
    for (int trial = 0; trial < 5; ++trial) {
      const Protocol p = random_protocol(grid, rng);
      const auto g = fidelity_gradient(problem, p).gradient;
      const auto r = fidelity_gradient(problem, p.time_reversed_negated()).gradient;
      for (std::size_t n = 0; n < grid.bins(); ++n) CHECK(std::abs(r[n] + g[grid.bins() - 1 - n]) < 1e-10);
    }
  }
}

TEST_CASE("zero-gradient start leaves the protocol unchanged") {
  // Same initial and target state, held by a constant field: F = 1 is the
  // global maximum, so the gradient vanishes.
  const ControlProblem problem{SpinChain(1), -2.0, -2.0};
  const TimeGrid grid = TimeGrid::with_bins(1.0, 10);
  const Protocol start = Protocol::constant(grid, -2.0);
  CHECK(max_abs(fidelity_gradient(problem, start).gradient) < 1e-14);
  GrapeConfig cfg;
  cfg.max_iters = 1;
  const GrapeRun run = ascend_from(problem, start, cfg);
  for (std::size_t n = 0; n < grid.bins(); ++n) CHECK(std::abs(run.result.protocol[n] - start[n]) < 1e-12);
  CHECK(run.result.fidelity == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ascent never lowers the fidelity and stays in bounds") {
  const ControlProblem problem{SpinChain(4)};
  const TimeGrid grid = TimeGrid::with_bins(2.0, 20);
  GrapeConfig cfg;
  cfg.max_iters = 300;
  const GrapeRun run = ascend(problem, grid, cfg, 53);
  REQUIRE(run.steps.size() >= 2);
  for (std::size_t k = 1; k < run.steps.size(); ++k) CHECK(run.steps[k].fidelity >= run.steps[k - 1].fidelity);
  CHECK(std::is_sorted(run.result.trace.begin(), run.result.trace.end()));
  for (double v : run.result.protocol.values()) CHECK(std::abs(v) <= 4.0);
  CHECK(run.result.fidelity == doctest::Approx(problem.fidelity(run.result.protocol)).epsilon(1e-12));
}

TEST_CASE("audit mode checks every accepted iterate") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid = TimeGrid::with_bins(1.0, 20);
  GrapeConfig cfg;
  cfg.max_iters = 30;
  cfg.audit = true;
  const GrapeRun run = ascend(problem, grid, cfg, 54);
  for (const auto& s : run.steps) CHECK(s.audit_error < 1e-6);
}

TEST_CASE("qubit in the controllable phase reaches unit fidelity") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid(3.0, 0.05);
  GrapeConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 55;
  double best = 0.0;
  for (const auto& r : ensemble_ascend(problem, grid, cfg)) best = std::max(best, r.result.fidelity);
  CHECK(best >= 0.9999);
}

TEST_CASE("ensemble seeds and determinism") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid = TimeGrid::with_bins(1.0, 10);
  GrapeConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 56;
  cfg.max_iters = 50;
  const auto a = ensemble_ascend(problem, grid, cfg);
  cfg.threads = 1;
  const auto b = ensemble_ascend(problem, grid, cfg);
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].result.seed == derive_seed(56, {r}));
    CHECK(a[r].result.protocol == b[r].result.protocol);
  }
}
