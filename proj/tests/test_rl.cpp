#include <doctest.h>

#include "qcontrol/landscape.hpp"
#include "qcontrol/rl.hpp"
#include "qcontrol/sd.hpp"

#include <algorithm>
#include <cmath>

using namespace qcontrol;

namespace {

// Reward = fraction of bins at +4. Knows nothing about quantum states.
class CountingEnvironment final : public Environment {
 public:
  explicit CountingEnvironment(TimeGrid grid) : grid_(grid) {}
  const TimeGrid& grid() const override { return grid_; }
  double terminal_reward(const Protocol& p) const override {
    return static_cast<double>(std::count(p.values().begin(), p.values().end(), 4.0)) / p.size();
  }

 private:
  TimeGrid grid_;
};

}  // namespace

TEST_CASE("action sets and masking") {
  const ActionSet bb = ActionSet::bang_bang();
  CHECK(bb.deltas == std::vector<double>{0.0, 8.0, -8.0});
  CHECK(bb.legal(0, -4.0));
  CHECK(bb.legal(1, -4.0));
  CHECK_FALSE(bb.legal(2, -4.0));
  CHECK_FALSE(bb.legal(1, 4.0));
  const ActionSet qc = ActionSet::quasi_continuous();
  CHECK(qc.size() == 15);
  CHECK(qc.legal(1, 3.9));  // +0.1
  CHECK_FALSE(qc.legal(3, 3.9));  // +0.2
}

TEST_CASE("terminal update moves Q by alpha times the TD error") {
  QFunction q(1, 3, {}, 0.1, 0.6);
  const RlState s{0, -4.0};
  CHECK(q.value(s, 1) == 0.0);
  q.update(s, 1, 0.5);
  CHECK(q.value(s, 1) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(q.value(s, 0) == 0.0);
  // zero TD error changes nothing
  const double before = q.value(s, 1);
  q.update(s, 1, before);
  CHECK(q.value(s, 1) == doctest::Approx(before).epsilon(1e-15));
  // terminal states are worth 0
  CHECK(q.max_value({1, 0.0}, ActionSet::bang_bang()) == 0.0);
}

TEST_CASE("two-step tabular episode") {
  const ActionSet actions = ActionSet::bang_bang();
  QFunction q(2, 3, {1, 20}, 1.0, 0.0);
  const RlState s0{0, -4.0};
  const RlState s1{1, 4.0};
  for (int episode = 0; episode < 2; ++episode) {
    q.clear_traces();
    CHECK(q.active_traces() == 0);
    q.update(s0, 1, q.max_value(s1, actions));
    q.decay_traces();
    q.update(s1, 0, 1.0);
    if (episode == 0) {
      CHECK(q.value(s1, 0) == doctest::Approx(1.0));
      CHECK(q.value(s0, 1) == 0.0);  // no trace survives a decay of 0
    }
  }
  CHECK(q.value(s0, 1) == doctest::Approx(1.0));
}

TEST_CASE("softmax exploration") {
  QFunction q(1, 3, {}, 1.0, 0.6);
  const RlState s{0, 0.0};
  const ActionSet three{{0.0, 0.1, -0.1}};
  SUBCASE("beta = 0 is uniform over legal actions") {
    for (double p : softmax_probabilities(q, s, three, 0.0)) CHECK(p == doctest::Approx(1.0 / 3));
    const auto masked = softmax_probabilities(q, {0, -4.0}, ActionSet::bang_bang(), 0.0);
    CHECK(masked[2] == 0.0);
    CHECK(masked[0] == doctest::Approx(0.5));
  }
  SUBCASE("beta = 1 with Q = (0, ln 2)") {
    const ActionSet two{{0.0, 0.1}};
    q.update(s, 1, std::log(2.0));
    const auto p = softmax_probabilities(q, s, two, 1.0);
    CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
  SUBCASE("beta = infinity picks the unique maximum") {
    q.update(s, 2, 0.3);
    const auto p = softmax_probabilities(q, s, three, kGreedyBeta);
    CHECK(p == std::vector<double>{0.0, 0.0, 1.0});
    Rng rng = make_rng(1);
    for (int k = 0; k < 20; ++k) CHECK(softmax_action(q, s, three, kGreedyBeta, rng) == 2);
    CHECK(greedy_action(q, s, three) == 2);
  }
}

TEST_CASE("schedule") {
  const TrainingSchedule s{100, 10, 0.1, 50.0};
  CHECK(s.beta(0) == doctest::Approx(0.1));
  CHECK(s.beta(99) == doctest::Approx(50.0));
  for (std::size_t e = 1; e < 100; ++e) CHECK(s.beta(e) >= s.beta(e - 1));
  CHECK_FALSE(s.is_replay(9));
  CHECK(s.is_replay(10));
  CHECK_FALSE(s.is_replay(20));
}

TEST_CASE("agent learns a toy task through the environment interface only") {
  const CountingEnvironment env(TimeGrid::with_bins(1.0, 6));
  RlConfig cfg;
  cfg.schedule = {800, 20, 0.1, 50.0};
  const RlRun run = train(env, cfg, 71);
  CHECK(run.result.fidelity == 1.0);
  CHECK(std::is_sorted(run.result.trace.begin(), run.result.trace.end()));
  CHECK(run.episodes.size() == 800);
  for (double v : run.result.protocol.values()) CHECK(v == 4.0);
}

TEST_CASE("replay is deterministic from the seed") {
  const ControlProblem problem{SpinChain(1)};
  const QuantumEnvironment env(problem, TimeGrid(1.0, 0.05));
  RlConfig cfg;
  cfg.schedule = {400, 40, 0.1, 50.0};
  const RlRun a = train(env, cfg, 72);
  const RlRun b = train(env, cfg, 72);
  CHECK(a.result.protocol == b.result.protocol);
  CHECK(a.result.trace == b.result.trace);
  const auto [runs1, best1] = train_post_selected(env, cfg, 3, 73, 1);
  const auto [runs2, best2] = train_post_selected(env, cfg, 3, 73, 3);
  CHECK(best1 == best2);
  for (std::size_t k = 0; k < 3; ++k) CHECK(runs1[k].result.trace == runs2[k].result.trace);
}

TEST_CASE("two-bin qubit instance finds the enumerated optimum") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid = TimeGrid::with_bins(0.1, 2);
  const auto all = enumerate_fidelities(problem, grid);
  const QuantumEnvironment env(problem, grid);
  RlConfig cfg;
  cfg.schedule = {200, 20, 0.1, 50.0};
  CHECK(train(env, cfg, 74).result.fidelity == doctest::Approx(*std::max_element(all.begin(), all.end())).epsilon(1e-14));
}

TEST_CASE("quasi-continuous protocols stay on the reachable lattice") {
  const ControlProblem problem{SpinChain(1)};
  const QuantumEnvironment env(problem, TimeGrid(1.0, 0.1));
  RlConfig cfg;
  cfg.actions = ActionSet::quasi_continuous();
  cfg.schedule = {200, 20, 0.1, 5.0};
  const RlRun run = train(env, cfg, 75);
  for (double v : run.result.protocol.values()) {
    CHECK(std::abs(v) <= 4.0);
    CHECK(std::abs(v * 10 - std::round(v * 10)) < 1e-9);
  }
}

TEST_CASE("qubit T = 2.4 matches SD's best") {
  const ControlProblem problem{SpinChain(1)};
  const TimeGrid grid(2.4, 0.05);
  const QuantumEnvironment env(problem, grid);
  const auto [runs, best] = train_post_selected(env, RlConfig{}, 4, 76);
  SdConfig sd;
  sd.restarts = 100;
  sd.seed = 76;
  double sd_best = 0.0;
  for (const auto& r : ensemble_descend(problem, grid, sd)) sd_best = std::max(sd_best, r.fidelity);
  CHECK(runs[best].result.fidelity >= sd_best - 1e-3);
}
