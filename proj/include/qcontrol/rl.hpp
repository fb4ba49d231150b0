#pragma once

#include "qcontrol/protocol.hpp"
#include "qcontrol/quantum.hpp"
#include "qcontrol/random.hpp"
#include "qcontrol/result.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qcontrol {

// What the agent is allowed to see: the number of steps, the field bounds and
// a score for a finished protocol. Nothing about the quantum state.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const TimeGrid& grid() const = 0;
  // Reward for a complete protocol (the terminal fidelity).
  virtual double terminal_reward(const Protocol& protocol) const = 0;
};

class QuantumEnvironment final : public Environment {
 public:
  QuantumEnvironment(const ControlProblem& problem, TimeGrid grid) : problem_(problem), grid_(grid) {}
  const TimeGrid& grid() const override { return grid_; }
  double terminal_reward(const Protocol& protocol) const override { return problem_.fidelity(protocol); }

 private:
  const ControlProblem& problem_;
  TimeGrid grid_;
};

struct ActionSet {
  std::vector<double> deltas;  // index order sets greedy tie-breaking

  static ActionSet bang_bang();          // {0, +8, -8}
  static ActionSet quasi_continuous();   // {0, +-0.1, +-0.2, +-0.5, +-1, +-2, +-4, +-8}
  std::size_t size() const noexcept { return deltas.size(); }
  bool legal(std::size_t action, double field) const;
};

struct RlState {
  std::size_t time_index = 0;
  double field = 0.0;
};

struct TileCoding {
  std::size_t tilings = 5;
  std::size_t tiles = 20;  // per tiling across [-4, 4]
};

// Linear Q(s, a): one weight per (time index, tiling, field tile, action).
// Each tiling is shifted by a fraction 1/tilings of a tile width. The step
// applied to every active weight is alpha / tilings, so Q(s, a) itself moves
// by alpha times the TD error.
class QFunction {
 public:
  QFunction(std::size_t steps, std::size_t actions, TileCoding coding = {}, double alpha = 0.1, double trace_decay = 0.6);

  double value(const RlState& s, std::size_t action) const;
  // max over legal actions; 0 at the terminal time index.
  double max_value(const RlState& s, const ActionSet& actions) const;

  void clear_traces();
  void decay_traces();
  // Q(s,a) += alpha [target - Q(s,a)] spread along the eligibility traces,
  // after setting the traces of (s, a)'s features to 1.
  void update(const RlState& s, std::size_t action, double target);

  double alpha() const noexcept { return alpha_; }
  void set_alpha(double alpha) noexcept { alpha_ = alpha; }
  double trace_decay() const noexcept { return trace_decay_; }
  std::size_t weight_count() const noexcept { return weights_.size(); }
  std::size_t active_traces() const noexcept { return traces_.size(); }

 private:
  std::size_t feature(std::size_t time_index, std::size_t tiling, double field, std::size_t action) const;

  std::size_t steps_;
  std::size_t actions_;
  TileCoding coding_;
  double alpha_;
  double trace_decay_;
  double tile_width_;
  std::vector<double> weights_;
  std::vector<std::pair<std::size_t, double>> traces_;
};

inline constexpr double kGreedyBeta = std::numeric_limits<double>::infinity();

// Probabilities over all actions (0 for illegal ones), p ~ exp(beta Q).
// beta = infinity puts all mass on the first legal maximizer.
std::vector<double> softmax_probabilities(const QFunction& q, const RlState& s, const ActionSet& actions, double beta);
std::size_t softmax_action(const QFunction& q, const RlState& s, const ActionSet& actions, double beta, Rng& rng);
std::size_t greedy_action(const QFunction& q, const RlState& s, const ActionSet& actions);

struct TrainingSchedule {
  std::size_t total_episodes = 20000;
  std::size_t phase_length = 40;
  double beta_start = 0.1;
  double beta_end = 50.0;

  // Linear in the episode number.
  double beta(std::size_t episode) const;
  bool is_replay(std::size_t episode) const { return (episode / phase_length) % 2 == 1; }
};

struct RlConfig {
  ActionSet actions = ActionSet::bang_bang();
  TrainingSchedule schedule{};
  TileCoding coding{};
  double alpha = 0.1;
  // Multiplies alpha after every episode; 1 keeps it fixed.
  double alpha_decay = 1.0;
  double trace_decay = 0.6;
  // Watkins: clear the traces after an exploratory (non-greedy) action.
  bool watkins_cut = true;
  double initial_field = -kFieldMax;
};

struct RlEpisode {
  std::size_t episode = 0;
  bool replay = false;
  double beta = 0.0;
  double fidelity = 0.0;
  double best_fidelity = 0.0;
};

struct RlRun {
  OptimizationResult result;  // trace: best-so-far fidelity per episode
  std::vector<RlEpisode> episodes;
};

// Alternates exploratory phases (softmax on the current Q) with replay phases
// (the best protocol so far, re-executed with Q updates). Reward 0 on every
// step except the last, which gets the environment's terminal reward.
RlRun train(const Environment& env, const RlConfig& config, std::uint64_t seed);

// Independent runs seeded derive_seed(seed, {k}); returns all of them and the
// index of the best.
std::pair<std::vector<RlRun>, std::size_t> train_post_selected(const Environment& env, const RlConfig& config,
                                                               std::size_t seeds, std::uint64_t seed,
                                                               unsigned threads = 0);

}  // namespace qcontrol
