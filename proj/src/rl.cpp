#include "qcontrol/rl.hpp"

#include "qcontrol/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qcontrol {

namespace {

constexpr double kFieldSlack = 1e-9;
constexpr double kTraceFloor = 1e-6;

// Keeps sums of action deltas on a fixed lattice so repeated +-0.1 steps
// land exactly back on earlier fields.
double snap(double field) { return std::round(field * 1e9) / 1e9; }

}  // namespace

ActionSet ActionSet::bang_bang() { return {{0.0, 2 * kFieldMax, -2 * kFieldMax}}; }

ActionSet ActionSet::quasi_continuous() {
  ActionSet s{{0.0}};
  for (double d : {0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    s.deltas.push_back(d);
    s.deltas.push_back(-d);
  }
  return s;
}

bool ActionSet::legal(std::size_t action, double field) const {
  return std::abs(field + deltas.at(action)) <= kFieldMax + kFieldSlack;
}

QFunction::QFunction(std::size_t steps, std::size_t actions, TileCoding coding, double alpha, double trace_decay)
    : steps_(steps), actions_(actions), coding_(coding), alpha_(alpha), trace_decay_(trace_decay) {
  if (steps == 0 || actions == 0) throw std::invalid_argument("QFunction needs steps and actions");
  if (coding.tilings == 0 || coding.tiles == 0) throw std::invalid_argument("tile coding needs tilings and tiles");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(trace_decay >= 0.0 && trace_decay <= 1.0)) throw std::invalid_argument("trace decay must lie in [0, 1]");
  tile_width_ = 2 * kFieldMax / static_cast<double>(coding.tiles);
  weights_.assign(steps * coding.tilings * (coding.tiles + 1) * actions, 0.0);
}

std::size_t QFunction::feature(std::size_t time_index, std::size_t tiling, double field, std::size_t action) const {
  const double shift = static_cast<double>(tiling) / static_cast<double>(coding_.tilings);
  const double u = (field + kFieldMax) / tile_width_ + shift;
  const auto tile = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(coding_.tiles)));
  return ((time_index * coding_.tilings + tiling) * (coding_.tiles + 1) + tile) * actions_ + action;
}

double QFunction::value(const RlState& s, std::size_t action) const {
  if (s.time_index >= steps_) return 0.0;
  double q = 0.0;
  for (std::size_t k = 0; k < coding_.tilings; ++k) q += weights_[feature(s.time_index, k, s.field, action)];
  return q;
}

double QFunction::max_value(const RlState& s, const ActionSet& actions) const {
  if (s.time_index >= steps_) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < actions.size(); ++a) {
    if (actions.legal(a, s.field)) best = std::max(best, value(s, a));
  }
  return best;
}

void QFunction::clear_traces() { traces_.clear(); }

void QFunction::decay_traces() {
  for (auto& t : traces_) t.second *= trace_decay_;
  std::erase_if(traces_, [](const auto& t) { return t.second < kTraceFloor; });
}

void QFunction::update(const RlState& s, std::size_t action, double target) {
  const double delta = target - value(s, action);
  for (std::size_t k = 0; k < coding_.tilings; ++k) {
    const std::size_t f = feature(s.time_index, k, s.field, action);
    auto it = std::find_if(traces_.begin(), traces_.end(), [&](const auto& t) { return t.first == f; });
    if (it == traces_.end()) {
      traces_.emplace_back(f, 1.0);
    } else {
      it->second = 1.0;
    }
  }
  const double step = alpha_ / static_cast<double>(coding_.tilings) * delta;
  for (const auto& [f, e] : traces_) weights_[f] += step * e;
}

std::vector<double> softmax_probabilities(const QFunction& q, const RlState& s, const ActionSet& actions, double beta) {
  std::vector<double> p(actions.size(), 0.0);
  if (std::isinf(beta) && beta > 0) {
    p[greedy_action(q, s, actions)] = 1.0;
    return p;
  }
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < actions.size(); ++a) {
    if (actions.legal(a, s.field)) top = std::max(top, beta * q.value(s, a));
  }
  if (!std::isfinite(top)) throw std::logic_error("no legal action");
  double z = 0.0;
  for (std::size_t a = 0; a < actions.size(); ++a) {
    if (!actions.legal(a, s.field)) continue;
    p[a] = std::exp(beta * q.value(s, a) - top);
    z += p[a];
  }
  for (double& x : p) x /= z;
  return p;
}

std::size_t greedy_action(const QFunction& q, const RlState& s, const ActionSet& actions) {
  std::size_t best = actions.size();
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < actions.size(); ++a) {
    if (!actions.legal(a, s.field)) continue;
    const double v = q.value(s, a);
    if (best == actions.size() || v > best_q) {
      best = a;
      best_q = v;
    }
  }
  if (best == actions.size()) throw std::logic_error("no legal action");
  return best;
}

std::size_t softmax_action(const QFunction& q, const RlState& s, const ActionSet& actions, double beta, Rng& rng) {
  if (std::isinf(beta) && beta > 0) return greedy_action(q, s, actions);
  const std::vector<double> p = softmax_probabilities(q, s, actions, beta);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  std::size_t last_legal = 0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    last_legal = a;
    if (x < p[a]) return a;
    x -= p[a];
  }
  return last_legal;
}

double TrainingSchedule::beta(std::size_t episode) const {
  if (total_episodes <= 1) return beta_end;
  const double f = static_cast<double>(episode) / static_cast<double>(total_episodes - 1);
  return beta_start + (beta_end - beta_start) * std::min(f, 1.0);
}

RlRun train(const Environment& env, const RlConfig& config, std::uint64_t seed) {
  const TimeGrid& grid = env.grid();
  const std::size_t steps = grid.bins();
  const ActionSet& actions = config.actions;
  if (actions.size() == 0) throw std::invalid_argument("empty action set");
  if (config.schedule.phase_length == 0) throw std::invalid_argument("phase length must be positive");
  if (config.schedule.beta_end < config.schedule.beta_start) throw std::invalid_argument("beta must not decrease");
  if (std::abs(config.initial_field) > kFieldMax) throw std::invalid_argument("initial field outside [-4, 4]");

  QFunction q(steps, actions.size(), config.coding, config.alpha, config.trace_decay);
  Rng rng = make_rng(seed);

  RlRun run{{Protocol::constant(grid, 0.0), -1.0, {}, 0, seed, false}, {}};
  run.episodes.reserve(config.schedule.total_episodes);
  std::vector<std::size_t> best_actions;
  std::vector<std::size_t> taken;
  std::vector<double> fields;

  for (std::size_t ep = 0; ep < config.schedule.total_episodes; ++ep) {
    const double beta = config.schedule.beta(ep);
    const bool replay = config.schedule.is_replay(ep) && !best_actions.empty();
    auto choose = [&](const RlState& s, std::size_t n) {
      return replay ? best_actions[n] : softmax_action(q, s, actions, beta, rng);
    };

    q.clear_traces();
    taken.clear();
    fields.clear();
    RlState s{0, config.initial_field};
    std::size_t a = choose(s, 0);
    double reward = 0.0;
    for (std::size_t n = 0; n < steps; ++n) {
      taken.push_back(a);
      const RlState next{n + 1, snap(s.field + actions.deltas[a])};
      fields.push_back(std::clamp(next.field, -kFieldMax, kFieldMax));
      if (n + 1 == steps) {
        reward = env.terminal_reward(Protocol(grid, fields));
        ++run.result.fidelity_evaluations;
        q.update(s, a, reward);
        break;
      }
      const std::size_t a_next = choose(next, n + 1);
      const double bootstrap = q.max_value(next, actions);
      q.update(s, a, bootstrap);
      if (config.watkins_cut && !replay && q.value(next, a_next) < bootstrap) {
        q.clear_traces();
      } else {
        q.decay_traces();
      }
      s = next;
      a = a_next;
    }

    if (reward > run.result.fidelity) {
      run.result.fidelity = reward;
      run.result.protocol = Protocol(grid, fields);
      best_actions = taken;
    }
    run.result.trace.push_back(run.result.fidelity);
    run.episodes.push_back({ep, replay, beta, reward, run.result.fidelity});
    q.set_alpha(q.alpha() * config.alpha_decay);
  }
  run.result.converged = true;
  return run;
}

std::pair<std::vector<RlRun>, std::size_t> train_post_selected(const Environment& env, const RlConfig& config,
                                                               std::size_t seeds, std::uint64_t seed,
                                                               unsigned threads) {
  if (seeds == 0) throw std::invalid_argument("post-selection needs at least one seed");
  std::vector<RlRun> runs(seeds, RlRun{{Protocol::constant(env.grid(), 0.0), 0.0, {}, 0, 0, false}, {}});
  parallel_for(seeds, [&](std::size_t k) { runs[k] = train(env, config, derive_seed(seed, {k})); }, threads);
  std::size_t best = 0;
  for (std::size_t k = 1; k < seeds; ++k) {
    if (runs[k].result.fidelity > runs[best].result.fidelity) best = k;
  }
  return {std::move(runs), best};
}

}  // namespace qcontrol
