#include "qcontrol/sd.hpp"

#include "qcontrol/parallel.hpp"
#include "qcontrol/random.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace qcontrol {

namespace {

// Fidelity differences below this are roundoff, so they count as ties.
constexpr double kTieTolerance = 1e-14;

Protocol random_bang_bang(const TimeGrid& grid, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v(grid.bins());
  for (double& x : v) x = coin(rng) ? kFieldMax : -kFieldMax;
  return Protocol(grid, std::move(v));
}

}  // namespace

BangBangEvaluator::BangBangEvaluator(const ControlProblem& problem, const Protocol& start)
    : protocol_(start), target_(problem.target_state()) {
  if (!start.is_bang_bang()) throw ProtocolError("BangBangEvaluator needs a bang-bang protocol");
  const double dt = start.grid().dt();
  up_owner_ = problem.cache().get(kFieldMax, dt);
  down_owner_ = problem.cache().get(-kFieldMax, dt);
  up_ = &up_owner_->unitary;
  down_ = &down_owner_->unitary;
  const auto dim = problem.initial_state().size();
  const auto cols = static_cast<Eigen::Index>(start.size() + 1);
  forward_.resize(dim, cols);
  backward_.resize(dim, cols);
  forward_.col(0) = problem.initial_state();
  backward_.col(cols - 1) = target_;
  forward_valid_ = 0;
  backward_valid_ = start.size();
  extend_forward(start.size());
  fidelity_ = std::norm(backward_.col(cols - 1).dot(forward_.col(cols - 1)));
}

void BangBangEvaluator::extend_forward(std::size_t upto) const {
  for (; forward_valid_ < upto; ++forward_valid_) {
    const auto n = static_cast<Eigen::Index>(forward_valid_);
    forward_.col(n + 1).noalias() = propagator_for(protocol_[forward_valid_]) * forward_.col(n);
  }
}

void BangBangEvaluator::extend_backward(std::size_t downto) const {
  for (; backward_valid_ > downto; --backward_valid_) {
    const auto n = static_cast<Eigen::Index>(backward_valid_);
    backward_.col(n - 1).noalias() = propagator_for(protocol_[backward_valid_ - 1]).adjoint() * backward_.col(n);
  }
}

double BangBangEvaluator::fidelity_with_flips(std::span<const std::size_t> bins) const {
  if (bins.empty()) return fidelity_;
  const auto [lo_it, hi_it] = std::minmax_element(bins.begin(), bins.end());
  const std::size_t lo = *lo_it;
  const std::size_t hi = *hi_it;
  if (hi >= protocol_.size()) throw std::out_of_range("flip bin outside the protocol");
  extend_forward(lo);
  extend_backward(hi + 1);
  CVector psi = forward_.col(static_cast<Eigen::Index>(lo));
  CVector next(psi.size());
  for (std::size_t n = lo; n <= hi; ++n) {
    double h = protocol_[n];
    if (std::find(bins.begin(), bins.end(), n) != bins.end()) h = -h;
    next.noalias() = propagator_for(h) * psi;
    psi.swap(next);
  }
  return std::norm(backward_.col(static_cast<Eigen::Index>(hi + 1)).dot(psi));
}

void BangBangEvaluator::apply_flips(std::span<const std::size_t> bins) {
  if (bins.empty()) return;
  const double updated = fidelity_with_flips(bins);
  std::vector<double> v(protocol_.values().begin(), protocol_.values().end());
  for (std::size_t n : bins) v.at(n) = -v.at(n);
  protocol_ = Protocol(protocol_.grid(), std::move(v));
  const auto [lo_it, hi_it] = std::minmax_element(bins.begin(), bins.end());
  forward_valid_ = std::min(forward_valid_, *lo_it);
  backward_valid_ = std::max(backward_valid_, *hi_it + 1);
  fidelity_ = updated;
}

OptimizationResult descend(const ControlProblem& problem, const TimeGrid& grid, const SdConfig& config,
                           std::uint64_t seed) {
  const std::size_t n_bins = grid.bins();
  const std::size_t budget = config.max_evals > 0 ? config.max_evals : 20 * n_bins;
  const std::size_t k = std::clamp<std::size_t>(config.flip_order, 1, n_bins);
  Rng rng = make_rng(seed);

  BangBangEvaluator eval(problem, random_bang_bang(grid, rng));
  OptimizationResult result{eval.protocol(), eval.fidelity(), {eval.fidelity()}, 1, seed, false};

  std::vector<std::size_t> order(n_bins);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> subset(k);

  auto try_flip = [&](std::span<const std::size_t> bins) {
    const double candidate = eval.fidelity_with_flips(bins);
    ++result.fidelity_evaluations;
    const bool accept = candidate > eval.fidelity() + kTieTolerance;
    if (accept) eval.apply_flips(bins);
    result.trace.push_back(eval.fidelity());
    return accept;
  };

  if (k == 1) {
    while (result.fidelity_evaluations < budget) {
      std::shuffle(order.begin(), order.end(), rng);
      bool improved = false;
      bool complete = true;
      for (std::size_t n : order) {
        if (result.fidelity_evaluations >= budget) {
          complete = false;
          break;
        }
        improved |= try_flip(std::span<const std::size_t>(&n, 1));
      }
      if (complete && !improved) {
        result.converged = true;
        break;
      }
    }
  } else {
    std::size_t rejections = 0;
    while (result.fidelity_evaluations < budget) {
      std::shuffle(order.begin(), order.end(), rng);
      std::copy_n(order.begin(), k, subset.begin());
      if (try_flip(subset)) {
        rejections = 0;
      } else if (++rejections >= n_bins) {
        result.converged = true;
        break;
      }
    }
  }

  result.protocol = eval.protocol();
  result.fidelity = eval.fidelity();
  return result;
}

std::vector<OptimizationResult> ensemble_descend(const ControlProblem& problem, const TimeGrid& grid,
                                                 const SdConfig& config) {
  std::vector<OptimizationResult> results(config.restarts, OptimizationResult{Protocol::constant(grid, 0.0), 0.0, {}, 0, 0, false});
  parallel_for(
      config.restarts,
      [&](std::size_t r) { results[r] = descend(problem, grid, config, derive_seed(config.seed, {r})); },
      config.threads);
  return results;
}

double mean_evaluations_per_bin(std::span<const OptimizationResult> results) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    total += static_cast<double>(r.fidelity_evaluations) / static_cast<double>(r.protocol.size());
  }
  return total / static_cast<double>(results.size());
}

}  // namespace qcontrol
