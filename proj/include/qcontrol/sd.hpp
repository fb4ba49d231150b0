#pragma once

#include "qcontrol/quantum.hpp"
#include "qcontrol/result.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qcontrol {

// Keeps the forward states psi_n = U_{n-1}..U_0 psi_i and the backward duals
// chi_n = U_n^dag..U_{N-1}^dag psi_* of a bang-bang protocol, so the fidelity
// after flipping bins costs one matrix-vector product per flipped span
// instead of a full propagation. After a flip only the stale end of each table
// is recomputed, and only when a later query reaches it.
class BangBangEvaluator {
 public:
  BangBangEvaluator(const ControlProblem& problem, const Protocol& start);

  const Protocol& protocol() const noexcept { return protocol_; }
  double fidelity() const noexcept { return fidelity_; }

  // Fidelity of the protocol with the given (distinct) bins flipped.
  double fidelity_with_flips(std::span<const std::size_t> bins) const;
  void apply_flips(std::span<const std::size_t> bins);

 private:
  const CMatrix& propagator_for(double field) const { return field > 0 ? *up_ : *down_; }
  void extend_forward(std::size_t upto) const;
  void extend_backward(std::size_t downto) const;

  Protocol protocol_;
  const CMatrix* up_;
  const CMatrix* down_;
  std::shared_ptr<const Propagator> up_owner_;
  std::shared_ptr<const Propagator> down_owner_;
  CVector target_;
  mutable CMatrix forward_;
  mutable CMatrix backward_;
  // forward_ columns [0, forward_valid_] and backward_ columns
  // [backward_valid_, N_T] are current.
  mutable std::size_t forward_valid_ = 0;
  mutable std::size_t backward_valid_ = 0;
  double fidelity_ = 0.0;
};

struct SdConfig {
  std::size_t max_evals = 0;  // 0 selects 20 * N_T
  std::size_t flip_order = 1;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

// Greedy descent over bang-bang protocols from a uniformly random start.
// Proposals visit the bins in random-permutation sweeps and are accepted only
// on a strict fidelity increase; a sweep without acceptance certifies a
// 1-flip local optimum. For flip_order k > 1 each proposal flips a random
// k-subset and N_T consecutive rejections end the run. The trace holds the
// current fidelity after every evaluation.
OptimizationResult descend(const ControlProblem& problem, const TimeGrid& grid, const SdConfig& config,
                           std::uint64_t seed);

// config.restarts independent descents seeded derive_seed(config.seed, {r}),
// returned in restart order.
std::vector<OptimizationResult> ensemble_descend(const ControlProblem& problem, const TimeGrid& grid,
                                                 const SdConfig& config);

double mean_evaluations_per_bin(std::span<const OptimizationResult> results);

}  // namespace qcontrol
