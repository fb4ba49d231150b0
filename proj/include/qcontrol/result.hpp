#pragma once

#include "qcontrol/protocol.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace qcontrol {

struct OptimizationResult {
  Protocol protocol;
  double fidelity = 0.0;
  // One entry per iteration (SD: per fidelity evaluation, GRAPE: per accepted
  // step, RL: best-so-far per episode).
  std::vector<double> trace;
  std::size_t fidelity_evaluations = 0;
  std::uint64_t seed = 0;
  // SD: a full sweep found no improving flip. GRAPE: the tolerance was met.
  bool converged = false;
};

}  // namespace qcontrol
