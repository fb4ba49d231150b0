#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qcontrol {

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  // Stop once max - min over the simplex vertices falls below this.
  double tolerance = 1e-8;
  std::size_t max_iters = 5000;
  // Initial simplex: x0 plus `initial_step` along each coordinate.
  double initial_step = 1.0;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  // Some vertex cost was not finite; the caller should restart.
  bool degenerate = false;
  std::vector<double> best_trace;  // best vertex value after each iteration
};

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& cost, std::vector<double> x0,
                             const NelderMeadOptions& options = {});

}  // namespace qcontrol
