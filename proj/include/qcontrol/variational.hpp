#pragma once

#include "qcontrol/protocol.hpp"
#include "qcontrol/quantum.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace qcontrol {

// Grid-free fidelity of bang sequences: each segment is propagated exactly
// through the eigendecomposition of H(+4), H(0) or H(-4).
class VariationalEvaluator {
 public:
  explicit VariationalEvaluator(const ControlProblem& problem);

  double fidelity(std::span<const Segment> segments) const;
  // |<psi_*| e(-4, tau1/2) e(0, T - tau1) e(+4, tau1/2) |psi_i>|^2
  double fidelity_1d(double tau1, double total_time) const;
  // Five pulses (+4, -4, 0, +4, -4) of durations
  // (tau1/2, tau2/2, T - tau1 - tau2, tau2/2, tau1/2).
  double fidelity_2d(double tau1, double tau2, double total_time) const;

 private:
  struct Spectrum {
    RVector energies;
    RMatrix eigenvectors;
  };
  const Spectrum& spectrum_for(double field) const;
  void propagate(CVector& state, double field, double duration) const;

  CVector psi_i_;
  CVector psi_star_;
  Spectrum plus_;
  Spectrum zero_;
  Spectrum minus_;
};

struct ScanPoint {
  double total_time = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double fidelity = 0.0;
  bool kink = false;
  // A second, distinct maximizer within 1e-9 in fidelity was found.
  bool degenerate = false;
};

struct VariationalScan {
  std::vector<ScanPoint> points;
  std::vector<double> kinks;
  double tau_resolution = 0.0;
  bool two_parameter = false;
};

struct ScanOptions {
  double tau_resolution = 1e-3;
  bool two_parameter = false;
  // Slope jumps must exceed both jump_factor x the local median jump and
  // min_jump (in units of d tau / dT) to count as kinks.
  double jump_factor = 10.0;
  double min_jump = 0.1;
  std::size_t median_window = 10;
  unsigned threads = 0;
};

struct VariationalOptimum {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double fidelity = 0.0;
  bool degenerate = false;
};

// Dense grid over the tau simplex then golden-section refinement.
VariationalOptimum maximize_1d(const VariationalEvaluator& eval, double total_time, double tau_resolution);
VariationalOptimum maximize_2d(const VariationalEvaluator& eval, double total_time, double tau_resolution);

VariationalScan scan_critical_points(const ControlProblem& problem, std::span<const double> times,
                                     const ScanOptions& options);

// Kinks of a sampled curve x(T): points where the discrete slope jumps by more
// than the thresholds. Adjacent flagged points merge into one kink located at
// the largest jump. Returns indices into `times`.
std::vector<std::size_t> detect_kinks(std::span<const double> times, std::span<const double> values,
                                      const ScanOptions& options);

}  // namespace qcontrol
