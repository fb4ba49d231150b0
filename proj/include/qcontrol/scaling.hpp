#pragma once

#include "qcontrol/result.hpp"
#include "qcontrol/sd.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qcontrol {

enum class SweepAxis { time, dt, sites };

const char* to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::time;
  // Axis values (durations, steps or chain lengths), strictly monotone.
  std::vector<double> values;
  // Durations for the dt and sites axes; ignored for the time axis.
  std::vector<double> times;
  int sites = 1;
  double hz = 1.0;
  double h_initial = -2.0;
  double h_target = 2.0;
  // Either a fixed step, or (bins > 0) dt = T / bins.
  double dt = 0.01;
  std::size_t bins = 0;
  std::size_t restarts = 100;
  std::size_t max_evals = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  // Canonical text form; its hash feeds the per-point seeds.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct ScanRow {
  std::size_t point = 0;
  double total_time = 0.0;
  double dt = 0.0;
  int sites = 0;
  std::size_t bins = 0;
  std::uint64_t seed = 0;
  double q = 0.0;
  double evals_per_bin = 0.0;
  double evals_per_bin_stderr = 0.0;
  double mean_fidelity = 0.0;
  double fidelity_stderr = 0.0;
  double best_fidelity = 0.0;
  double log_fidelity_per_site = 0.0;  // -(1/L) ln F_best
  // Half-chain entropy maximized over the bin edges of the best protocol's
  // evolution; NaN for odd L.
  double entropy_max = 0.0;
  std::vector<OptimizationResult> replicates;
};

// Validates values (non-empty, strictly monotone) and restarts >= 2.
void validate_sweep(const SweepSpec& spec);

// One SD ensemble per point. Point k (in axis-major, time-minor order) uses
// seed derive_seed(spec.seed, {spec.hash(), k}).
std::vector<ScanRow> run_q_scan(const SweepSpec& spec);

// Long format, one line per (point, replicate).
void write_scan_long_csv(std::ostream& out, const std::vector<ScanRow>& rows);
// One line per point.
void write_scan_summary_csv(std::ostream& out, const std::vector<ScanRow>& rows);

}  // namespace qcontrol
