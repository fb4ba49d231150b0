#include "qcontrol/scaling.hpp"

#include "qcontrol/landscape.hpp"
#include "qcontrol/random.hpp"
#include "qcontrol/text.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <tuple>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qcontrol {

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::time: return "T";
    case SweepAxis::dt: return "dt";
    case SweepAxis::sites: return "L";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "T") return SweepAxis::time;
  if (name == "dt") return SweepAxis::dt;
  if (name == "L") return SweepAxis::sites;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected T, dt or L)");
}

std::string SweepSpec::canonical() const {
  std::ostringstream s;
  s << "axis=" << to_string(axis) << ";values=";
  for (double v : values) s << format_double(v) << ',';
  s << ";times=";
  for (double v : times) s << format_double(v) << ',';
  s << ";L=" << sites << ";hz=" << format_double(hz) << ";hi=" << format_double(h_initial)
    << ";hf=" << format_double(h_target) << ";dt=" << format_double(dt) << ";bins=" << bins
    << ";restarts=" << restarts << ";max_evals=" << max_evals;
  return s.str();
}

std::uint64_t SweepSpec::hash() const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate_sweep(const SweepSpec& spec) {
  if (spec.values.empty()) throw std::invalid_argument("sweep needs at least one axis value");
  bool up = true;
  bool down = true;
  for (std::size_t i = 1; i < spec.values.size(); ++i) {
    up &= spec.values[i] > spec.values[i - 1];
    down &= spec.values[i] < spec.values[i - 1];
  }
  if (!(up || down)) throw std::invalid_argument("sweep values must be strictly monotone");
  if (spec.axis != SweepAxis::time && spec.times.empty()) throw std::invalid_argument("sweep needs durations");
  if (spec.restarts < 2) throw std::invalid_argument("sweep needs at least 2 restarts per point");
}

namespace {

double max_entropy(const ControlProblem& problem, const Protocol& protocol) {
  const int l = problem.system().sites();
  if (l < 2 || l % 2 != 0) return std::numeric_limits<double>::quiet_NaN();
  CVector psi = problem.initial_state();
  double best = entanglement_entropy_half(problem.to_full(psi), l);
  const double dt = protocol.grid().dt();
  for (double h : protocol.values()) {
    problem.cache().get(h, dt)->apply(psi);
    best = std::max(best, entanglement_entropy_half(problem.to_full(psi), l));
  }
  return best;
}

std::pair<double, double> mean_stderr(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var = x.size() > 1 ? var / (n - 1) : 0.0;
  return {m, std::sqrt(var / n)};
}

}  // namespace

std::vector<ScanRow> run_q_scan(const SweepSpec& spec) {
  validate_sweep(spec);
  struct Point {
    double t;
    double dt;
    int sites;
  };
  std::vector<Point> points;
  if (spec.axis == SweepAxis::time) {
    for (double t : spec.values) points.push_back({t, spec.dt, spec.sites});
  } else {
    for (double v : spec.values) {
      for (double t : spec.times) {
        if (spec.axis == SweepAxis::dt) {
          points.push_back({t, v, spec.sites});
        } else {
          if (v != std::round(v) || v < 1) throw std::invalid_argument("L values must be positive integers");
          points.push_back({t, spec.dt, static_cast<int>(v)});
        }
      }
    }
  }

  const std::uint64_t spec_hash = spec.hash();
  std::vector<ScanRow> rows;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& pt = points[k];
    // The dt axis always sweeps the step itself; otherwise bins (if set) wins.
    const TimeGrid grid = (spec.bins > 0 && spec.axis != SweepAxis::dt) ? TimeGrid::with_bins(pt.t, spec.bins)
                                                                         : TimeGrid(pt.t, pt.dt);
    const ControlProblem problem(SpinChain(pt.sites, spec.hz), spec.h_initial, spec.h_target);

    ScanRow row;
    row.point = k;
    row.total_time = pt.t;
    row.dt = grid.dt();
    row.sites = pt.sites;
    row.bins = grid.bins();
    row.seed = derive_seed(spec.seed, {spec_hash, k});
    SdConfig config;
    config.restarts = spec.restarts;
    config.max_evals = spec.max_evals;
    config.seed = row.seed;
    config.threads = spec.threads;
    row.replicates = ensemble_descend(problem, grid, config);

    row.q = order_parameter(LandscapeEnsemble::from_results(row.replicates));
    std::vector<double> evals;
    std::vector<double> fids;
    std::size_t best = 0;
    for (std::size_t r = 0; r < row.replicates.size(); ++r) {
      const auto& rep = row.replicates[r];
      evals.push_back(static_cast<double>(rep.fidelity_evaluations) / static_cast<double>(grid.bins()));
      fids.push_back(rep.fidelity);
      if (rep.fidelity > row.replicates[best].fidelity) best = r;
    }
    std::tie(row.evals_per_bin, row.evals_per_bin_stderr) = mean_stderr(evals);
    std::tie(row.mean_fidelity, row.fidelity_stderr) = mean_stderr(fids);
    row.best_fidelity = row.replicates[best].fidelity;
    row.log_fidelity_per_site = -std::log(row.best_fidelity) / pt.sites;
    row.entropy_max = max_entropy(problem, row.replicates[best].protocol);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_scan_long_csv(std::ostream& out, const std::vector<ScanRow>& rows) {
  out << "point,T,dt,L,N_T,replicate,seed,fidelity,fidelity_evaluations,converged\n";
  for (const auto& row : rows) {
    for (std::size_t r = 0; r < row.replicates.size(); ++r) {
      const auto& rep = row.replicates[r];
      out << row.point << ',' << format_double(row.total_time) << ',' << format_double(row.dt) << ',' << row.sites << ','
          << row.bins << ',' << r << ',' << rep.seed << ',' << format_double(rep.fidelity) << ','
          << rep.fidelity_evaluations << ',' << (rep.converged ? 1 : 0) << '\n';
    }
  }
}

void write_scan_summary_csv(std::ostream& out, const std::vector<ScanRow>& rows) {
  out << "point,T,dt,L,N_T,q,evals_per_bin,evals_per_bin_stderr,mean_fidelity,fidelity_stderr,best_fidelity,"
         "neg_log_fidelity_per_site,entropy_half_max_over_time\n";
  for (const auto& r : rows) {
    out << r.point << ',' << format_double(r.total_time) << ',' << format_double(r.dt) << ',' << r.sites << ','
        << r.bins << ',' << format_double(r.q) << ',' << format_double(r.evals_per_bin) << ','
        << format_double(r.evals_per_bin_stderr) << ',' << format_double(r.mean_fidelity) << ','
        << format_double(r.fidelity_stderr) << ',' << format_double(r.best_fidelity) << ','
        << format_double(r.log_fidelity_per_site) << ',' << format_double(r.entropy_max) << '\n';
  }
}

}  // namespace qcontrol
