#include "qcontrol/variational.hpp"

#include "qcontrol/nelder_mead.hpp"
#include "qcontrol/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>

namespace qcontrol {

namespace {

constexpr double kDegeneracyTolerance = 1e-9;
constexpr double kGolden = 0.6180339887498949;

// Maximizes f on [lo, hi] assuming a single interior maximum.
template <typename F>
std::pair<double, double> golden_maximize(F&& f, double lo, double hi, double tol = 1e-10) {
  double a = lo;
  double b = hi;
  double x1 = b - kGolden * (b - a);
  double x2 = a + kGolden * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = f(x1);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

std::vector<double> tau_grid(double upper, double resolution) {
  std::vector<double> g;
  const auto steps = static_cast<std::size_t>(std::floor(upper / resolution + 1e-9));
  g.reserve(steps + 2);
  for (std::size_t k = 0; k <= steps; ++k) g.push_back(std::min(upper, static_cast<double>(k) * resolution));
  if (upper - g.back() > 1e-12) g.push_back(upper);
  return g;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

VariationalEvaluator::VariationalEvaluator(const ControlProblem& problem)
    : psi_i_(problem.initial_state()), psi_star_(problem.target_state()) {
  auto decompose = [&](double field) {
    Eigen::SelfAdjointEigenSolver<RMatrix> solver(problem.hamiltonian(field));
    return Spectrum{solver.eigenvalues(), solver.eigenvectors()};
  };
  plus_ = decompose(kFieldMax);
  zero_ = decompose(0.0);
  minus_ = decompose(-kFieldMax);
}

const VariationalEvaluator::Spectrum& VariationalEvaluator::spectrum_for(double field) const {
  if (field == kFieldMax) return plus_;
  if (field == -kFieldMax) return minus_;
  if (field == 0.0) return zero_;
  throw std::invalid_argument("variational segments use only the fields -4, 0, +4");
}

void VariationalEvaluator::propagate(CVector& state, double field, double duration) const {
  if (duration == 0.0) return;
  const Spectrum& s = spectrum_for(field);
  CVector coeffs = s.eigenvectors.transpose() * state;
  for (Eigen::Index k = 0; k < coeffs.size(); ++k) coeffs(k) *= std::polar(1.0, -s.energies(k) * duration);
  state.noalias() = s.eigenvectors * coeffs;
}

double VariationalEvaluator::fidelity(std::span<const Segment> segments) const {
  CVector psi = psi_i_;
  for (const Segment& seg : segments) propagate(psi, seg.field, seg.duration);
  return qcontrol::fidelity(psi, psi_star_);
}

double VariationalEvaluator::fidelity_1d(double tau1, double total_time) const {
  const VariationalParams p(tau1, 0.0, total_time);
  const auto segments = variational_segments(p);
  return fidelity(segments);
}

double VariationalEvaluator::fidelity_2d(double tau1, double tau2, double total_time) const {
  const VariationalParams p(tau1, tau2, total_time);
  const std::array<Segment, 5> segments{{{kFieldMax, tau1 / 2},
                                         {-kFieldMax, tau2 / 2},
                                         {0.0, std::max(0.0, p.free_time())},
                                         {kFieldMax, tau2 / 2},
                                         {-kFieldMax, tau1 / 2}}};
  return fidelity(segments);
}

VariationalOptimum maximize_1d(const VariationalEvaluator& eval, double total_time, double tau_resolution) {
  const auto grid = tau_grid(total_time, tau_resolution);
  std::vector<double> f(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) f[k] = eval.fidelity_1d(grid[k], total_time);
  const auto best = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());

  VariationalOptimum out{grid[best], 0.0, f[best], false};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const bool local_max = (k == 0 || f[k] >= f[k - 1]) && (k + 1 == grid.size() || f[k] >= f[k + 1]);
    if (local_max && k != best && f[k] >= f[best] - kDegeneracyTolerance &&
        std::abs(grid[k] - grid[best]) > 2 * tau_resolution) {
      out.degenerate = true;
    }
  }

  const double lo = grid[best > 0 ? best - 1 : 0];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  if (hi > lo) {
    const auto [x, fx] = golden_maximize([&](double t) { return eval.fidelity_1d(t, total_time); }, lo, hi);
    if (fx > out.fidelity) {
      out.tau1 = x;
      out.fidelity = fx;
    }
  }
  return out;
}

VariationalOptimum maximize_2d(const VariationalEvaluator& eval, double total_time, double tau_resolution) {
  const auto grid = tau_grid(total_time, tau_resolution);
  VariationalOptimum out{0.0, 0.0, -1.0, false};
  struct Candidate {
    double tau1, tau2, f;
  };
  std::vector<Candidate> samples;
  for (double t1 : grid) {
    for (double t2 : grid) {
      if (t1 + t2 > total_time + 1e-12) break;
      const double t2c = std::max(0.0, std::min(t2, total_time - t1));
      const double f = eval.fidelity_2d(t1, t2c, total_time);
      samples.push_back({t1, t2c, f});
      if (f > out.fidelity) out = {t1, t2c, f, false};
    }
  }
  for (const auto& c : samples) {
    if (c.f >= out.fidelity - kDegeneracyTolerance &&
        std::hypot(c.tau1 - out.tau1, c.tau2 - out.tau2) > 3 * tau_resolution) {
      out.degenerate = true;
      break;
    }
  }

  // The optimum often sits on a ridge running diagonally in (tau1, tau2), where
  // coordinate searches crawl. Nelder-Mead on the projected point instead.
  auto project = [&](std::span<const double> x) {
    const double t1 = std::clamp(x[0], 0.0, total_time);
    return std::pair{t1, std::clamp(x[1], 0.0, total_time - t1)};
  };
  NelderMeadOptions nm;
  nm.initial_step = tau_resolution;
  nm.tolerance = 1e-15;
  nm.max_iters = 2000;
  const auto refined = nelder_mead(
      [&](std::span<const double> x) {
        const auto [t1, t2] = project(x);
        return -eval.fidelity_2d(t1, t2, total_time);
      },
      {out.tau1, out.tau2}, nm);
  if (-refined.value > out.fidelity) {
    const auto [t1, t2] = project(refined.x);
    out.tau1 = t1;
    out.tau2 = t2;
    out.fidelity = -refined.value;
  }
  return out;
}

std::vector<std::size_t> detect_kinks(std::span<const double> times, std::span<const double> values,
                                      const ScanOptions& options) {
  const std::size_t n = times.size();
  std::vector<std::size_t> kinks;
  if (n < 3) return kinks;
  std::vector<double> slope(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
  // jump[i] sits at point i + 1.
  std::vector<double> jump(n - 2);
  for (std::size_t i = 0; i + 1 < slope.size(); ++i) jump[i] = std::abs(slope[i + 1] - slope[i]);

  std::vector<bool> flagged(jump.size(), false);
  for (std::size_t i = 0; i < jump.size(); ++i) {
    const std::size_t lo = i > options.median_window ? i - options.median_window : 0;
    const std::size_t hi = std::min(jump.size(), i + options.median_window + 1);
    std::vector<double> window;
    for (std::size_t j = lo; j < hi; ++j) {
      if (j != i) window.push_back(jump[j]);
    }
    flagged[i] = jump[i] > options.jump_factor * median(window) && jump[i] > options.min_jump;
  }
  for (std::size_t i = 0; i < jump.size();) {
    if (!flagged[i]) {
      ++i;
      continue;
    }
    std::size_t best = i;
    std::size_t j = i;
    while (j < jump.size() && flagged[j]) {
      if (jump[j] > jump[best]) best = j;
      ++j;
    }
    kinks.push_back(best + 1);
    i = j;
  }
  return kinks;
}

VariationalScan scan_critical_points(const ControlProblem& problem, std::span<const double> times,
                                     const ScanOptions& options) {
  const VariationalEvaluator eval(problem);
  VariationalScan scan;
  scan.tau_resolution = options.tau_resolution;
  scan.two_parameter = options.two_parameter;
  scan.points.resize(times.size());
  parallel_for(
      times.size(),
      [&](std::size_t i) {
        const double t = times[i];
        const auto opt = options.two_parameter ? maximize_2d(eval, t, options.tau_resolution)
                                               : maximize_1d(eval, t, options.tau_resolution);
        scan.points[i] = {t, opt.tau1, opt.tau2, opt.fidelity, false, opt.degenerate};
      },
      options.threads);

  std::vector<double> tau1(times.size());
  std::vector<double> tau2(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    tau1[i] = scan.points[i].tau1;
    tau2[i] = scan.points[i].tau2;
  }
  std::vector<std::size_t> found = detect_kinks(times, tau1, options);
  if (options.two_parameter) {
    for (std::size_t k : detect_kinks(times, tau2, options)) {
      const bool near = std::any_of(found.begin(), found.end(),
                                    [&](std::size_t f) { return (f > k ? f - k : k - f) <= 2; });
      if (!near) found.push_back(k);
    }
    std::sort(found.begin(), found.end());
  }
  for (std::size_t k : found) {
    scan.points[k].kink = true;
    scan.kinks.push_back(times[k]);
  }
  return scan;
}

}  // namespace qcontrol
