#include "qcontrol/grape.hpp"

#include "qcontrol/parallel.hpp"
#include "qcontrol/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace qcontrol {

namespace {

struct BinSpectrum {
  RVector energies;
  RMatrix vectors;
};

// Everything one pass over a protocol produces.
struct Sweep {
  std::vector<BinSpectrum> bins;
  std::vector<CVector> forward;  // psi_0 .. psi_N
  double dt = 0.0;
  double fidelity = 0.0;
};

void apply_spectral(const BinSpectrum& s, double dt, double sign, CVector& psi) {
  CVector c = s.vectors.transpose() * psi;
  for (Eigen::Index k = 0; k < c.size(); ++k) c(k) *= std::polar(1.0, -sign * s.energies(k) * dt);
  psi.noalias() = s.vectors * c;
}

Sweep forward_sweep(const ControlProblem& problem, double dt, std::span<const double> values) {
  const Generator& system = problem.generator();
  Sweep sw;
  sw.dt = dt;
  sw.bins.reserve(values.size());
  sw.forward.reserve(values.size() + 1);
  sw.forward.push_back(problem.initial_state());
  for (double h : values) {
    Eigen::SelfAdjointEigenSolver<RMatrix> solver(system.hamiltonian(h));
    sw.bins.push_back({solver.eigenvalues(), solver.eigenvectors()});
    CVector psi = sw.forward.back();
    apply_spectral(sw.bins.back(), dt, 1.0, psi);
    sw.forward.push_back(std::move(psi));
  }
  sw.fidelity = fidelity(sw.forward.back(), problem.target_state());
  return sw;
}

std::vector<double> exact_gradient(const ControlProblem& problem, const Sweep& sw) {
  const std::size_t n_bins = sw.bins.size();
  const RMatrix& x = problem.control_operator();
  const Complex amp = problem.target_state().dot(sw.forward.back());  // <psi_*|psi(T)>
  std::vector<double> grad(n_bins, 0.0);
  CVector chi = problem.target_state();  // chi_{n+1}
  for (std::size_t n = n_bins; n-- > 0;) {
    const BinSpectrum& s = sw.bins[n];
    const RMatrix m = s.vectors.transpose() * x * s.vectors;
    const CVector a = s.vectors.transpose() * sw.forward[n];
    const CVector b = s.vectors.transpose() * chi;
    const Eigen::Index d = a.size();
    // d/dh exp(-i E dt) in the eigenbasis: G_jk m_jk with G the divided
    // difference, written so it stays accurate for (near) equal energies.
    Complex acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      Complex row = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double mean = 0.5 * (s.energies(j) + s.energies(k));
        const double half = 0.5 * (s.energies(j) - s.energies(k)) * sw.dt;
        const double sinc = half == 0.0 ? 1.0 : std::sin(half) / half;
        const Complex g = Complex(0.0, -sw.dt) * std::polar(1.0, -mean * sw.dt) * sinc;
        row += std::conj(b(j)) * g * m(j, k);
      }
      acc += row * a(k);
    }
    grad[n] = 2.0 * std::real(std::conj(amp) * acc);
    apply_spectral(s, sw.dt, -1.0, chi);
  }
  return grad;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double fidelity_of_values(const ControlProblem& problem, const TimeGrid& grid, std::span<const double> values) {
  if (values.size() != grid.bins()) throw ProtocolError("value count does not match the grid");
  CVector psi = problem.initial_state();
  for (double h : values) {
    Eigen::SelfAdjointEigenSolver<RMatrix> solver(problem.hamiltonian(h));
    apply_spectral({solver.eigenvalues(), solver.eigenvectors()}, grid.dt(), 1.0, psi);
  }
  return fidelity(psi, problem.target_state());
}

FidelityGradient fidelity_gradient(const ControlProblem& problem, const Protocol& protocol) {
  const Sweep sw = forward_sweep(problem, protocol.grid().dt(), protocol.values());
  return {sw.fidelity, exact_gradient(problem, sw)};
}

std::vector<double> fidelity_gradient_first_order(const ControlProblem& problem, const Protocol& protocol) {
  const Sweep sw = forward_sweep(problem, protocol.grid().dt(), protocol.values());
  const RMatrix& x = problem.control_operator();
  const Complex amp = problem.target_state().dot(sw.forward.back());
  std::vector<double> grad(sw.bins.size(), 0.0);
  CVector phi = problem.target_state();
  for (std::size_t n = sw.bins.size(); n-- > 0;) {
    // phi here is U(T, t_{n+1})^dag psi_*; scaled by conj(amp) below.
    const CVector x_psi = x * sw.forward[n + 1];
    grad[n] = 2.0 * std::imag(std::conj(amp) * phi.dot(x_psi)) * sw.dt;
    apply_spectral(sw.bins[n], sw.dt, -1.0, phi);
  }
  return grad;
}

double gradient_audit_error(const ControlProblem& problem, const Protocol& protocol, const std::vector<double>& gradient,
                            double step) {
  std::vector<double> v(protocol.values().begin(), protocol.values().end());
  double worst = 0.0;
  const double scale = std::max(max_abs(gradient), 1e-12);
  for (std::size_t n = 0; n < v.size(); ++n) {
    const double h = v[n];
    v[n] = h + step;
    const double up = fidelity_of_values(problem, protocol.grid(), v);
    v[n] = h - step;
    const double down = fidelity_of_values(problem, protocol.grid(), v);
    v[n] = h;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - gradient[n]) / scale);
  }
  return worst;
}

GrapeRun ascend_from(const ControlProblem& problem, const Protocol& start, const GrapeConfig& config) {
  if (!(config.eps0 > 0.0)) throw std::invalid_argument("eps0 must be positive");
  const TimeGrid& grid = start.grid();
  std::vector<double> h(start.values().begin(), start.values().end());

  Sweep current = forward_sweep(problem, grid.dt(), h);
  std::vector<double> grad = exact_gradient(problem, current);
  GrapeRun run{{start, current.fidelity, {current.fidelity}, 1, 0, false}, {}};
  auto record = [&](std::size_t iter, double step) {
    GrapeStep st{iter, current.fidelity, step, norm2(grad), 0.0};
    if (config.audit) st.audit_error = gradient_audit_error(problem, Protocol(grid, h), grad);
    run.steps.push_back(st);
  };
  record(0, 0.0);

  double scale = 1.0;
  std::size_t accepted = 1;
  std::vector<double> trial(h.size());
  for (std::size_t iter = 1; iter <= config.max_iters; ++iter) {
    const double eps = scale * config.eps0 / std::sqrt(static_cast<double>(accepted));
    for (std::size_t n = 0; n < h.size(); ++n) trial[n] = std::clamp(h[n] + eps * grad[n], -kFieldMax, kFieldMax);
    if (trial == h) {
      run.result.converged = true;
      break;
    }
    Sweep next = forward_sweep(problem, grid.dt(), trial);
    ++run.result.fidelity_evaluations;
    if (next.fidelity < current.fidelity) {
      scale *= 0.5;
      continue;
    }
    const double gain = next.fidelity - current.fidelity;
    h = trial;
    current = std::move(next);
    grad = exact_gradient(problem, current);
    ++accepted;
    run.result.trace.push_back(current.fidelity);
    record(iter, eps);
    if (gain < config.tolerance) {
      run.result.converged = true;
      break;
    }
  }
  run.result.protocol = Protocol(grid, h);
  run.result.fidelity = current.fidelity;
  return run;
}

GrapeRun ascend(const ControlProblem& problem, const TimeGrid& grid, const GrapeConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> field(-kFieldMax, kFieldMax);
  std::vector<double> v(grid.bins());
  for (double& x : v) x = field(rng);
  GrapeRun run = ascend_from(problem, Protocol(grid, std::move(v)), config);
  run.result.seed = seed;
  return run;
}

std::vector<GrapeRun> ensemble_ascend(const ControlProblem& problem, const TimeGrid& grid, const GrapeConfig& config) {
  std::vector<GrapeRun> runs(config.restarts, GrapeRun{{Protocol::constant(grid, 0.0), 0.0, {}, 0, 0, false}, {}});
  parallel_for(
      config.restarts,
      [&](std::size_t r) { runs[r] = ascend(problem, grid, config, derive_seed(config.seed, {r})); },
      config.threads);
  return runs;
}

}  // namespace qcontrol
