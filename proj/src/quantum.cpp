#include "qcontrol/quantum.hpp"

#include "qcontrol/protocol.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <string>
#include <vector>

namespace qcontrol {

namespace {

// S^z eigenvalue of site `site` in basis state `index`.
double sz(std::size_t index, int site) {
  return ((index >> site) & 1U) ? -0.5 : 0.5;
}

}  // namespace

SpinChain::SpinChain(int sites, double hz, int max_sites) : sites_(sites), hz_(hz) {
  if (sites < 1) throw std::invalid_argument("SpinChain needs at least one site");
  if (sites > max_sites) {
    throw DimensionError("L = " + std::to_string(sites) + " exceeds the configured maximum of " +
                         std::to_string(max_sites) + " sites");
  }
  if (!std::isfinite(hz)) throw std::invalid_argument("h_z must be finite");

  const auto dim = static_cast<Eigen::Index>(dimension());
  RVector& drift = generator_.drift;
  RMatrix& control = generator_.control;
  drift = RVector::Zero(dim);
  control = RMatrix::Zero(dim, dim);
  for (Eigen::Index s = 0; s < dim; ++s) {
    const auto idx = static_cast<std::size_t>(s);
    double diag = 0.0;
    for (int j = 0; j < sites_; ++j) {
      if (sites_ > 1) diag -= sz(idx, (j + 1) % sites_) * sz(idx, j);
      diag -= hz_ * sz(idx, j);
      // S^x_j flips bit j with matrix element 1/2.
      control(static_cast<Eigen::Index>(idx ^ (std::size_t{1} << j)), s) -= 0.5;
    }
    drift(s) = diag;
  }
}

RMatrix Generator::hamiltonian(double hx) const {
  if (!std::isfinite(hx)) throw std::invalid_argument("field must be finite");
  RMatrix h = hx * control;
  h.diagonal() += drift;
  return h;
}

RMatrix SpinChain::hamiltonian(double hx) const { return generator_.hamiltonian(hx); }

RMatrix symmetric_sector_basis(const SpinChain& system) {
  const int l = system.sites();
  const std::size_t dim = system.dimension();
  const std::size_t mask = dim - 1;
  auto rotate = [&](std::size_t x) { return ((x << 1) | (x >> (l - 1))) & mask; };
  auto reflect = [&](std::size_t x) {
    std::size_t r = 0;
    for (int j = 0; j < l; ++j) r |= ((x >> j) & 1U) << (l - 1 - j);
    return r;
  };
  std::vector<long> orbit_of(dim, -1);
  std::vector<std::vector<std::size_t>> orbits;
  for (std::size_t s = 0; s < dim; ++s) {
    if (orbit_of[s] >= 0) continue;
    std::vector<std::size_t> members;
    std::size_t x = s;
    for (int r = 0; r < l; ++r) {
      for (std::size_t y : {x, reflect(x)}) {
        if (orbit_of[y] < 0) {
          orbit_of[y] = static_cast<long>(orbits.size());
          members.push_back(y);
        }
      }
      x = rotate(x);
    }
    orbits.push_back(std::move(members));
  }
  RMatrix basis = RMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(orbits.size()));
  for (std::size_t k = 0; k < orbits.size(); ++k) {
    const double amp = 1.0 / std::sqrt(static_cast<double>(orbits[k].size()));
    for (std::size_t y : orbits[k]) basis(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(k)) = amp;
  }
  return basis;
}

CVector ground_state(const SpinChain& system, double hx) {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(system.hamiltonian(hx));
  const RVector& energies = solver.eigenvalues();
  if (energies.size() > 1 && energies(1) - energies(0) < 1e-10) {
    throw DegenerateGroundState("ground state of H(" + std::to_string(hx) + ") is degenerate");
  }
  RVector v = solver.eigenvectors().col(0);
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0) v = -v;
  v.normalize();
  return v.cast<Complex>();
}

double fidelity(const CVector& state, const CVector& target) {
  return std::norm(target.dot(state));
}

double entanglement_entropy_half(const CVector& state, int sites) {
  if (sites < 2 || sites % 2 != 0) {
    throw std::invalid_argument("half-chain entropy needs an even number of sites >= 2");
  }
  const Eigen::Index half = Eigen::Index{1} << (sites / 2);
  if (state.size() != half * half) throw std::invalid_argument("state dimension does not match L");
  // Index = a + half * b with a the first L/2 sites: column-major reshape
  // gives rows = first half, columns = second half.
  const Eigen::Map<const CMatrix> amplitudes(state.data(), half, half);
  Eigen::JacobiSVD<CMatrix> svd(amplitudes);
  double entropy = 0.0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
    const double p = svd.singularValues()(k) * svd.singularValues()(k);
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::max(entropy, 0.0);
}

Propagator Propagator::make(const Generator& generator, double field, double duration) {
  Eigen::SelfAdjointEigenSolver<RMatrix> solver(generator.hamiltonian(field));
  Propagator p;
  p.field = field;
  p.duration = duration;
  p.energies = solver.eigenvalues();
  p.eigenvectors = solver.eigenvectors();
  CVector phases(p.energies.size());
  for (Eigen::Index k = 0; k < phases.size(); ++k) {
    phases(k) = std::polar(1.0, -p.energies(k) * duration);
  }
  const CMatrix v = p.eigenvectors.cast<Complex>();
  p.unitary = v * phases.asDiagonal() * v.transpose();
  return p;
}

void Propagator::apply(CVector& state) const {
  CVector out(state.size());
  out.noalias() = unitary * state;
  state.swap(out);
}

void Propagator::apply_adjoint(CVector& state) const {
  CVector out(state.size());
  out.noalias() = unitary.adjoint() * state;
  state.swap(out);
}

PropagatorCache::PropagatorCache(Generator generator, std::size_t capacity)
    : generator_(std::move(generator)), capacity_(capacity) {}

std::shared_ptr<const Propagator> PropagatorCache::get(double field, double duration) const {
  const auto key = std::make_pair(field, duration);
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  auto made = std::make_shared<const Propagator>(Propagator::make(generator_, field, duration));
  std::unique_lock lock(mutex_);
  if (entries_.size() >= capacity_) entries_.clear();
  return entries_.emplace(key, std::move(made)).first->second;
}

std::size_t PropagatorCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

CVector evolve(const CVector& state, const Protocol& protocol, const PropagatorCache& cache) {
  if (state.size() != cache.generator().dimension()) {
    throw std::invalid_argument("state dimension does not match the system");
  }
  CVector psi = state;
  const double dt = protocol.grid().dt();
  for (double h : protocol.values()) cache.get(h, dt)->apply(psi);
  return psi;
}

CVector evolve(const CVector& state, const SpinChain& system, const Protocol& protocol) {
  const PropagatorCache cache(system.generator());
  return evolve(state, protocol, cache);
}

ControlProblem::ControlProblem(SpinChain system, double h_initial, double h_target, bool use_symmetry)
    : system_(std::move(system)), h_initial_(h_initial), h_target_(h_target) {
  const CVector full_i = ground_state(system_, h_initial);
  const CVector full_star = ground_state(system_, h_target);
  if (use_symmetry && system_.sites() > 1) {
    RMatrix p = symmetric_sector_basis(system_);
    auto inside = [&](const CVector& v) { return (p * (p.transpose() * v) - v).norm() < 1e-12; };
    if (p.cols() < p.rows() && inside(full_i) && inside(full_star)) basis_ = std::move(p);
  }
  if (reduced()) {
    const Generator& g = system_.generator();
    Generator r;
    r.drift = (basis_.transpose() * g.drift.asDiagonal() * basis_).diagonal();
    r.control = basis_.transpose() * g.control * basis_;
    cache_ = std::make_shared<PropagatorCache>(std::move(r));
    psi_i_ = basis_.transpose().cast<Complex>() * full_i;
    psi_star_ = basis_.transpose().cast<Complex>() * full_star;
  } else {
    cache_ = std::make_shared<PropagatorCache>(system_.generator());
    psi_i_ = full_i;
    psi_star_ = full_star;
  }
}

CVector ControlProblem::evolve(const Protocol& protocol) const {
  return qcontrol::evolve(psi_i_, protocol, *cache_);
}

double ControlProblem::fidelity(const Protocol& protocol) const {
  return qcontrol::fidelity(evolve(protocol), psi_star_);
}

CVector ControlProblem::to_full(const CVector& state) const {
  if (!reduced()) return state;
  return basis_.cast<Complex>() * state;
}

}  // namespace qcontrol
