#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <utility>

namespace qcontrol {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

class Protocol;

inline constexpr int kDefaultMaxSites = 12;

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateGroundState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// H(h) = diag(drift) + h control, real symmetric, in some orthonormal basis.
struct Generator {
  RVector drift;
  RMatrix control;

  Eigen::Index dimension() const noexcept { return drift.size(); }
  RMatrix hamiltonian(double hx) const;
};

// Closed chain of L spin-1/2 sites with unit Ising coupling:
//   H(h) = -sum_j (S^z_{j+1} S^z_j + h_z S^z_j + h S^x_j),  site L+1 == 1.
// A single site reduces to H(h) = -h_z S^z - h S^x (no self-coupling term).
// Basis index bit j holds site j; bit value 0 is spin up (S^z = +1/2).
class SpinChain {
 public:
  explicit SpinChain(int sites, double hz = 1.0, int max_sites = kDefaultMaxSites);

  int sites() const noexcept { return sites_; }
  double hz() const noexcept { return hz_; }
  std::size_t dimension() const noexcept { return std::size_t{1} << sites_; }

  // Field-independent part H_0 (diagonal in the computational basis).
  const RVector& drift_diagonal() const noexcept { return generator_.drift; }
  // Control operator X = dH/dh = -sum_j S^x_j.
  const RMatrix& control_operator() const noexcept { return generator_.control; }
  const Generator& generator() const noexcept { return generator_; }

  // Dense real-symmetric H(h) = H_0 + h X.
  RMatrix hamiltonian(double hx) const;

 private:
  int sites_;
  double hz_;
  Generator generator_;
};

// Orthonormal basis (columns) of the subspace invariant under every lattice
// translation and the reflection j -> L-1-j: one normalized orbit sum per
// orbit of basis states. H(h) maps this subspace to itself.
RMatrix symmetric_sector_basis(const SpinChain& system);

// Unit-norm lowest eigenvector of H(hx). The largest-magnitude amplitude is
// made real and positive. Throws DegenerateGroundState if the gap < 1e-10.
CVector ground_state(const SpinChain& system, double hx);

double fidelity(const CVector& state, const CVector& target);

// von Neumann entropy (natural log) of the first L/2 sites.
double entanglement_entropy_half(const CVector& state, int sites);

// exp(-i H(field) duration), stored together with the eigendecomposition of
// H(field) so derivatives with respect to the field can reuse it.
struct Propagator {
  double field = 0.0;
  double duration = 0.0;
  RVector energies;
  RMatrix eigenvectors;
  CMatrix unitary;

  static Propagator make(const Generator& generator, double field, double duration);

  void apply(CVector& state) const;
  void apply_adjoint(CVector& state) const;
};

// Keyed by exact (field, duration). Concurrent lookups take a shared lock;
// insertion takes the exclusive one. Cleared wholesale once it exceeds
// `capacity` entries so quasi-continuous runs don't grow without bound.
class PropagatorCache {
 public:
  explicit PropagatorCache(Generator generator, std::size_t capacity = 4096);

  PropagatorCache(const PropagatorCache&) = delete;
  PropagatorCache& operator=(const PropagatorCache&) = delete;

  const Generator& generator() const noexcept { return generator_; }

  std::shared_ptr<const Propagator> get(double field, double duration) const;
  std::size_t size() const;

 private:
  Generator generator_;
  std::size_t capacity_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<const Propagator>> entries_;
};

CVector evolve(const CVector& state, const Protocol& protocol, const PropagatorCache& cache);
CVector evolve(const CVector& state, const SpinChain& system, const Protocol& protocol);

// Initial/target pair (ground states at h_initial and h_target) plus a shared
// propagator cache: everything needed to score a protocol. Both ground states
// lie in the translation- and reflection-symmetric sector, which the dynamics
// never leaves, so by default all states live in that sector's basis (13
// states instead of 64 at L = 6). to_full() maps back to the spin basis.
class ControlProblem {
 public:
  ControlProblem(SpinChain system, double h_initial = -2.0, double h_target = 2.0, bool use_symmetry = true);

  const SpinChain& system() const noexcept { return system_; }
  // Generator in the working basis.
  const Generator& generator() const noexcept { return cache_->generator(); }
  Eigen::Index dimension() const noexcept { return generator().dimension(); }
  RMatrix hamiltonian(double hx) const { return generator().hamiltonian(hx); }
  const RMatrix& control_operator() const noexcept { return generator().control; }
  bool reduced() const noexcept { return basis_.size() > 0; }

  const CVector& initial_state() const noexcept { return psi_i_; }
  const CVector& target_state() const noexcept { return psi_star_; }
  double h_initial() const noexcept { return h_initial_; }
  double h_target() const noexcept { return h_target_; }
  const PropagatorCache& cache() const noexcept { return *cache_; }

  CVector evolve(const Protocol& protocol) const;
  double fidelity(const Protocol& protocol) const;
  CVector to_full(const CVector& state) const;

 private:
  SpinChain system_;
  RMatrix basis_;  // empty when working in the full space
  std::shared_ptr<PropagatorCache> cache_;
  double h_initial_;
  double h_target_;
  CVector psi_i_;
  CVector psi_star_;
};

}  // namespace qcontrol
