#include <doctest.h>

#include "qcontrol/protocol.hpp"
#include "qcontrol/quantum.hpp"
#include "qcontrol/random.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <numbers>

using namespace qcontrol;

namespace {

// S^alpha = sigma^alpha / 2 on site j of an L-site chain, built with
// Kronecker products. Site j is bit j, so it sits at position L-1-j
// counting from the left factor.
CMatrix site_operator(const CMatrix& op, int j, int L) {
  CMatrix out = CMatrix::Identity(1, 1);
  for (int k = L - 1; k >= 0; --k) {
    const CMatrix f = (k == j) ? op : CMatrix::Identity(2, 2);
    out = Eigen::kroneckerProduct(out, f).eval();
  }
  return out;
}

CMatrix sz() {
  CMatrix m(2, 2);
  m << 0.5, 0, 0, -0.5;
  return m;
}
CMatrix sx() {
  CMatrix m(2, 2);
  m << 0, 0.5, 0.5, 0;
  return m;
}

// -sum_j (S^z_{j+1} S^z_j + hz S^z_j + h S^x_j), the sum taken literally with j+1 mod L.
CMatrix term_by_term(int L, double hz, double h) {
  const Eigen::Index d = Eigen::Index{1} << L;
  CMatrix H = CMatrix::Zero(d, d);
  for (int j = 0; j < L; ++j) {
    if (L > 1) H -= site_operator(sz(), (j + 1) % L, L) * site_operator(sz(), j, L);
    H -= hz * site_operator(sz(), j, L) + h * site_operator(sx(), j, L);
  }
  return H;
}

CVector random_state(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> g;
  CVector v(d);
  for (Eigen::Index k = 0; k < d; ++k) v(k) = Complex(g(rng), g(rng));
  return v.normalized();
}

Protocol random_protocol(const TimeGrid& grid, Rng& rng, bool bang_bang) {
  std::uniform_real_distribution<double> u(-kFieldMax, kFieldMax);
  std::vector<double> v(grid.bins());
  for (double& x : v) x = bang_bang ? (u(rng) > 0 ? kFieldMax : -kFieldMax) : u(rng);
  return Protocol(grid, v);
}

constexpr double kPhi = std::numbers::phi;

}  // namespace

TEST_CASE("single qubit Hamiltonian at zero field") {
  const SpinChain q(1);
  const RMatrix H = q.hamiltonian(0.0);
  CHECK(H(0, 0) == doctest::Approx(-0.5));
  CHECK(H(1, 1) == doctest::Approx(0.5));
  CHECK(H(0, 1) == 0.0);
  CHECK(H(1, 0) == 0.0);
}

TEST_CASE("qubit ground states match the closed-form vectors") {
  const SpinChain q(1);
  SUBCASE("h = -2") {
    CVector expect(2);
    expect << -0.5 - std::sqrt(5.0) / 2, 1.0;
    expect.normalize();
    const CVector gs = ground_state(q, -2.0);
    CHECK(std::abs(std::abs(expect.dot(gs)) - 1.0) < 1e-12);
    // phase convention: the larger amplitude is real and positive
    CHECK(gs(0).real() == doctest::Approx(kPhi / std::sqrt(1 + kPhi * kPhi)).epsilon(1e-12));
    CHECK(gs(1).real() < 0);
  }
  SUBCASE("h = +2") {
    CVector expect(2);
    expect << 0.5 + std::sqrt(5.0) / 2, 1.0;
    expect.normalize();
    const CVector gs = ground_state(q, 2.0);
    CHECK((gs - expect).norm() < 1e-12);
  }
  SUBCASE("h = 0") {
    const CVector gs = ground_state(q, 0.0);
    CHECK(std::abs(gs(0) - Complex(1.0)) < 1e-14);
    CHECK(std::abs(gs(1)) < 1e-14);
  }
}

TEST_CASE("initial/target overlap of the qubit problem is 1/5") {
  const SpinChain q(1);
  CHECK(fidelity(ground_state(q, -2.0), ground_state(q, 2.0)) == doctest::Approx(0.2).epsilon(1e-14));
  CVector up(2), down(2);
  up << 1, 0;
  down << 0, 1;
  CHECK(fidelity(up, down) == 0.0);
  CHECK(fidelity(up, up) == doctest::Approx(1.0));
}

TEST_CASE("chain Hamiltonian equals the explicit Kronecker sum") {
  for (int L : {2, 3, 4}) {
    for (double h : {0.0, -2.0, 1.3}) {
      const SpinChain chain(L);
      const RMatrix H = chain.hamiltonian(h);
      const CMatrix ref = term_by_term(L, 1.0, h);
      CHECK((H.cast<Complex>() - ref).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  // L=2 at h=0: eigenvalues of both constructions
  const Eigen::SelfAdjointEigenSolver<RMatrix> a(SpinChain(2).hamiltonian(0.0));
  const Eigen::SelfAdjointEigenSolver<CMatrix> b(term_by_term(2, 1.0, 0.0));
  CHECK((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Hamiltonian is Hermitian") {
  Rng rng = make_rng(4);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int L : {1, 3, 6}) {
    const RMatrix H = SpinChain(L).hamiltonian(u(rng));
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("spin chain rejects bad sizes") {
  CHECK_THROWS_AS(SpinChain(0), std::invalid_argument);
  CHECK_THROWS_AS(SpinChain(13), DimensionError);
  CHECK_NOTHROW(SpinChain(13, 1.0, 13));
}

TEST_CASE("entanglement entropy") {
  SUBCASE("Bell state gives ln 2") {
    CVector bell = CVector::Zero(4);
    bell(0) = bell(3) = 1 / std::sqrt(2.0);
    CHECK(entanglement_entropy_half(bell, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("product states give zero") {
    Rng rng = make_rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const CVector a = random_state(8, rng);
      const CVector b = random_state(8, rng);
      // index = a_index + 8 * b_index, first half is the low bits
      CVector prod(64);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) prod(i + 8 * j) = a(i) * b(j);
      CHECK(std::abs(entanglement_entropy_half(prod, 6)) < 1e-12);
    }
  }
  SUBCASE("random states respect the dimension bound") {
    Rng rng = make_rng(10);
    for (int L : {2, 4, 6}) {
      for (int trial = 0; trial < 20; ++trial) {
        const double s = entanglement_entropy_half(random_state(Eigen::Index{1} << L, rng), L);
        CHECK(s >= 0.0);
        CHECK(s <= L / 2 * std::log(2.0) + 1e-12);
      }
    }
  }
  CHECK_THROWS(entanglement_entropy_half(CVector::Zero(8), 3));
}

TEST_CASE("qubit propagation matches the Pauli closed form") {
  // exp(-iHt) = cos(wt/2) + i sin(wt/2) (sz + h sx)/w with w = sqrt(1 + h^2), sigma matrices.
  const SpinChain q(1);
  Rng rng = make_rng(11);
  std::uniform_real_distribution<double> u(-4, 4), t(0.01, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double h = u(rng);
    const double T = t(rng);
    const double w = std::sqrt(1 + h * h);
    CMatrix s(2, 2);
    s << 1, h, h, -1;
    const CMatrix U = std::cos(w * T / 2) * CMatrix::Identity(2, 2) + Complex(0, std::sin(w * T / 2) / w) * s;
    const CVector psi = random_state(2, rng);
    const CVector out = evolve(psi, q, Protocol::constant(TimeGrid::with_bins(T, 1), h));
    CHECK((out - U * psi).norm() < 1e-12);
  }
}

TEST_CASE("propagators are unitary and preserve the norm") {
  Rng rng = make_rng(12);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int L : {1, 4, 6}) {
    const SpinChain chain(L);
    for (int trial = 0; trial < 5; ++trial) {
      const Propagator p = Propagator::make(chain.generator(), u(rng), 0.05 + 0.3 * trial);
      const CMatrix I = CMatrix::Identity(p.unitary.rows(), p.unitary.cols());
      CHECK((p.unitary.adjoint() * p.unitary - I).cwiseAbs().maxCoeff() < 1e-10);
      const CVector psi = random_state(p.unitary.rows(), rng);
      CVector a = psi;
      p.apply(a);
      p.apply_adjoint(a);
      CHECK((a - psi).norm() < 1e-10);
    }
    const TimeGrid grid(2.0, 0.05);
    for (bool bb : {true, false}) {
      const CVector out = evolve(random_state(chain.dimension(), rng), chain, random_protocol(grid, rng, bb));
      CHECK(std::abs(out.norm() - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("energy is conserved within a constant bin") {
  const SpinChain chain(4);
  Rng rng = make_rng(13);
  const double h = 1.7;
  const RMatrix H = chain.hamiltonian(h);
  const CVector psi = random_state(chain.dimension(), rng);
  const Complex e0 = psi.dot(H.cast<Complex>() * psi);
  for (double t : {0.01, 0.3, 2.0}) {
    const CVector out = evolve(psi, chain, Protocol::constant(TimeGrid::with_bins(t, 1), h));
    CHECK(std::abs(out.dot(H.cast<Complex>() * out) - e0) < 1e-10);
  }
}

TEST_CASE("zero-duration protocol is the identity") {
  const SpinChain chain(3);
  const Propagator p = Propagator::make(chain.generator(), 2.5, 0.0);
  CHECK((p.unitary - CMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("time-reversal symmetry of the fidelity") {
  Rng rng = make_rng(14);
  for (int L : {1, 4, 6}) {
    const ControlProblem problem{SpinChain(L)};
    const TimeGrid grid = TimeGrid::with_bins(2.0, 20);
    for (int trial = 0; trial < 20; ++trial) {
      const Protocol p = random_protocol(grid, rng, trial % 2 == 0);
      CHECK(std::abs(problem.fidelity(p) - problem.fidelity(p.time_reversed_negated())) < 1e-10);
    }
  }
}

TEST_CASE("symmetric sector reproduces full-space dynamics") {
  Rng rng = make_rng(15);
  for (int L : {4, 6}) {
    const ControlProblem reduced{SpinChain(L)};
    const ControlProblem full{SpinChain(L), -2.0, 2.0, false};
    CHECK(reduced.reduced());
    CHECK_FALSE(full.reduced());
    CHECK(reduced.dimension() < full.dimension());
    const RMatrix B = symmetric_sector_basis(SpinChain(L));
    CHECK((B.transpose() * B - RMatrix::Identity(B.cols(), B.cols())).cwiseAbs().maxCoeff() < 1e-12);
    const TimeGrid grid = TimeGrid::with_bins(1.5, 15);
    for (int trial = 0; trial < 5; ++trial) {
      const Protocol p = random_protocol(grid, rng, false);
      CHECK(std::abs(reduced.fidelity(p) - full.fidelity(p)) < 1e-12);
      const CVector a = reduced.to_full(reduced.evolve(p));
      const CVector b = full.evolve(p);
      CHECK(std::abs(std::abs(a.dot(b)) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("propagator cache hands back the same entry") {
  const SpinChain chain(2);
  PropagatorCache cache(chain.generator(), 2);
  const auto a = cache.get(4.0, 0.1);
  CHECK(cache.get(4.0, 0.1) == a);
  CHECK(cache.size() == 1);
  cache.get(-4.0, 0.1);
  cache.get(0.0, 0.1);
  CHECK(cache.size() <= 2);
  CHECK((a->unitary - Propagator::make(chain.generator(), 4.0, 0.1).unitary).norm() == 0.0);
}
