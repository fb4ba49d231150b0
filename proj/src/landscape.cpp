#include "qcontrol/landscape.hpp"

#include "qcontrol/parallel.hpp"
#include "qcontrol/sd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qcontrol {

LandscapeEnsemble LandscapeEnsemble::from_results(std::span<const OptimizationResult> results) {
  LandscapeEnsemble e;
  for (const auto& r : results) {
    e.protocols.push_back(r.protocol);
    e.fidelities.push_back(r.fidelity);
  }
  return e;
}

double order_parameter(std::span<const Protocol> protocols) {
  if (protocols.size() < 2) throw std::invalid_argument("order parameter needs at least two protocols");
  const TimeGrid& grid = protocols.front().grid();
  for (const auto& p : protocols) {
    if (!(p.grid() == grid)) throw std::invalid_argument("order parameter: protocols on mixed grids");
  }
  const std::size_t n_bins = grid.bins();
  const auto n_real = static_cast<double>(protocols.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < n_bins; ++n) {
    double mean = 0.0;
    for (const auto& p : protocols) mean += p[n];
    mean /= n_real;
    double var = 0.0;
    for (const auto& p : protocols) var += (p[n] - mean) * (p[n] - mean);
    sum += var / n_real;
  }
  return sum / (kFieldMax * kFieldMax * static_cast<double>(n_bins));
}

double order_parameter(const LandscapeEnsemble& ensemble) { return order_parameter(ensemble.protocols); }

double protocol_overlap(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("overlap needs equal, non-empty protocols");
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) s += a[n] * b[n];
  return s / (kFieldMax * kFieldMax * static_cast<double>(a.size()));
}

std::uint64_t DosResult::total() const { return std::accumulate(histogram.begin(), histogram.end(), std::uint64_t{0}); }

namespace {

// Time-reversed partners have equal fidelity up to roundoff; differences
// below this are ties.
constexpr double kFidelityTie = 1e-12;

constexpr std::size_t kBlockColumns = 256;

struct HalfTables {
  std::size_t first_bins = 0;  // bins in the forward half
  CMatrix forward;             // column p: prefix bits p over bins [0, first_bins)
  CMatrix backward;            // column s: suffix bits s over bins [first_bins, N_T)
};

HalfTables build_tables(const ControlProblem& problem, const TimeGrid& grid) {
  const std::size_t n_bins = grid.bins();
  const std::size_t m = n_bins / 2;
  const std::size_t rest = n_bins - m;
  const auto up = problem.cache().get(kFieldMax, grid.dt());
  const auto down = problem.cache().get(-kFieldMax, grid.dt());
  const Eigen::Index dim = problem.initial_state().size();

  HalfTables t;
  t.first_bins = m;
  t.forward.resize(dim, Eigen::Index{1} << m);
  t.forward.col(0) = problem.initial_state();
  // Level j holds 2^j prefixes; bit j of the index is bin j.
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::Index width = Eigen::Index{1} << j;
    for (Eigen::Index p = width - 1; p >= 0; --p) {
      t.forward.col(p + width).noalias() = up->unitary * t.forward.col(p);
      const CVector tmp = down->unitary * t.forward.col(p);
      t.forward.col(p) = tmp;
    }
  }

  // Suffixes grow from the last bin backwards. After j levels, column r holds
  // the top j bits of the suffix index; the newly added bin is the new low bit.
  CMatrix level(dim, Eigen::Index{1} << rest);
  CMatrix next(dim, Eigen::Index{1} << rest);
  level.col(0) = problem.target_state();
  for (std::size_t j = 0; j < rest; ++j) {
    const Eigen::Index width = Eigen::Index{1} << j;
    for (Eigen::Index r = 0; r < width; ++r) {
      next.col(2 * r).noalias() = down->unitary.adjoint() * level.col(r);
      next.col(2 * r + 1).noalias() = up->unitary.adjoint() * level.col(r);
    }
    level.swap(next);
  }
  t.backward = std::move(level);
  return t;
}

// Visits every protocol's fidelity block by block. visit(bits, fidelity) is
// called from the worker owning the block; `Acc` holds per-block state.
template <typename Acc, typename Visit>
std::vector<Acc> for_each_fidelity(const HalfTables& t, unsigned threads, Visit&& visit) {
  const auto n_prefix = static_cast<std::size_t>(t.forward.cols());
  const std::size_t n_blocks = (n_prefix + kBlockColumns - 1) / kBlockColumns;
  std::vector<Acc> acc(n_blocks);
  parallel_for(
      n_blocks,
      [&](std::size_t b) {
        const auto start = static_cast<Eigen::Index>(b * kBlockColumns);
        const auto cols = std::min<Eigen::Index>(kBlockColumns, t.forward.cols() - start);
        const CMatrix overlaps = t.backward.adjoint() * t.forward.middleCols(start, cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
          const auto prefix = static_cast<std::uint64_t>(start + c);
          for (Eigen::Index s = 0; s < overlaps.rows(); ++s) {
            const std::uint64_t bits = prefix | (static_cast<std::uint64_t>(s) << t.first_bins);
            visit(acc[b], bits, std::norm(overlaps(s, c)));
          }
        }
      },
      threads);
  return acc;
}

std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n) return out;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

}  // namespace

std::size_t dos_memory_estimate(std::size_t dimension, std::size_t bins) {
  const std::size_t m = bins / 2;
  const std::size_t rest = bins - m;
  const std::size_t columns = (std::size_t{1} << m) + 3 * (std::size_t{1} << rest);
  return sizeof(Complex) * (dimension * columns + kBlockColumns * (std::size_t{1} << rest));
}

DosResult exhaustive_dos(const ControlProblem& problem, const TimeGrid& grid, const DosOptions& options) {
  const std::size_t n_bins = grid.bins();
  if (n_bins > options.max_bins || n_bins > 62) {
    throw ResourceCapError("exhaustive enumeration capped at N_T = " + std::to_string(options.max_bins) +
                           ", got " + std::to_string(n_bins));
  }
  const std::size_t need = dos_memory_estimate(static_cast<std::size_t>(problem.dimension()), n_bins);
  if (need > options.memory_limit_bytes) {
    throw ResourceCapError("exhaustive enumeration needs " + std::to_string(need) + " bytes, limit is " +
                           std::to_string(options.memory_limit_bytes));
  }
  if (!(options.bin_width > 0.0)) throw std::invalid_argument("histogram bin width must be positive");

  const HalfTables tables = build_tables(problem, grid);
  const auto n_hist = static_cast<std::size_t>(std::ceil(1.0 / options.bin_width - 1e-9));

  struct Block {
    std::vector<std::uint64_t> histogram;
    double best = -1.0;
    std::uint64_t best_bits = 0;
  };
  auto blocks = for_each_fidelity<Block>(tables, options.threads, [&](Block& b, std::uint64_t bits, double f) {
    if (b.histogram.empty()) b.histogram.assign(n_hist, 0);
    const auto k = std::min(n_hist - 1, static_cast<std::size_t>(std::max(0.0, f) / options.bin_width));
    ++b.histogram[k];
    if (f > b.best + kFidelityTie || (f >= b.best - kFidelityTie && bits < b.best_bits)) {
      b.best = f;
      b.best_bits = bits;
    }
  });

  DosResult out;
  out.bins = n_bins;
  out.bin_width = options.bin_width;
  out.histogram.assign(n_hist, 0);
  out.optimal_fidelity = -1.0;
  for (const auto& b : blocks) {
    for (std::size_t k = 0; k < b.histogram.size(); ++k) out.histogram[k] += b.histogram[k];
    if (b.best > out.optimal_fidelity + kFidelityTie ||
        (b.best >= out.optimal_fidelity - kFidelityTie && b.best_bits < out.optimal_bits)) {
      out.optimal_fidelity = b.best;
      out.optimal_bits = b.best_bits;
    }
  }

  const BangBangEvaluator optimum(problem, Protocol::from_bits(grid, out.optimal_bits));
  std::vector<double> thresholds;
  for (std::size_t k : options.flip_orders) {
    auto& list = out.excitations[k];
    for (const auto& subset : subsets(n_bins, k)) list.push_back(optimum.fidelity_with_flips(subset));
    thresholds.push_back(list.empty() ? out.optimal_fidelity : *std::max_element(list.begin(), list.end()));
  }

  if (!thresholds.empty()) {
    using Counts = std::vector<std::uint64_t>;
    auto counts = for_each_fidelity<Counts>(tables, options.threads, [&](Counts& c, std::uint64_t, double f) {
      if (c.empty()) c.assign(thresholds.size(), 0);
      for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (f > thresholds[i] + kFidelityTie) ++c[i];
      }
    });
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      std::uint64_t total = 0;
      for (const auto& c : counts) total += c.empty() ? 0 : c[i];
      out.count_above[options.flip_orders[i]] = total;
    }
  }
  return out;
}

std::vector<double> enumerate_fidelities(const ControlProblem& problem, const TimeGrid& grid) {
  if (grid.bins() > 24) throw ResourceCapError("enumerate_fidelities is limited to N_T <= 24");
  const HalfTables tables = build_tables(problem, grid);
  std::vector<double> all(std::size_t{1} << grid.bins());
  for_each_fidelity<char>(tables, 1, [&](char&, std::uint64_t bits, double f) { all[bits] = f; });
  return all;
}

std::vector<AttractorCluster> cluster_attractors(std::span<const OptimizationResult> results, double threshold) {
  const std::size_t n = results.size();
  if (n < 2) throw std::invalid_argument("clustering needs at least two results");
  const TimeGrid& grid = results.front().protocol.grid();
  for (const auto& r : results) {
    if (!(r.protocol.grid() == grid)) throw std::invalid_argument("clustering: results on mixed grids");
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (protocol_overlap(results[a].protocol.values(), results[b].protocol.values()) >= threshold) {
        const std::size_t ra = find(a);
        const std::size_t rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);

  std::vector<AttractorCluster> clusters;
  for (auto& [root, members] : groups) {
    AttractorCluster c;
    c.members = std::move(members);
    c.population = static_cast<double>(c.members.size()) / static_cast<double>(n);
    c.mean_profile.assign(grid.bins(), 0.0);
    c.min_fidelity = results[c.members.front()].fidelity;
    c.max_fidelity = c.min_fidelity;
    std::vector<Protocol> protos;
    for (std::size_t i : c.members) {
      const auto& r = results[i];
      for (std::size_t t = 0; t < grid.bins(); ++t) c.mean_profile[t] += r.protocol[t];
      c.mean_fidelity += r.fidelity;
      c.min_fidelity = std::min(c.min_fidelity, r.fidelity);
      c.max_fidelity = std::max(c.max_fidelity, r.fidelity);
      protos.push_back(r.protocol);
    }
    const auto size = static_cast<double>(c.members.size());
    for (double& v : c.mean_profile) v /= size;
    c.mean_fidelity /= size;
    c.intra_variance = protos.size() > 1 ? order_parameter(protos) : 0.0;
    clusters.push_back(std::move(c));
  }
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const auto& a, const auto& b) { return a.members.size() > b.members.size(); });
  return clusters;
}

}  // namespace qcontrol
