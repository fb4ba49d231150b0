#pragma once

#include "qcontrol/quantum.hpp"
#include "qcontrol/result.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

namespace qcontrol {

class ResourceCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LandscapeEnsemble {
  std::vector<Protocol> protocols;
  std::vector<double> fidelities;

  static LandscapeEnsemble from_results(std::span<const OptimizationResult> results);
  std::size_t size() const noexcept { return protocols.size(); }
};

// q = (1/(16 N_T)) sum_n mean_a (h^a_n - hbar_n)^2. Needs >= 2 protocols on one grid.
double order_parameter(std::span<const Protocol> protocols);
double order_parameter(const LandscapeEnsemble& ensemble);

// (1/(16 N_T)) sum_n a_n b_n; 1 for identical bang-bang protocols, -1 for h and -h.
double protocol_overlap(std::span<const double> a, std::span<const double> b);

struct DosOptions {
  double bin_width = 1e-3;
  std::vector<std::size_t> flip_orders{1, 2};
  std::size_t max_bins = 30;
  std::size_t memory_limit_bytes = std::size_t{2} << 30;
  unsigned threads = 0;
};

struct DosResult {
  std::size_t bins = 0;  // N_T
  double bin_width = 0.0;
  std::vector<std::uint64_t> histogram;  // histogram[k] counts F in [k w, (k+1) w)
  std::uint64_t optimal_bits = 0;        // bit n set -> +4 in bin n
  double optimal_fidelity = 0.0;
  // k -> fidelities of every k-flip of the optimum, subsets in lexicographic order.
  std::map<std::size_t, std::vector<double>> excitations;
  // k -> number of protocols strictly above the best k-flip excitation.
  std::map<std::size_t, std::uint64_t> count_above;

  std::uint64_t total() const;
};

// Bytes the meet-in-the-middle tables need for this instance.
std::size_t dos_memory_estimate(std::size_t dimension, std::size_t bins);

// Ties within 1e-12 go to the lowest bitstring; count_above also ignores
// differences below 1e-12.
// All 2^N_T bang-bang protocols: forward states for every first-half prefix
// and backward duals for every second-half suffix, combined by inner products.
DosResult exhaustive_dos(const ControlProblem& problem, const TimeGrid& grid, const DosOptions& options = {});

// Every fidelity, indexed by protocol bits, through the same meet-in-the-middle
// route. For small N_T only (the vector has 2^N_T entries).
std::vector<double> enumerate_fidelities(const ControlProblem& problem, const TimeGrid& grid);

struct AttractorCluster {
  std::vector<std::size_t> members;  // indices into the input
  double population = 0.0;           // members / total
  std::vector<double> mean_profile;
  double mean_fidelity = 0.0;
  double min_fidelity = 0.0;
  double max_fidelity = 0.0;
  // Order parameter of the members alone (0 for a single member).
  double intra_variance = 0.0;
};

// Single-linkage clustering of final protocols: two results are linked when
// their overlap is >= threshold. Clusters are sorted by decreasing population.
std::vector<AttractorCluster> cluster_attractors(std::span<const OptimizationResult> results, double threshold);

}  // namespace qcontrol
