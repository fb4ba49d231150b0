#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace qcontrol {

inline constexpr double kFieldMax = 4.0;

class ProtocolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TimeGrid {
 public:
  // T must be an integer multiple of dt (relative slack 1e-9).
  TimeGrid(double total_time, double dt);
  static TimeGrid with_bins(double total_time, std::size_t bins);

  double total_time() const noexcept { return total_time_; }
  double dt() const noexcept { return dt_; }
  std::size_t bins() const noexcept { return bins_; }

  double bin_start(std::size_t n) const noexcept { return static_cast<double>(n) * dt_; }
  double bin_midpoint(std::size_t n) const noexcept { return (static_cast<double>(n) + 0.5) * dt_; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  TimeGrid(double total_time, double dt, std::size_t bins);

  double total_time_;
  double dt_;
  std::size_t bins_;
};

// Piecewise-constant field, one value per bin, every value in [-4, 4].
class Protocol {
 public:
  Protocol(TimeGrid grid, std::vector<double> values);
  static Protocol constant(TimeGrid grid, double value);
  // Bit n set -> +4 in bin n, clear -> -4.
  static Protocol from_bits(TimeGrid grid, std::uint64_t bits);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t n) const { return values_[n]; }
  std::size_t size() const noexcept { return values_.size(); }

  bool is_bang_bang() const noexcept;
  // Requires is_bang_bang() and at most 64 bins.
  std::uint64_t to_bits() const;

  Protocol with_value(std::size_t n, double value) const;
  // h(t) -> -h(T - t)
  Protocol time_reversed_negated() const;

  friend bool operator==(const Protocol&, const Protocol&) = default;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

struct VariationalParams {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double total_time = 0.0;

  VariationalParams(double tau1, double tau2, double total_time);
  double free_time() const noexcept { return total_time - tau1 - tau2; }
};

// h(t) = (h_f - h_i) t / T + h_i at bin midpoints.
Protocol lz_protocol(const TimeGrid& grid, double h_i, double h_f);
// h(t) = tan(a t + b), b = atan(h_i), a = (atan(h_f) - b) / T at bin midpoints.
Protocol geodesic_protocol(const TimeGrid& grid, double h_i, double h_f);

struct Segment {
  double field;
  double duration;
};

// Exact (grid-free) bang sequences.  1D: (+4, 0, -4) for (tau1/2, T - tau1, tau1/2).
// 2D: (+4, -4, 0, +4, -4) for (tau1/2, tau2/2, T - tau1 - tau2, tau2/2, tau1/2).
std::vector<Segment> variational_segments(const VariationalParams& params);

// Segments rasterized onto the grid: boundaries snap to the nearest bin edge,
// with the sequence mirrored so values[n] == -values[N_T - 1 - n].
Protocol rasterize(const std::vector<Segment>& segments, const TimeGrid& grid);

Protocol variational_1d(double tau1, const TimeGrid& grid);
Protocol variational_2d(const VariationalParams& params, const TimeGrid& grid);

// CSV: '# {"T":..,"dt":..,"N_T":..}' line, header, then (bin_index, t_start, h_x).
// Doubles use shortest round-trip formatting so read(write(p)) == p exactly.
void write_protocol_csv(std::ostream& out, const Protocol& protocol);
Protocol read_protocol_csv(std::istream& in);

}  // namespace qcontrol
