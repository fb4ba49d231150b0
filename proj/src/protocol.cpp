#include "qcontrol/protocol.hpp"

#include "qcontrol/text.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace qcontrol {

TimeGrid::TimeGrid(double total_time, double dt, std::size_t bins)
    : total_time_(total_time), dt_(dt), bins_(bins) {}

TimeGrid::TimeGrid(double total_time, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ProtocolError("dt must be positive");
  if (!(total_time > 0.0) || !std::isfinite(total_time)) throw ProtocolError("T must be positive");
  if (dt > total_time * (1.0 + 1e-12)) throw ProtocolError("grid empty: dt > T");
  const double ratio = total_time / dt;
  const double bins = std::round(ratio);
  if (std::abs(ratio - bins) > 1e-9 * std::max(1.0, ratio)) {
    throw ProtocolError("T is not an integer multiple of dt");
  }
  total_time_ = total_time;
  dt_ = dt;
  bins_ = static_cast<std::size_t>(bins);
}

TimeGrid TimeGrid::with_bins(double total_time, std::size_t bins) {
  if (bins == 0) throw ProtocolError("grid empty: N_T = 0");
  if (!(total_time > 0.0) || !std::isfinite(total_time)) throw ProtocolError("T must be positive");
  return TimeGrid(total_time, total_time / static_cast<double>(bins), bins);
}

Protocol::Protocol(TimeGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.bins()) throw ProtocolError("protocol length does not match N_T");
  for (double v : values_) {
    if (!std::isfinite(v) || std::abs(v) > kFieldMax) {
      throw ProtocolError("field value " + format_double(v) + " outside [-4, 4]");
    }
  }
}

Protocol Protocol::constant(TimeGrid grid, double value) {
  return Protocol(grid, std::vector<double>(grid.bins(), value));
}

Protocol Protocol::from_bits(TimeGrid grid, std::uint64_t bits) {
  if (grid.bins() > 64) throw ProtocolError("bit encoding supports at most 64 bins");
  std::vector<double> values(grid.bins());
  for (std::size_t n = 0; n < values.size(); ++n) {
    values[n] = ((bits >> n) & 1U) ? kFieldMax : -kFieldMax;
  }
  return Protocol(grid, std::move(values));
}

bool Protocol::is_bang_bang() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return v == kFieldMax || v == -kFieldMax; });
}

std::uint64_t Protocol::to_bits() const {
  if (!is_bang_bang()) throw ProtocolError("protocol is not bang-bang");
  if (values_.size() > 64) throw ProtocolError("bit encoding supports at most 64 bins");
  std::uint64_t bits = 0;
  for (std::size_t n = 0; n < values_.size(); ++n) {
    if (values_[n] > 0) bits |= std::uint64_t{1} << n;
  }
  return bits;
}

Protocol Protocol::with_value(std::size_t n, double value) const {
  std::vector<double> v = values_;
  v.at(n) = value;
  return Protocol(grid_, std::move(v));
}

Protocol Protocol::time_reversed_negated() const {
  std::vector<double> v(values_.rbegin(), values_.rend());
  for (double& x : v) x = -x;
  return Protocol(grid_, std::move(v));
}

VariationalParams::VariationalParams(double t1, double t2, double total)
    : tau1(t1), tau2(t2), total_time(total) {
  if (!(t1 >= 0.0) || !(t2 >= 0.0)) throw ProtocolError("pulse durations must be non-negative");
  if (t1 + t2 > total * (1.0 + 1e-12)) throw ProtocolError("tau1 + tau2 exceeds T");
}

namespace {

void check_endpoint(double h) {
  if (!std::isfinite(h) || std::abs(h) > kFieldMax) {
    throw ProtocolError("endpoint field " + format_double(h) + " outside [-4, 4]");
  }
}

double clamp_field(double h) { return std::clamp(h, -kFieldMax, kFieldMax); }

}  // namespace

Protocol lz_protocol(const TimeGrid& grid, double h_i, double h_f) {
  check_endpoint(h_i);
  check_endpoint(h_f);
  std::vector<double> v(grid.bins());
  for (std::size_t n = 0; n < v.size(); ++n) {
    v[n] = clamp_field((h_f - h_i) * grid.bin_midpoint(n) / grid.total_time() + h_i);
  }
  return Protocol(grid, std::move(v));
}

Protocol geodesic_protocol(const TimeGrid& grid, double h_i, double h_f) {
  check_endpoint(h_i);
  check_endpoint(h_f);
  const double b = std::atan(h_i);
  const double a = (std::atan(h_f) - b) / grid.total_time();
  std::vector<double> v(grid.bins());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = clamp_field(std::tan(a * grid.bin_midpoint(n) + b));
  return Protocol(grid, std::move(v));
}

std::vector<Segment> variational_segments(const VariationalParams& p) {
  const double free = std::max(0.0, p.free_time());
  if (p.tau2 == 0.0) {
    return {{kFieldMax, p.tau1 / 2}, {0.0, free}, {-kFieldMax, p.tau1 / 2}};
  }
  return {{kFieldMax, p.tau1 / 2},
          {-kFieldMax, p.tau2 / 2},
          {0.0, free},
          {kFieldMax, p.tau2 / 2},
          {-kFieldMax, p.tau1 / 2}};
}

Protocol rasterize(const std::vector<Segment>& segments, const TimeGrid& grid) {
  const auto bins = static_cast<long>(grid.bins());
  const long half = bins / 2;
  const double total = grid.total_time();
  std::vector<long> edges{0};
  double elapsed = 0.0;
  for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
    elapsed += segments[k].duration;
    long edge = 0;
    if (elapsed <= total / 2) {
      edge = std::min(std::lround(elapsed / grid.dt()), half);
    } else {
      edge = bins - std::min(std::lround(std::max(0.0, total - elapsed) / grid.dt()), half);
    }
    edges.push_back(std::max(edge, edges.back()));
  }
  edges.push_back(bins);

  std::vector<double> v(grid.bins(), 0.0);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    for (long n = edges[k]; n < edges[k + 1]; ++n) v[static_cast<std::size_t>(n)] = segments[k].field;
  }
  return Protocol(grid, std::move(v));
}

Protocol variational_1d(double tau1, const TimeGrid& grid) {
  return rasterize(variational_segments({tau1, 0.0, grid.total_time()}), grid);
}

Protocol variational_2d(const VariationalParams& params, const TimeGrid& grid) {
  return rasterize(variational_segments(params), grid);
}

void write_protocol_csv(std::ostream& out, const Protocol& protocol) {
  const TimeGrid& g = protocol.grid();
  out << "# {\"T\":" << format_double(g.total_time()) << ",\"dt\":" << format_double(g.dt())
      << ",\"N_T\":" << g.bins() << "}\n";
  out << "bin_index,t_start,h_x\n";
  for (std::size_t n = 0; n < protocol.size(); ++n) {
    out << n << ',' << format_double(g.bin_start(n)) << ',' << format_double(protocol[n]) << '\n';
  }
}

Protocol read_protocol_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw ProtocolError("protocol CSV must start with a '# {json}' header line");
  }
  const auto header = nlohmann::json::parse(line.substr(2));
  const double total = header.at("T").get<double>();
  const double dt = header.at("dt").get<double>();
  const auto bins = header.at("N_T").get<std::size_t>();
  if (!std::getline(in, line) || line != "bin_index,t_start,h_x") {
    throw ProtocolError("missing protocol CSV column header");
  }
  std::vector<double> values;
  values.reserve(bins);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 3) throw ProtocolError("malformed protocol row: " + line);
    if (parse_size(cols[0]) != values.size()) throw ProtocolError("bin indices out of order");
    values.push_back(parse_double(cols[2]));
  }
  const TimeGrid grid(total, dt);
  if (grid.bins() != bins) throw ProtocolError("header N_T disagrees with T/dt");
  return Protocol(grid, std::move(values));
}

}  // namespace qcontrol
