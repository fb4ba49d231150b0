#include <doctest.h>

#include "qcontrol/random.hpp"
#include "qcontrol/scaling.hpp"

#include <cmath>
#include <sstream>

using namespace qcontrol;

namespace {

SweepSpec small_time_sweep() {
  SweepSpec s;
  s.axis = SweepAxis::time;
  s.values = {0.3, 1.5};
  s.sites = 1;
  s.dt = 0.05;
  s.restarts = 10;
  s.seed = 91;
  return s;
}

}  // namespace

TEST_CASE("axis names") {
  for (auto a : {SweepAxis::time, SweepAxis::dt, SweepAxis::sites}) CHECK(parse_sweep_axis(to_string(a)) == a);
  CHECK_THROWS(parse_sweep_axis("x"));
}

TEST_CASE("sweep validation") {
  SweepSpec s = small_time_sweep();
  CHECK_NOTHROW(validate_sweep(s));
  s.values = {1.0, 0.5, 2.0};
  CHECK_THROWS(validate_sweep(s));
  s = small_time_sweep();
  s.restarts = 1;
  CHECK_THROWS(validate_sweep(s));
  s = small_time_sweep();
  s.axis = SweepAxis::dt;
  s.values = {0.05, 0.025};
  CHECK_THROWS(validate_sweep(s));  // no durations
}

TEST_CASE("time sweep rows") {
  const auto rows = run_q_scan(small_time_sweep());
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.q >= 0.0);
    CHECK(r.q <= 1.0);
    CHECK(r.replicates.size() == 10);
    CHECK(std::isnan(r.entropy_max));  // odd L
    CHECK(r.log_fidelity_per_site == doctest::Approx(-std::log(r.best_fidelity)));
    CHECK(r.best_fidelity >= r.mean_fidelity);
  }
  CHECK(rows[0].bins == 6);
  CHECK(rows[1].bins == 30);
}

TEST_CASE("size sweep entropies obey the bounds") {
  SweepSpec s;
  s.axis = SweepAxis::sites;
  s.values = {2, 4};
  s.times = {1.0};
  s.bins = 10;
  s.restarts = 4;
  s.seed = 92;
  for (const auto& r : run_q_scan(s)) {
    CHECK(r.entropy_max >= 0.0);
    CHECK(r.entropy_max <= r.sites / 2 * std::log(2.0) + 1e-12);
    CHECK(r.bins == 10);
  }
}

TEST_CASE("dt sweep keeps T fixed") {
  SweepSpec s;
  s.axis = SweepAxis::dt;
  s.values = {0.1, 0.05};
  s.times = {1.0};
  s.bins = 7;  // ignored on the dt axis
  s.restarts = 3;
  const auto rows = run_q_scan(s);
  CHECK(rows[0].bins == 10);
  CHECK(rows[1].bins == 20);
}

TEST_CASE("scan outputs reproduce from spec and seed") {
  const SweepSpec s = small_time_sweep();
  std::ostringstream a, b, la, lb;
  const auto r1 = run_q_scan(s);
  const auto r2 = run_q_scan(s);
  write_scan_summary_csv(a, r1);
  write_scan_summary_csv(b, r2);
  write_scan_long_csv(la, r1);
  write_scan_long_csv(lb, r2);
  CHECK(a.str() == b.str());
  CHECK(la.str() == lb.str());
  CHECK(a.str().find("entropy_half_max_over_time") != std::string::npos);
  SweepSpec other = s;
  other.restarts = 11;
  CHECK(other.hash() != s.hash());
  CHECK(r1[0].seed == derive_seed(s.seed, {s.hash(), 0}));
}
