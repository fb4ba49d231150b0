#include "qcontrol/harness.hpp"

#include "qcontrol/crab.hpp"
#include "qcontrol/grape.hpp"
#include "qcontrol/landscape.hpp"
#include "qcontrol/protocol.hpp"
#include "qcontrol/random.hpp"
#include "qcontrol/rl.hpp"
#include "qcontrol/scaling.hpp"
#include "qcontrol/sd.hpp"
#include "qcontrol/text.hpp"
#include "qcontrol/variational.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qcontrol {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : config_schema()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(v) + "'");
}

long long parse_int(std::string_view v) {
  long long x = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || end != v.data() + v.size()) throw std::invalid_argument("not an integer: '" + std::string(v) + "'");
  return x;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw std::invalid_argument("not an unsigned integer: '" + std::string(v) + "'");
  }
  return x;
}

std::vector<double> parse_list(std::string_view v) {
  std::vector<double> out;
  v = trim(v);
  if (v.empty()) return out;
  if (v.find(':') != std::string_view::npos) {
    const auto parts = split(v, ':');
    if (parts.size() != 3) throw std::invalid_argument("range must be start:stop:step");
    const double a = parse_double(trim(parts[0]));
    const double b = parse_double(trim(parts[1]));
    const double step = parse_double(trim(parts[2]));
    if (!(step > 0.0) || b < a) throw std::invalid_argument("range needs step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) {
      // Rounded so 0.1:1:0.05 gives 0.15, not 0.15000000000000002.
      out.push_back(std::round((a + static_cast<double>(k) * step) * 1e12) / 1e12);
    }
    return out;
  }
  for (auto part : split(v, ',')) out.push_back(parse_double(trim(part)));
  return out;
}

void check_value(const SchemaEntry& e, const std::string& v) {
  switch (e.type) {
    case 'd': {
      const double x = parse_double(v);
      if (!std::isfinite(x)) throw std::invalid_argument("not finite");
      break;
    }
    case 'i': parse_int(v); break;
    case 'u': parse_u64(v); break;
    case 'b': parse_bool(v); break;
    case 'l': parse_list(v); break;
    default: break;
  }
}

struct Writer {
  fs::path dir;
  std::vector<std::string>& artifacts;

  std::ofstream open(const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    artifacts.push_back(name);
    return f;
  }
};

TimeGrid grid_for(const ExperimentConfig& c, double total_time) {
  const long long bins = c.get_int("grid.bins");
  if (bins > 0) return TimeGrid::with_bins(total_time, static_cast<std::size_t>(bins));
  return TimeGrid(total_time, c.get_double("grid.dt"));
}

ControlProblem problem_for(const ExperimentConfig& c, int sites) {
  return ControlProblem(SpinChain(sites, c.get_double("system.hz"), static_cast<int>(c.get_int("system.max_sites"))),
                        c.get_double("fields.initial"), c.get_double("fields.target"));
}

SdConfig sd_config(const ExperimentConfig& c, std::uint64_t seed, std::size_t restarts) {
  SdConfig s;
  s.restarts = restarts;
  s.max_evals = static_cast<std::size_t>(c.get_int("sd.max_evals"));
  s.flip_order = static_cast<std::size_t>(c.get_int("sd.flip_order"));
  s.seed = seed;
  s.threads = static_cast<unsigned>(c.get_int("threads"));
  return s;
}

GrapeConfig grape_config(const ExperimentConfig& c, std::uint64_t seed, std::size_t restarts) {
  GrapeConfig g;
  g.max_iters = static_cast<std::size_t>(c.get_int("grape.max_iters"));
  g.eps0 = c.get_double("grape.eps0");
  g.tolerance = c.get_double("grape.tolerance");
  g.restarts = restarts;
  g.seed = seed;
  g.threads = static_cast<unsigned>(c.get_int("threads"));
  g.audit = c.get_bool("grape.audit");
  return g;
}

CrabConfig crab_config(const ExperimentConfig& c, std::uint64_t seed) {
  CrabConfig k;
  k.harmonics = static_cast<std::size_t>(c.get_int("crab.harmonics"));
  k.restarts = static_cast<std::size_t>(c.get_int("crab.restarts"));
  k.optimize_frequencies = c.get_bool("crab.optimize_frequencies");
  k.simplex.max_iters = static_cast<std::size_t>(c.get_int("crab.max_iters"));
  k.simplex.tolerance = c.get_double("crab.tolerance");
  k.seed = seed;
  k.threads = static_cast<unsigned>(c.get_int("threads"));
  return k;
}

RlConfig rl_config(const ExperimentConfig& c) {
  RlConfig r;
  r.actions = c.get("rl.actions") == "quasi_continuous" ? ActionSet::quasi_continuous() : ActionSet::bang_bang();
  r.schedule.total_episodes = static_cast<std::size_t>(c.get_int("rl.episodes"));
  r.schedule.phase_length = static_cast<std::size_t>(c.get_int("rl.phase_length"));
  r.schedule.beta_start = c.get_double("rl.beta_start");
  r.schedule.beta_end = c.get_double("rl.beta_end");
  r.coding.tilings = static_cast<std::size_t>(c.get_int("rl.tilings"));
  r.coding.tiles = static_cast<std::size_t>(c.get_int("rl.tiles"));
  r.alpha = c.get_double("rl.alpha");
  r.alpha_decay = c.get_double("rl.alpha_decay");
  r.trace_decay = c.get_double("rl.trace_decay");
  r.watkins_cut = c.get_bool("rl.watkins");
  r.initial_field = c.get_double("rl.initial_field");
  return r;
}

// Stream tags so each method's seeds differ even with one base seed.
enum Stream : std::uint64_t { kSd = 1, kGrape, kCrab, kRl, kAttractorsSd, kAttractorsGrape };

const OptimizationResult& best_of(const std::vector<OptimizationResult>& rs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rs.size(); ++i) {
    if (rs[i].fidelity > rs[best].fidelity) best = i;
  }
  return rs.at(best);
}

void write_protocol_file(Writer& w, const std::string& name, const Protocol& p) {
  auto f = w.open(name);
  write_protocol_csv(f, p);
}

json run_sd(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const TimeGrid grid = grid_for(c, c.get_double("grid.T"));
  const auto seed = derive_seed(c.get_u64("seed"), {kSd});
  const auto rs = ensemble_descend(problem, grid, sd_config(c, seed, static_cast<std::size_t>(c.get_int("sd.restarts"))));
  {
    auto f = w.open("sd_summary.csv");
    f << "restart_id,seed,fidelity,fidelity_evaluations,converged\n";
    for (std::size_t r = 0; r < rs.size(); ++r) {
      f << r << ',' << rs[r].seed << ',' << format_double(rs[r].fidelity) << ',' << rs[r].fidelity_evaluations << ','
        << (rs[r].converged ? 1 : 0) << '\n';
    }
  }
  {
    auto f = w.open("sd_traces.csv");
    f << "restart_id,eval_index,fidelity\n";
    for (std::size_t r = 0; r < rs.size(); ++r) {
      for (std::size_t i = 0; i < rs[r].trace.size(); ++i) f << r << ',' << i << ',' << format_double(rs[r].trace[i]) << '\n';
    }
  }
  const auto& best = best_of(rs);
  write_protocol_file(w, "best_protocol.csv", best.protocol);
  json s{{"best_fidelity", best.fidelity}, {"mean_evaluations_per_bin", mean_evaluations_per_bin(rs)}};
  if (rs.size() >= 2) s["q"] = order_parameter(LandscapeEnsemble::from_results(rs));
  return s;
}

json run_grape(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const TimeGrid grid = grid_for(c, c.get_double("grid.T"));
  const auto seed = derive_seed(c.get_u64("seed"), {kGrape});
  const auto runs =
      ensemble_ascend(problem, grid, grape_config(c, seed, static_cast<std::size_t>(c.get_int("grape.restarts"))));
  {
    auto f = w.open("grape_traces.csv");
    f << "restart_id,iter,fidelity,step_size,grad_norm";
    if (c.get_bool("grape.audit")) f << ",audit_error";
    f << '\n';
    for (std::size_t r = 0; r < runs.size(); ++r) {
      for (const auto& st : runs[r].steps) {
        f << r << ',' << st.iter << ',' << format_double(st.fidelity) << ',' << format_double(st.step_size) << ','
          << format_double(st.grad_norm);
        if (c.get_bool("grape.audit")) f << ',' << format_double(st.audit_error);
        f << '\n';
      }
    }
  }
  std::vector<OptimizationResult> results;
  {
    auto f = w.open("grape_summary.csv");
    f << "restart_id,seed,fidelity,fidelity_evaluations,converged\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto& res = runs[r].result;
      f << r << ',' << res.seed << ',' << format_double(res.fidelity) << ',' << res.fidelity_evaluations << ','
        << (res.converged ? 1 : 0) << '\n';
      results.push_back(res);
    }
  }
  const auto& best = best_of(results);
  write_protocol_file(w, "best_protocol.csv", best.protocol);
  return {{"best_fidelity", best.fidelity}};
}

json run_crab(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const TimeGrid grid = grid_for(c, c.get_double("grid.T"));
  const auto out = crab_optimize(problem, grid, crab_config(c, derive_seed(c.get_u64("seed"), {kCrab})));
  {
    auto f = w.open("crab_summary.csv");
    f << "restart_id,N_c,final_cost,final_fidelity,penalty\n";
    for (std::size_t r = 0; r < out.runs.size(); ++r) {
      const auto& run = out.runs[r];
      f << r << ',' << run.ansatz.harmonics() << ',' << format_double(run.cost.cost) << ','
        << format_double(run.cost.fidelity) << ',' << format_double(run.cost.penalty) << '\n';
    }
  }
  write_protocol_file(w, "best_protocol.csv", out.runs[out.best].result.protocol);
  return {{"best_fidelity", out.runs[out.best].result.fidelity}, {"best_restart", out.best}};
}

json run_rl(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const QuantumEnvironment env(problem, grid_for(c, c.get_double("grid.T")));
  const auto [runs, best] =
      train_post_selected(env, rl_config(c), static_cast<std::size_t>(c.get_int("rl.seeds")),
                          derive_seed(c.get_u64("seed"), {kRl}), static_cast<unsigned>(c.get_int("threads")));
  {
    auto f = w.open("rl_trace.csv");
    f << "run,episode,phase_kind,beta,episode_fidelity,best_fidelity\n";
    for (std::size_t k = 0; k < runs.size(); ++k) {
      for (const auto& e : runs[k].episodes) {
        f << k << ',' << e.episode << ',' << (e.replay ? "replay" : "explore") << ',' << format_double(e.beta) << ','
          << format_double(e.fidelity) << ',' << format_double(e.best_fidelity) << '\n';
      }
    }
  }
  write_protocol_file(w, "best_protocol.csv", runs[best].result.protocol);
  return {{"best_fidelity", runs[best].result.fidelity}, {"best_run", best}};
}

json run_variational(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  ScanOptions o;
  o.tau_resolution = c.get_double("variational.tau_resolution");
  o.two_parameter = c.get_bool("variational.two_parameter");
  o.threads = static_cast<unsigned>(c.get_int("threads"));
  const auto times = c.get_list("variational.times");
  const auto scan = scan_critical_points(problem, times, o);
  auto f = w.open("variational_scan.csv");
  f << "T,tau1_best,tau2_best,F_best,kink_flag,degenerate\n";
  for (const auto& p : scan.points) {
    f << format_double(p.total_time) << ',' << format_double(p.tau1) << ',' << format_double(p.tau2) << ','
      << format_double(p.fidelity) << ',' << (p.kink ? 1 : 0) << ',' << (p.degenerate ? 1 : 0) << '\n';
  }
  return {{"kinks", scan.kinks}};
}

json run_dos(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const TimeGrid grid = grid_for(c, c.get_double("grid.T"));
  DosOptions o;
  o.bin_width = c.get_double("dos.bin_width");
  o.max_bins = static_cast<std::size_t>(c.get_int("dos.max_bins"));
  o.flip_orders.clear();
  for (double k : c.get_list("dos.flip_orders")) o.flip_orders.push_back(static_cast<std::size_t>(k));
  o.threads = static_cast<unsigned>(c.get_int("threads"));
  const DosResult d = exhaustive_dos(problem, grid, o);
  {
    auto f = w.open("dos_histogram.csv");
    f << "F_bin_lo,count\n";
    for (std::size_t k = 0; k < d.histogram.size(); ++k) {
      f << format_double(static_cast<double>(k) * d.bin_width) << ',' << d.histogram[k] << '\n';
    }
  }
  std::ostringstream hex;
  hex << std::hex << d.optimal_bits;
  json j{{"N_T", d.bins}, {"optimal_bits", "0x" + hex.str()}, {"optimal_F", d.optimal_fidelity}, {"total", d.total()}};
  for (const auto& [k, list] : d.excitations) j["excitations"][std::to_string(k)] = list;
  for (const auto& [k, n] : d.count_above) j["count_above"][std::to_string(k)] = n;
  {
    auto f = w.open("dos.json");
    f << j.dump(2) << '\n';
  }
  return {{"optimal_F", d.optimal_fidelity}, {"optimal_bits", "0x" + hex.str()}};
}

json run_qscan(const ExperimentConfig& c, Writer& w) {
  SweepSpec s;
  s.axis = parse_sweep_axis(c.get("qscan.axis"));
  s.values = c.get_list("qscan.values");
  s.times = c.get_list("qscan.times");
  s.sites = static_cast<int>(c.get_int("system.L"));
  s.hz = c.get_double("system.hz");
  s.h_initial = c.get_double("fields.initial");
  s.h_target = c.get_double("fields.target");
  s.dt = c.get_double("grid.dt");
  s.bins = static_cast<std::size_t>(c.get_int("grid.bins"));
  s.restarts = static_cast<std::size_t>(c.get_int("qscan.restarts"));
  s.max_evals = static_cast<std::size_t>(c.get_int("sd.max_evals"));
  s.seed = c.get_u64("seed");
  s.threads = static_cast<unsigned>(c.get_int("threads"));
  const auto rows = run_q_scan(s);
  {
    auto f = w.open("qscan_long.csv");
    write_scan_long_csv(f, rows);
  }
  {
    auto f = w.open("qscan_summary.csv");
    write_scan_summary_csv(f, rows);
  }
  std::ostringstream h;
  h << std::hex << s.hash();
  return {{"spec_hash", h.str()}, {"points", rows.size()}};
}

void write_clusters(Writer& w, const std::string& prefix, const std::vector<AttractorCluster>& clusters,
                    const TimeGrid& grid) {
  {
    auto f = w.open(prefix + "_clusters.csv");
    f << "cluster_id,members,population,mean_F,min_F,max_F,intra_variance\n";
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      const auto& cl = clusters[k];
      f << k << ',' << cl.members.size() << ',' << format_double(cl.population) << ',' << format_double(cl.mean_fidelity)
        << ',' << format_double(cl.min_fidelity) << ',' << format_double(cl.max_fidelity) << ','
        << format_double(cl.intra_variance) << '\n';
    }
  }
  auto f = w.open(prefix + "_profiles.csv");
  f << "cluster_id,bin_index,t_start,mean_h_x\n";
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    for (std::size_t n = 0; n < clusters[k].mean_profile.size(); ++n) {
      f << k << ',' << n << ',' << format_double(grid.bin_start(n)) << ','
        << format_double(clusters[k].mean_profile[n]) << '\n';
    }
  }
}

json run_attractors(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const TimeGrid grid = grid_for(c, c.get_double("grid.T"));
  const double threshold = c.get_double("attractors.threshold");
  const auto base = c.get_u64("seed");
  const auto sd = ensemble_descend(
      problem, grid, sd_config(c, derive_seed(base, {kAttractorsSd}), static_cast<std::size_t>(c.get_int("attractors.restarts"))));
  const auto clusters = cluster_attractors(sd, threshold);
  write_clusters(w, "sd", clusters, grid);
  json s{{"sd_clusters", clusters.size()}, {"sd_q", order_parameter(LandscapeEnsemble::from_results(sd))}};
  const auto grape_restarts = static_cast<std::size_t>(c.get_int("attractors.grape_restarts"));
  if (grape_restarts >= 2) {
    const auto runs = ensemble_ascend(problem, grid, grape_config(c, derive_seed(base, {kAttractorsGrape}), grape_restarts));
    std::vector<OptimizationResult> results;
    for (const auto& r : runs) results.push_back(r.result);
    const auto gc = cluster_attractors(results, threshold);
    write_clusters(w, "grape", gc, grid);
    s["grape_clusters"] = gc.size();
  }
  return s;
}

json run_compare(const ExperimentConfig& c, Writer& w) {
  const ControlProblem problem = problem_for(c, static_cast<int>(c.get_int("system.L")));
  const auto base = c.get_u64("seed");
  const auto times = c.get_list("compare.times");
  auto f = w.open("compare.csv");
  f << "T,N_T,rl,sd,grape,crab\n";
  json rows = json::array();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const TimeGrid grid = grid_for(c, times[k]);
    const QuantumEnvironment env(problem, grid);
    const auto rl = train_post_selected(env, rl_config(c), static_cast<std::size_t>(c.get_int("rl.seeds")),
                                        derive_seed(base, {kRl, k}), static_cast<unsigned>(c.get_int("threads")));
    const double f_rl = rl.first[rl.second].result.fidelity;
    const double f_sd = best_of(ensemble_descend(
        problem, grid, sd_config(c, derive_seed(base, {kSd, k}), static_cast<std::size_t>(c.get_int("sd.restarts"))))).fidelity;
    std::vector<OptimizationResult> g;
    for (const auto& r : ensemble_ascend(
             problem, grid, grape_config(c, derive_seed(base, {kGrape, k}), static_cast<std::size_t>(c.get_int("grape.restarts"))))) {
      g.push_back(r.result);
    }
    const double f_grape = best_of(g).fidelity;
    const auto crab = crab_optimize(problem, grid, crab_config(c, derive_seed(base, {kCrab, k})));
    const double f_crab = crab.runs[crab.best].result.fidelity;
    f << format_double(times[k]) << ',' << grid.bins() << ',' << format_double(f_rl) << ',' << format_double(f_sd) << ','
      << format_double(f_grape) << ',' << format_double(f_crab) << '\n';
    rows.push_back({{"T", times[k]}, {"rl", f_rl}, {"sd", f_sd}, {"grape", f_grape}, {"crab", f_crab}});
  }
  return {{"rows", rows}};
}

}  // namespace

const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> schema{
      {"method", 's', "sd", "rl | sd | grape | crab | variational | dos | qscan | attractors | compare"},
      {"seed", 'u', "0", "base seed; every random stream derives from it"},
      {"threads", 'i', "0", "worker threads, 0 = hardware concurrency; results do not depend on it"},
      {"output", 's', "", "output directory (the CLI --out flag overrides)"},
      {"system.L", 'i', "1", "chain length"},
      {"system.hz", 'd', "1", "longitudinal field"},
      {"system.max_sites", 'i', "12", "largest allowed L"},
      {"grid.T", 'd', "1", "protocol duration"},
      {"grid.dt", 'd', "0.05", "time step"},
      {"grid.bins", 'i', "0", "if > 0, dt = T / bins"},
      {"fields.initial", 'd', "-2", "field whose ground state is the initial state"},
      {"fields.target", 'd', "2", "field whose ground state is the target"},
      {"sd.restarts", 'i', "100", "stochastic descent restarts"},
      {"sd.max_evals", 'i', "0", "fidelity evaluations per descent, 0 = 20 N_T"},
      {"sd.flip_order", 'i', "1", "bins flipped per proposal"},
      {"grape.restarts", 'i', "10", "gradient ascent restarts"},
      {"grape.max_iters", 'i', "10000", "step attempts per ascent"},
      {"grape.eps0", 'd', "100", "step scale, eps_N = eps0 / sqrt(N)"},
      {"grape.tolerance", 'd', "1e-10", "stop when a step gains less fidelity"},
      {"grape.audit", 'b', "false", "finite-difference check at every accepted iterate"},
      {"crab.restarts", 'i', "10", "CRAB restarts"},
      {"crab.harmonics", 'i', "10", "N_c"},
      {"crab.optimize_frequencies", 'b', "false", "let the simplex move the frequencies too"},
      {"crab.max_iters", 'i', "5000", "Nelder-Mead iterations"},
      {"crab.tolerance", 'd', "1e-8", "Nelder-Mead cost spread"},
      {"rl.seeds", 'i', "10", "independent agents, best one kept"},
      {"rl.episodes", 'i', "20000", "episodes per agent"},
      {"rl.phase_length", 'i', "40", "episodes per exploratory or replay phase"},
      {"rl.beta_start", 'd', "0.1", "inverse temperature at the first episode"},
      {"rl.beta_end", 'd', "50", "inverse temperature at the last episode"},
      {"rl.alpha", 'd', "0.1", "learning rate"},
      {"rl.alpha_decay", 'd', "1", "alpha multiplier per episode"},
      {"rl.trace_decay", 'd', "0.6", "eligibility trace decay"},
      {"rl.tilings", 'i', "5", "tilings over the field"},
      {"rl.tiles", 'i', "20", "tiles per tiling"},
      {"rl.watkins", 'b', "true", "cut traces after exploratory actions"},
      {"rl.actions", 's', "bang_bang", "bang_bang | quasi_continuous"},
      {"rl.initial_field", 'd', "-4", "field before the first action"},
      {"variational.times", 'l', "0.05:3:0.05", "durations to scan"},
      {"variational.tau_resolution", 'd', "0.001", "tau grid before golden-section refinement"},
      {"variational.two_parameter", 'b', "false", "scan (tau1, tau2) instead of tau1"},
      {"dos.bin_width", 'd', "0.001", "fidelity histogram bin width"},
      {"dos.flip_orders", 'l', "1,2", "k values for k-flip excitations"},
      {"dos.max_bins", 'i', "30", "cap on N_T for exhaustive enumeration"},
      {"dos.memory_limit_mb", 'i', "2048", "cap on table memory"},
      {"qscan.axis", 's', "T", "T | dt | L"},
      {"qscan.values", 'l', "0.1:3:0.1", "axis values"},
      {"qscan.times", 'l', "", "durations for the dt and L axes"},
      {"qscan.restarts", 'i', "100", "SD restarts per point"},
      {"attractors.restarts", 'i', "1000", "SD restarts"},
      {"attractors.grape_restarts", 'i', "0", "GRAPE restarts clustered alongside (0 = none)"},
      {"attractors.threshold", 'd', "0.6", "single-linkage overlap threshold"},
      {"compare.times", 'l', "0.5:3:0.5", "durations for the method comparison"},
  };
  return schema;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"rl",  "sd",    "grape",      "crab",   "variational",
                                          "dos", "qscan", "attractors", "compare"};
  return m;
}

ConfigError::ConfigError(std::string kind, std::vector<std::string> messages)
    : std::runtime_error(messages.empty() ? kind : messages.front()), kind_(std::move(kind)), messages_(std::move(messages)) {}

std::string ExperimentConfig::get(const std::string& key) const {
  if (auto it = values.find(key); it != values.end()) return it->second;
  if (const auto* e = find_entry(key)) return e->fallback;
  throw std::out_of_range("unknown configuration key '" + key + "'");
}

double ExperimentConfig::get_double(const std::string& key) const { return parse_double(get(key)); }
long long ExperimentConfig::get_int(const std::string& key) const { return parse_int(get(key)); }
std::uint64_t ExperimentConfig::get_u64(const std::string& key) const { return parse_u64(get(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const { return parse_bool(get(key)); }
std::vector<double> ExperimentConfig::get_list(const std::string& key) const { return parse_list(get(key)); }

std::map<std::string, std::string> ExperimentConfig::resolved() const {
  std::map<std::string, std::string> out;
  for (const auto& e : config_schema()) out[e.key] = get(e.key);
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view v = line;
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back("line " + std::to_string(number) + ": expected key = value");
      continue;
    }
    const std::string key(trim(v.substr(0, eq)));
    const std::string value(trim(v.substr(eq + 1)));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(number) + ": empty key");
    } else if (!c.values.emplace(key, value).second) {
      errors.push_back("line " + std::to_string(number) + ": key '" + key + "' repeated");
    }
  }
  if (!errors.empty()) throw ConfigError("invalid_config", errors);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("invalid_config", {"cannot read config file " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    ExperimentConfig c;
    try {
      const json j = json::parse(buf.str());
      for (const auto& [k, v] : j.at("config").items()) c.values[k] = v.get<std::string>();
    } catch (const json::exception& e) {
      throw ConfigError("invalid_config", {"manifest " + path.string() + ": " + e.what()});
    }
    return c;
  }
  return parse_config_text(buf.str());
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("invalid_config", {"override '" + assignment + "' is not key=value"});
  config.values[std::string(trim(std::string_view(assignment).substr(0, eq)))] =
      std::string(trim(std::string_view(assignment).substr(eq + 1)));
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  for (const auto& [k, v] : c.values) {
    const auto* e = find_entry(k);
    if (!e) {
      errors.push_back("unknown key '" + k + "'");
      continue;
    }
    try {
      check_value(*e, v);
    } catch (const std::exception& ex) {
      errors.push_back(k + ": " + ex.what());
    }
  }
  if (!errors.empty()) return errors;  // typed reads below assume well-formed values

  auto require = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };
  const std::string method = c.get("method");
  require(std::find(known_methods().begin(), known_methods().end(), method) != known_methods().end(),
          "method: unknown method '" + method + "'");

  const long long sites = c.get_int("system.L");
  const long long max_sites = c.get_int("system.max_sites");
  require(sites >= 1, "system.L: must be >= 1");
  require(max_sites >= 1, "system.max_sites: must be >= 1");
  require(sites <= max_sites, "system.L: " + std::to_string(sites) + " exceeds system.max_sites = " +
                                  std::to_string(max_sites));
  for (const char* k : {"fields.initial", "fields.target"}) {
    require(std::abs(c.get_double(k)) <= kFieldMax, std::string(k) + ": bound error, |h| must be <= 4");
  }

  const double t = c.get_double("grid.T");
  const double dt = c.get_double("grid.dt");
  const long long bins = c.get_int("grid.bins");
  require(t > 0.0, "grid.T: must be > 0");
  require(bins >= 0, "grid.bins: must be >= 0");
  if (bins == 0) {
    require(dt > 0.0, "grid.dt: must be > 0");
    if (t > 0.0 && dt > 0.0) {
      try {
        TimeGrid(t, dt);
      } catch (const std::exception& e) {
        errors.push_back(std::string("grid: ") + e.what());
      }
    }
  }
  auto grid_ok_for = [&](const std::vector<double>& times, const std::string& key) {
    for (double x : times) {
      if (bins > 0) continue;
      try {
        TimeGrid(x, dt);
      } catch (const std::exception& e) {
        errors.push_back(key + ": T = " + format_double(x) + ": " + e.what());
      }
    }
  };

  auto positive = [&](const char* key) { require(c.get_int(key) >= 1, std::string(key) + ": must be >= 1"); };
  auto non_negative = [&](const char* key) { require(c.get_int(key) >= 0, std::string(key) + ": must be >= 0"); };
  non_negative("threads");
  non_negative("sd.max_evals");
  positive("sd.flip_order");

  if (method == "sd") positive("sd.restarts");
  if (method == "grape" || method == "compare") {
    positive("grape.restarts");
    non_negative("grape.max_iters");
    require(c.get_double("grape.eps0") > 0.0, "grape.eps0: must be > 0");
  }
  if (method == "crab" || method == "compare") {
    positive("crab.restarts");
    positive("crab.harmonics");
    positive("crab.max_iters");
  }
  if (method == "rl" || method == "compare") {
    positive("rl.seeds");
    positive("rl.episodes");
    positive("rl.phase_length");
    positive("rl.tilings");
    positive("rl.tiles");
    const double alpha = c.get_double("rl.alpha");
    require(alpha > 0.0 && alpha <= 1.0, "rl.alpha: must lie in (0, 1]");
    const double lambda = c.get_double("rl.trace_decay");
    require(lambda >= 0.0 && lambda <= 1.0, "rl.trace_decay: must lie in [0, 1]");
    require(c.get_double("rl.beta_end") >= c.get_double("rl.beta_start"), "rl.beta_end: must be >= rl.beta_start");
    require(c.get_double("rl.beta_start") >= 0.0, "rl.beta_start: must be >= 0");
    const std::string actions = c.get("rl.actions");
    require(actions == "bang_bang" || actions == "quasi_continuous", "rl.actions: bang_bang or quasi_continuous");
    require(std::abs(c.get_double("rl.initial_field")) <= kFieldMax, "rl.initial_field: bound error, |h| must be <= 4");
  }
  if (method == "compare") {
    positive("sd.restarts");
    const auto times = c.get_list("compare.times");
    require(!times.empty(), "compare.times: empty");
    grid_ok_for(times, "compare.times");
  }
  if (method == "variational") {
    const auto times = c.get_list("variational.times");
    require(!times.empty(), "variational.times: empty");
    for (double x : times) require(x > 0.0, "variational.times: durations must be > 0");
    require(c.get_double("variational.tau_resolution") > 0.0, "variational.tau_resolution: must be > 0");
  }
  if (method == "dos") {
    const long long cap = c.get_int("dos.max_bins");
    require(cap >= 1 && cap <= 30, "dos.max_bins: must lie in [1, 30]");
    require(c.get_double("dos.bin_width") > 0.0, "dos.bin_width: must be > 0");
    for (double k : c.get_list("dos.flip_orders")) {
      require(k >= 0 && k == std::round(k), "dos.flip_orders: must be non-negative integers");
    }
    if (t > 0.0 && errors.empty()) {
      const std::size_t n_bins = bins > 0 ? static_cast<std::size_t>(bins) : TimeGrid(t, dt).bins();
      if (n_bins > static_cast<std::size_t>(cap)) {
        errors.push_back("resource cap: exhaustive enumeration with N_T = " + std::to_string(n_bins) +
                         " exceeds dos.max_bins = " + std::to_string(cap));
      } else if (sites >= 1 && sites <= max_sites) {
        const auto dim = ControlProblem(SpinChain(static_cast<int>(sites), c.get_double("system.hz"),
                                                  static_cast<int>(max_sites)),
                                        c.get_double("fields.initial"), c.get_double("fields.target"))
                             .dimension();
        const auto need = dos_memory_estimate(static_cast<std::size_t>(dim), n_bins);
        const auto limit = static_cast<std::size_t>(c.get_int("dos.memory_limit_mb")) << 20;
        if (need > limit) {
          errors.push_back("resource cap: enumeration tables need " + std::to_string(need >> 20) + " MB, limit " +
                           std::to_string(limit >> 20) + " MB");
        }
      }
    }
  }
  if (method == "qscan") {
    try {
      parse_sweep_axis(c.get("qscan.axis"));
    } catch (const std::exception& e) {
      errors.push_back(std::string("qscan.axis: ") + e.what());
    }
    const auto values = c.get_list("qscan.values");
    require(!values.empty(), "qscan.values: empty");
    bool up = true;
    bool down = true;
    for (std::size_t i = 1; i < values.size(); ++i) {
      up &= values[i] > values[i - 1];
      down &= values[i] < values[i - 1];
    }
    require(up || down, "qscan.values: must be strictly monotone");
    require(c.get_int("qscan.restarts") >= 2, "qscan.restarts: must be >= 2");
    const std::string axis = c.get("qscan.axis");
    if (axis == "T") grid_ok_for(values, "qscan.values");
    if (axis == "L") {
      for (double v : values) {
        require(v >= 1 && v == std::round(v) && v <= static_cast<double>(max_sites),
                "qscan.values: L values must be integers in [1, system.max_sites]");
      }
    }
    if (axis != "T") require(!c.get_list("qscan.times").empty(), "qscan.times: needed for the dt and L axes");
    if (axis == "L") grid_ok_for(c.get_list("qscan.times"), "qscan.times");
    if (axis == "dt") {
      for (double step : values) {
        for (double x : c.get_list("qscan.times")) {
          try {
            TimeGrid(x, step);
          } catch (const std::exception& e) {
            errors.push_back("qscan: T = " + format_double(x) + ", dt = " + format_double(step) + ": " + e.what());
          }
        }
      }
    }
  }
  if (method == "attractors") {
    require(c.get_int("attractors.restarts") >= 2, "attractors.restarts: must be >= 2");
    non_negative("attractors.grape_restarts");
    const double th = c.get_double("attractors.threshold");
    require(th >= -1.0 && th <= 1.0, "attractors.threshold: must lie in [-1, 1]");
  }
  return errors;
}

std::string error_json(const std::string& kind, const std::vector<std::string>& messages) {
  return json{{"error", {{"kind", kind}, {"messages", messages}}}}.dump();
}

RunReport run(const ExperimentConfig& config, const fs::path& output_dir) {
  const auto errors = validate(config);
  if (!errors.empty()) {
    const bool cap = std::any_of(errors.begin(), errors.end(), [](const std::string& e) { return e.rfind("resource cap", 0) == 0; });
    throw ConfigError(cap ? "resource_cap" : "invalid_config", errors);
  }
  fs::create_directories(output_dir);
  RunReport report;
  report.method = config.get("method");
  report.output_dir = output_dir;
  Writer w{output_dir, report.artifacts};

  const auto start = std::chrono::steady_clock::now();
  json summary;
  const std::string& m = report.method;
  if (m == "sd") summary = run_sd(config, w);
  else if (m == "grape") summary = run_grape(config, w);
  else if (m == "crab") summary = run_crab(config, w);
  else if (m == "rl") summary = run_rl(config, w);
  else if (m == "variational") summary = run_variational(config, w);
  else if (m == "dos") summary = run_dos(config, w);
  else if (m == "qscan") summary = run_qscan(config, w);
  else if (m == "attractors") summary = run_attractors(config, w);
  else if (m == "compare") summary = run_compare(config, w);
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  auto resolved = config.resolved();
  resolved["output"] = output_dir.string();
  json manifest{{"tool", "qcontrol"},
                {"version", kVersion},
                {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                      std::to_string(EIGEN_MINOR_VERSION)},
                {"method", m},
                {"seed", config.get_u64("seed")},
                {"config", resolved},
                {"artifacts", report.artifacts},
                {"summary", summary},
                {"wall_time_seconds", report.wall_time_seconds}};
  std::ofstream f(output_dir / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << '\n';
  report.artifacts.push_back("manifest.json");
  return report;
}

}  // namespace qcontrol
