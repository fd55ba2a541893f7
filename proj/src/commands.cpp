#include "kzlab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "kzlab/effective.hpp"
#include "kzlab/errors.hpp"
#include "kzlab/kinetic.hpp"
#include "kzlab/lattice.hpp"
#include "kzlab/moments.hpp"

namespace kzlab {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

void say(const CommandContext& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << '\n';
}

Params with_seed(const CommandContext& ctx) {
  Params p = ctx.params;
  if (ctx.seed) p["seed"] = std::to_string(*ctx.seed);
  return p;
}

std::uint64_t read_seed(ParamReader& r) {
  const long long s = r.integer("seed", 0);
  if (s < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

std::string short_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

// Tracks the files of one run and writes its manifest.
class Outputs {
 public:
  Outputs(const CommandContext& ctx, std::string command, Params params, std::uint64_t seed) : dir_(ctx.out_dir) {
    if (dir_.empty()) dir_ = default_output_dir();
    fs::create_directories(dir_);
    manifest_.command = std::move(command);
    manifest_.params = std::move(params);
    manifest_.seed = seed;
    manifest_.version = code_version();
    manifest_.started = utc_timestamp();
  }

  const fs::path& dir() const { return dir_; }
  const RunManifest& manifest() const { return manifest_; }

  std::ofstream csv(const std::string& name) {
    auto out = open(name);
    out << csv_hash_line(manifest_);
    return out;
  }

  void json_file(const std::string& name, const json& j) {
    auto out = open(name);
    out << j.dump(2) << '\n';
  }

  void warn(const std::string& message) { manifest_.warnings.push_back(message); }

  void finish() {
    manifest_.finished = utc_timestamp();
    write_manifest(dir_ / ("manifest_" + manifest_.command + ".json"), manifest_);
  }

 private:
  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    manifest_.outputs.push_back(name);
    return out;
  }

  fs::path dir_;
  RunManifest manifest_;
};

json check_to_json(const CheckReport& report) {
  json j;
  j["test"] = report.test;
  j["tau"] = report.tau;
  j["samples"] = report.samples;
  j["tolerance_sigmas"] = report.tolerance_sigmas;
  j["all_pass"] = report.all_pass();
  j["entries"] = json::array();
  for (const auto& e : report.entries) {
    j["entries"].push_back({{"label", e.label},
                            {"lhs_re", e.lhs.real()},
                            {"lhs_im", e.lhs.imag()},
                            {"rhs_re", e.rhs.real()},
                            {"rhs_im", e.rhs.imag()},
                            {"stderr_re", e.stderr_re},
                            {"stderr_im", e.stderr_im},
                            {"pass", e.pass}});
  }
  return j;
}

void log_check(const CommandContext& ctx, const CheckReport& report) {
  std::size_t passed = 0;
  for (const auto& e : report.entries) passed += e.pass ? 1 : 0;
  say(ctx, report.test + ": " + std::to_string(passed) + "/" + std::to_string(report.entries.size()) +
               " within " + short_number(report.tolerance_sigmas) + " stderr (tau=" + short_number(report.tau) +
               ", samples=" + std::to_string(report.samples) + ")");
  for (const auto& e : report.entries) {
    if (!e.pass) {
      say(ctx, "  FAIL " + e.label + " lhs=" + fmt(e.lhs.real()) + " rhs=" + fmt(e.rhs.real()) +
                   " stderr=" + fmt(e.stderr_re));
    }
  }
}

// ---- simulate -------------------------------------------------------------

struct SimSetup {
  std::shared_ptr<const ModeLattice> lattice;
  DampingProfile damping;
  ForcingProfile forcing;
  SimConfig config;
  InitialCondition initial;
  std::string mode;
  std::vector<double> nus;
  bool write_states = true;
};

SimSetup read_sim_setup(ParamReader& r, unsigned threads) {
  SimSetup s;
  const int d = static_cast<int>(r.integer("lattice.d", 2));
  const double L = r.real("lattice.L", 1.0);
  const double K = r.real("lattice.K", 1.5);
  s.lattice = std::make_shared<const ModeLattice>(d, L, K);
  s.damping = {r.real("damping.eps1", 0.5), r.real("damping.eps2", 0.5), r.real("damping.beta", 2.0)};
  s.forcing = {r.real("forcing.b0", 1.0), r.real("forcing.p", 1.0)};
  s.config.rho = r.real("sim.rho", 0.0);
  s.config.dt = r.real("sim.dt", 1e-3);
  s.config.T = r.real("sim.T", 1.0);
  s.config.ensemble_size = r.count("sim.ensemble", 100);
  s.config.stride = r.count("sim.stride", 10);
  s.config.blowup_bound = r.real("sim.blowup_bound", 1e6);
  s.config.phase_threshold = r.real("sim.phase_threshold", 0.5);
  s.config.seed = read_seed(r);
  s.config.threads = threads;
  s.mode = r.text("sim.mode", "effective");
  if (s.mode != "effective" && s.mode != "full") throw ConfigError("sim.mode must be effective or full");
  if (s.mode == "full") {
    s.nus = r.reals("sim.nu", {0.1, 0.05, 0.02});
    s.config.average_from = r.real("sim.average_from", 0.5 * s.config.T);
  } else if (r.has("sim.average_from")) {
    s.config.average_from = r.real("sim.average_from");
  }
  s.write_states = r.flag("sim.write_states", s.mode == "effective");
  const double variance = r.real("initial.variance", 0.0);
  if (variance < 0) throw ConfigError("initial.variance must be non-negative");
  if (variance > 0) s.initial.variance.assign(s.lattice->size(), variance);
  s.config.validate();
  (void)s.damping.rates(*s.lattice);
  return s;
}

void write_spectra(std::ostream& out, const EnsembleRun& run) {
  const ModeLattice& lat = *run.lattice;
  out << "tau,mode,mean,stderr\n";
  for (std::size_t j = 0; j < run.taus.size(); ++j) {
    const auto spec = mean_spectrum(run, j);
    for (std::size_t k = 0; k < lat.size(); ++k) {
      out << fmt(run.taus[j]) << ',' << format_mode(lat.mode(k), lat.dim()) << ',' << fmt(spec[k].mean) << ','
          << fmt(spec[k].stderr_of_mean) << '\n';
    }
  }
}

void write_time_average(std::ostream& out, const EnsembleRun& run) {
  const ModeLattice& lat = *run.lattice;
  const auto spec = mean_time_averaged_spectrum(run);
  out << "mode,modulus,mean,stderr\n";
  for (std::size_t k = 0; k < lat.size(); ++k) {
    out << format_mode(lat.mode(k), lat.dim()) << ',' << fmt(lat.modulus(k)) << ',' << fmt(spec[k].mean) << ','
        << fmt(spec[k].stderr_of_mean) << '\n';
  }
}

void write_states(std::ostream& out, const EnsembleRun& run) {
  const ModeLattice& lat = *run.lattice;
  const std::size_t n = lat.size();
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < n; ++k) labels.push_back(format_mode(lat.mode(k), lat.dim()));
  out << "trajectory,snapshot,tau,mode,re,im\n";
  char buf[128];
  for (std::size_t t = 0; t < run.trajectories.size(); ++t) {
    const auto& traj = run.trajectories[t];
    for (std::size_t j = 0; j < traj.completed_snapshots; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        const cplx z = traj.states[j * n + k];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,", t, j, run.taus[j]);
        out << buf << labels[k];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", z.real(), z.imag());
        out << buf;
      }
    }
  }
}

json failures_json(const EnsembleRun& run) {
  json j = json::array();
  for (const auto& f : run.failures()) {
    j.push_back({{"trajectory", f.trajectory}, {"step", f.step}, {"tau", f.tau}, {"mode", f.mode}, {"message", f.message}});
  }
  return j;
}

double l2_distance(const std::vector<ModeMean>& a, const std::vector<ModeMean>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k].mean - b[k].mean) * (a[k].mean - b[k].mean);
  return std::sqrt(s);
}

// Rebuilds an effective-mode ensemble from a simulate output directory.
EnsembleRun load_ensemble(const fs::path& dir, SimSetup& setup, unsigned threads) {
  const RunManifest manifest = read_manifest(dir / "manifest_simulate.json");
  ParamReader r(manifest.params);
  setup = read_sim_setup(r, threads);
  if (setup.mode != "effective") throw ConfigError("moment tests need an effective-mode ensemble");
  const fs::path states = dir / "states.csv";
  if (read_csv_hash(states) != manifest.params_hash()) {
    throw ConfigError(states.string() + " does not carry the manifest's params_hash");
  }
  EnsembleRun run;
  run.lattice = setup.lattice;
  run.config = setup.config;
  const std::size_t snapshots = setup.config.snapshot_count();
  for (std::size_t j = 0; j < snapshots; ++j) {
    run.taus.push_back(static_cast<double>(j * setup.config.stride) * setup.config.dt);
  }
  const ModeLattice& lat = *setup.lattice;
  const std::size_t n = lat.size();
  run.trajectories.resize(setup.config.ensemble_size);
  std::vector<std::size_t> rows(setup.config.ensemble_size, 0);
  for (auto& t : run.trajectories) t.states.assign(snapshots * n, cplx{});

  std::ifstream in(states);
  std::string line;
  std::getline(in, line);  // hash
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string f[6];
    for (auto& field : f) std::getline(ss, field, ',');
    const std::size_t t = std::stoul(f[0]);
    const std::size_t j = std::stoul(f[1]);
    const std::size_t k = lat.index_of(parse_mode(f[3], lat.dim()));
    if (t >= run.trajectories.size() || j >= snapshots) throw ConfigError("states.csv row out of range: " + line);
    run.trajectories[t].states[j * n + k] = {std::stod(f[4]), std::stod(f[5])};
    ++rows[t];
  }
  for (std::size_t t = 0; t < run.trajectories.size(); ++t) {
    run.trajectories[t].completed_snapshots = rows[t] / n;
    if (rows[t] != snapshots * n) run.trajectories[t].failure = TrajectoryFailure{t, 0, 0.0, 0, "incomplete"};
  }
  return run;
}

}  // namespace

// ---- commands -------------------------------------------------------------

int cmd_quadruplets(const CommandContext& ctx) {
  const Params params = with_seed(ctx);
  ParamReader r(params);
  const int d = static_cast<int>(r.integer("d", 2));
  const std::vector<double> Ls = r.reals("L", {1.0});
  const double K = r.real("K", 2.0);
  const std::string k_text = r.text("k", "");
  const bool oracle = r.flag("oracle", false);
  const bool scaling = r.flag("scaling", false);
  const std::string probe_text = r.text("probe", "1,0,0");
  const std::uint64_t seed = read_seed(r);
  r.reject_unknown();

  Outputs out(ctx, "quadruplets", r.resolved(), seed);
  int status = kExitOk;

  if (scaling) {
    const auto probe_vals = parse_reals(probe_text);
    std::array<double, 3> probe{0, 0, 0};
    for (std::size_t i = 0; i < std::min<std::size_t>(3, probe_vals.size()); ++i) probe[i] = probe_vals[i];
    const auto report = count_scaling(d, K, Ls, probe, ctx.threads);
    auto csv = out.csv("scaling.csv");
    csv << "L,modes,total_nontrivial,mean_per_mode,at_probe\n";
    for (const auto& p : report.points) {
      csv << fmt(p.L) << ',' << p.modes << ',' << p.total_nontrivial << ',' << fmt(p.mean_per_mode) << ','
          << p.at_probe << '\n';
    }
    out.json_file("scaling.json", {{"slope_at_probe", report.slope_at_probe},
                                   {"slope_mean_per_mode", report.slope_mean_per_mode},
                                   {"slope_total", report.slope_total},
                                   {"target", 2 * d - 1}});
    say(ctx, "slope at probe " + short_number(report.slope_at_probe) + ", mean per mode " +
                 short_number(report.slope_mean_per_mode) + ", total " + short_number(report.slope_total) +
                 " (target " + std::to_string(2 * d - 1) + ")");
    out.finish();
    return status;
  }

  if (Ls.size() != 1) throw ConfigError("give a single L unless scaling is requested");
  const ModeLattice lattice(d, Ls.front(), K);
  std::vector<std::size_t> targets;
  if (!k_text.empty()) {
    targets.push_back(lattice.index_of(parse_mode(k_text, d)));
  } else {
    for (std::size_t k = 0; k < lattice.size(); ++k) targets.push_back(k);
  }

  std::vector<Quadruplet> all;
  std::size_t total_nontrivial = 0;
  std::size_t total_trivial = 0;
  std::size_t oracle_diff = 0;
  auto counts = out.csv("counts.csv");
  counts << "mode,nontrivial,trivial\n";
  for (auto k : targets) {
    const auto quads = enumerate_quadruplets(lattice, k);
    std::size_t nt = 0;
    for (const auto& q : quads) nt += q.trivial ? 0 : 1;
    total_nontrivial += nt;
    total_trivial += quads.size() - nt;
    counts << format_mode(lattice.mode(k), d) << ',' << nt << ',' << quads.size() - nt << '\n';
    if (oracle) {
      const auto brute = enumerate_quadruplets_bruteforce(lattice, k);
      std::vector<Quadruplet> diff;
      std::set_symmetric_difference(quads.begin(), quads.end(), brute.begin(), brute.end(), std::back_inserter(diff));
      oracle_diff += diff.size();
    }
    all.insert(all.end(), quads.begin(), quads.end());
  }
  {
    auto csv = out.csv("quadruplets.csv");
    write_quadruplets_csv(csv, lattice, all);
  }
  json summary{{"modes", lattice.size()}, {"total_nontrivial", total_nontrivial}, {"total_trivial", total_trivial}};
  if (oracle) summary["oracle_difference"] = oracle_diff;
  out.json_file("quadruplet_summary.json", summary);
  say(ctx, "modes " + std::to_string(lattice.size()) + ", nontrivial " + std::to_string(total_nontrivial) +
               ", trivial " + std::to_string(total_trivial));
  if (oracle) {
    say(ctx, "oracle difference: " + std::to_string(oracle_diff));
    if (oracle_diff != 0) status = kExitStatistical;
  }
  out.finish();
  return status;
}

int cmd_simulate(const CommandContext& ctx) {
  const Params params = with_seed(ctx);
  ParamReader r(params);
  SimSetup setup = read_sim_setup(r, ctx.threads);
  r.reject_unknown();
  Outputs out(ctx, "simulate", r.resolved(), setup.config.seed);
  int status = kExitOk;

  auto note_failures = [&](const EnsembleRun& run, const std::string& suffix) {
    for (const auto& w : run.warnings) out.warn(w);
    if (run.ok()) return;
    out.json_file("failures" + suffix + ".json", failures_json(run));
    say(ctx, std::to_string(run.failures().size()) + " trajectories blew up; see failures" + suffix + ".json");
    status = kExitNumerical;
  };

  if (setup.mode == "effective") {
    const EnsembleRun run = simulate(setup.config, setup.lattice, setup.damping, setup.forcing, setup.initial);
    note_failures(run, "");
    {
      auto csv = out.csv("spectra.csv");
      write_spectra(csv, run);
    }
    if (setup.config.average_from) {
      auto csv = out.csv("time_average.csv");
      write_time_average(csv, run);
    }
    if (setup.write_states) {
      auto csv = out.csv("states.csv");
      write_states(csv, run);
    }
    if (setup.config.rho == 0.0 && run.ok()) {
      const auto gamma = setup.damping.rates(*setup.lattice);
      const double relax = 5.0 / *std::min_element(gamma.begin(), gamma.end());
      if (run.taus.back() >= relax) {
        const auto report = ou_check(snapshot_of(run, run.taus.size() - 1), setup.damping, setup.forcing);
        out.json_file("ou_report.json", check_to_json(report));
        log_check(ctx, report);
        if (!report.all_pass()) status = kExitStatistical;
      } else {
        out.warn("OU check skipped: T < 5 / min(gamma) = " + fmt(relax));
      }
    }
    say(ctx, "simulated " + std::to_string(run.trajectories.size()) + " trajectories, " +
                 std::to_string(run.taus.size()) + " snapshots");
  } else {
    SimConfig eff = setup.config;
    eff.nu_fast.reset();
    eff.keep_states = false;
    const EnsembleRun reference = simulate(eff, setup.lattice, setup.damping, setup.forcing, setup.initial);
    note_failures(reference, "_effective");
    {
      auto csv = out.csv("time_average_effective.csv");
      write_time_average(csv, reference);
    }
    const auto ref_spec = mean_time_averaged_spectrum(reference);
    std::vector<std::pair<double, double>> trend;
    for (double nu : setup.nus) {
      SimConfig cfg = setup.config;
      cfg.nu_fast = nu;
      cfg.keep_states = false;
      const EnsembleRun run = simulate(cfg, setup.lattice, setup.damping, setup.forcing, setup.initial);
      const std::string suffix = "_nu_" + short_number(nu);
      note_failures(run, suffix);
      {
        auto csv = out.csv("spectra" + suffix + ".csv");
        write_spectra(csv, run);
      }
      {
        auto csv = out.csv("time_average" + suffix + ".csv");
        write_time_average(csv, run);
      }
      trend.emplace_back(nu, l2_distance(mean_time_averaged_spectrum(run), ref_spec));
      say(ctx, "nu=" + short_number(nu) + " L2 distance to effective " + short_number(trend.back().second));
    }
    auto csv = out.csv("trend.csv");
    csv << "nu,l2_distance\n";
    for (const auto& [nu, dist] : trend) csv << fmt(nu) << ',' << fmt(dist) << '\n';
  }
  out.finish();
  return status;
}

int cmd_moments(const CommandContext& ctx) {
  const Params params = with_seed(ctx);
  ParamReader r(params);
  const std::string dir = r.text("dir", ctx.out_dir.empty() ? default_output_dir().string() : ctx.out_dir.string());
  const std::string test = r.text("test", "chain2");
  const long long snapshot_req = r.integer("snapshot", -1);
  const std::size_t h = r.count("stride", 1);
  const double sigmas = r.real("sigmas", 3.0);
  const std::size_t min_samples = r.count("min_samples", 100);
  const std::uint64_t seed = read_seed(r);
  r.reject_unknown();
  if (test != "chain2" && test != "chain4" && test != "closure" && test != "ou") {
    throw ConfigError("test must be chain2, chain4, closure or ou");
  }

  SimSetup setup;
  const EnsembleRun run = load_ensemble(dir, setup, ctx.threads);
  const std::size_t snapshots = run.taus.size();
  const std::size_t s = snapshot_req < 0 ? snapshots / 2 : static_cast<std::size_t>(snapshot_req);
  if (s >= snapshots) throw ConfigError("snapshot " + std::to_string(s) + " out of range");
  const EnsembleSnapshot snap = snapshot_of(run, s);
  if (snap.samples < min_samples) {
    say(ctx, "insufficient samples: " + std::to_string(snap.samples) + " successful trajectories; rerun simulate with "
             "sim.ensemble >= " + std::to_string(std::max<std::size_t>(min_samples, 1000)));
    return kExitUsage;
  }

  Outputs out(ctx, "moments", r.resolved(), seed);
  const ModeLattice& lat = *setup.lattice;
  std::vector<MomentIndex> seconds;
  for (std::size_t k = 0; k < lat.size(); ++k) seconds.push_back({{lat.mode(k)}, {lat.mode(k)}});
  {
    auto csv = out.csv("moments.csv");
    write_moments_csv(csv, lat, estimate_moments(snap, seconds));
  }

  CheckReport report;
  const ResonantSystem system(setup.lattice);
  if (test == "chain2") {
    report = chain2_check(run, system, s, h, setup.damping, setup.forcing, setup.config.rho, sigmas);
  } else if (test == "chain4") {
    std::vector<FourthIndex> idx;
    for (std::size_t k = 0; k < lat.size(); ++k) {
      for (const auto& q : system.nontrivial(k)) idx.push_back({q.k1, q.k2, q.k, q.k3});
    }
    if (idx.empty()) throw ConfigError("lattice has no nontrivial quadruplets for the chain4 test");
    report = chain4_check(run, system, s, h, idx, setup.damping, setup.config.rho, sigmas);
  } else if (test == "closure") {
    const std::size_t n = lat.size();
    const std::size_t a = 0, b = std::min<std::size_t>(1, n - 1), c = std::min<std::size_t>(2, n - 1),
                      e = std::min<std::size_t>(3, n - 1);
    std::vector<std::array<std::size_t, 6>> idx{{a, a, a, a, a, a}, {a, a, b, a, a, b}, {a, b, c, a, b, c},
                                                {a, b, c, b, c, a}, {a, b, c, a, b, e}};
    report = closure_check(snap, idx, sigmas);
  } else {
    report = ou_check(snap, setup.damping, setup.forcing, sigmas);
  }
  out.json_file("moments_" + test + ".json", check_to_json(report));
  log_check(ctx, report);
  out.finish();
  return report.all_pass() ? kExitOk : kExitStatistical;
}

int cmd_kinetic(const CommandContext& ctx, const std::string& action) {
  const Params params = with_seed(ctx);
  ParamReader r(params);

  if (action == "kz-exponents") {
    const int d = static_cast<int>(r.integer("kinetic.d", 2));
    const std::string m_text = r.text("kinetic.m", "0");
    const std::uint64_t seed = read_seed(r);
    r.reject_unknown();
    Rational m;
    const auto slash = m_text.find('/');
    try {
      m = slash == std::string::npos ? Rational(std::stoll(m_text))
                                     : Rational(std::stoll(m_text.substr(0, slash)), std::stoll(m_text.substr(slash + 1)));
    } catch (const std::exception&) {
      throw ConfigError("kinetic.m: '" + m_text + "' is not an integer or a fraction p/q");
    }
    const auto e = kz_exponents(d, m);
    Outputs out(ctx, "kinetic-kz-exponents", r.resolved(), seed);
    out.json_file("kz_exponents.json", {{"d", d},
                                        {"m", format_rational(m)},
                                        {"sigma1", format_rational(e.sigma1)},
                                        {"sigma2", format_rational(e.sigma2)},
                                        {"rj", {format_rational(e.rj_flat), format_rational(e.rj_equipartition)}}});
    say(ctx, "(" + format_rational(e.sigma1) + ", " + format_rational(e.sigma2) + ")  RJ: (" +
                 format_rational(e.rj_flat) + ", " + format_rational(e.rj_equipartition) + ")");
    out.finish();
    return kExitOk;
  }

  KineticConfig cfg;
  cfg.d = static_cast<int>(r.integer("kinetic.d", 2));
  cfg.m = r.real("kinetic.m", 0.0);
  cfg.damping_coeff = r.real("kinetic.damping_coeff", 1.0);
  cfg.eps4 = r.real("kinetic.eps4", 1.0);
  cfg.phi_const = r.real("kinetic.phi_const", 4.0 * std::numbers::pi / 3.0);
  cfg.k_min = r.real("kinetic.k_min", 0.1);
  cfg.k_max = r.real("kinetic.k_max", 10.0);
  cfg.samples = r.count("kinetic.samples", 1'000'000);
  cfg.u_max = r.real("kinetic.u_max", 60.0);
  cfg.seed = read_seed(r);
  cfg.threads = ctx.threads;
  const double k_eval = r.real("kinetic.k_eval", std::sqrt(cfg.k_min * cfg.k_max));

  json meta{{"phi_const", cfg.phi_const}, {"eps4", cfg.eps4},     {"k_min", cfg.k_min}, {"k_max", cfg.k_max},
            {"d", cfg.d},                 {"m", cfg.m},           {"seed", cfg.seed},   {"samples", cfg.samples},
            {"k_eval", k_eval}};

  if (action == "scan") {
    std::vector<double> grid;
    for (int i = -24; i <= 0; ++i) grid.push_back(i / 12.0);
    grid = r.reals("scan.sigmas", grid);
    r.reject_unknown();
    cfg.validate();
    Outputs out(ctx, "kinetic-scan", r.resolved(), cfg.seed);
    const ScanResult scan = stationarity_scan(grid, k_eval, cfg);
    {
      auto csv = out.csv("scan.csv");
      write_scan_csv(csv, scan);
    }
    double rejected = 0.0;
    for (const auto& row : scan.rows) rejected = std::max(rejected, row.residual.rejected_fraction());
    json report = meta;
    report["dips"] = scan.dips;
    report["rejected_fraction"] = rejected;
    out.json_file("scan_report.json", report);
    std::string dips;
    for (double x : scan.dips) dips += (dips.empty() ? "" : ", ") + short_number(x);
    say(ctx, "dips at sigma = " + (dips.empty() ? std::string("none") : dips));
    out.finish();
    return kExitOk;
  }

  if (action == "rj-check") {
    const double sigmas = r.real("scan.sigmas_tolerance", 3.0);
    r.reject_unknown();
    cfg.validate();
    Outputs out(ctx, "kinetic-rj-check", r.resolved(), cfg.seed);
    const std::vector<SpectrumFn> spectra{SpectrumFn::power_law(1.0, 0.0, cfg.k_min, cfg.k_max),
                                          SpectrumFn::power_law(1.0, -2.0, cfg.k_min, cfg.k_max)};
    const auto est = collision_integrals(k_eval, spectra, cfg);
    // Roundoff floor: the four products cancel only up to a few ulps of
    // their magnitudes.
    std::vector<ManifoldIntegrand> scale_fs;
    for (const auto& n : spectra) {
      scale_fs.push_back([&n, &cfg](double m0, double m1, double m2, double m3) -> std::optional<double> {
        const double a = *n(m0), b = *n(m1), c = *n(m2), e = *n(m3);
        return cfg.eps4 * kernel_T(m0, m1, m2, m3, cfg) * (b * c * e + a * b * c + a * c * e + a * b * e);
      });
    }
    const auto scale = integrate_manifold(k_eval, scale_fs, cfg.samples, cfg.seed, cfg.threads, cfg.u_max);
    json report = meta;
    report["checks"] = json::array();
    bool pass = true;
    const char* names[] = {"n=C", "n=C/k^2"};
    for (std::size_t i = 0; i < 2; ++i) {
      const double tol = sigmas * est[i].stderr_of_mean + 1e-10 * std::abs(scale[i].value);
      const bool ok = std::abs(est[i].value) <= tol;
      pass = pass && ok;
      report["checks"].push_back({{"spectrum", names[i]},
                                  {"residual", est[i].value},
                                  {"stderr", est[i].stderr_of_mean},
                                  {"tolerance", tol},
                                  {"pass", ok}});
      say(ctx, std::string(names[i]) + ": residual " + fmt(est[i].value) + " tolerance " + fmt(tol) +
                   (ok ? " pass" : " FAIL"));
    }
    out.json_file("rj_check.json", report);
    out.finish();
    return pass ? kExitOk : kExitStatistical;
  }

  if (action == "evolve") {
    const std::size_t nodes = r.count("evolve.nodes", 64);
    EvolveOptions opt;
    opt.dt = r.real("evolve.dt", 1e-3);
    opt.steps = r.count("evolve.steps", 1000);
    opt.record_every = r.count("evolve.record_every", 100);
    opt.bound = r.real("evolve.bound", 1e12);
    const double sigma0 = r.real("evolve.sigma0", 0.0);
    const double amp0 = r.real("evolve.amplitude0", 1.0);
    const double f_amp = r.real("evolve.forcing_amp", 0.0);
    const double f_k = r.real("evolve.forcing_k", 2.0 * cfg.k_min);
    const double f_w = r.real("evolve.forcing_width", cfg.k_min);
    r.reject_unknown();
    cfg.validate();
    if (nodes < 32) throw ConfigError("evolve.nodes must be at least 32");
    std::vector<double> grid(nodes), values(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      grid[i] = cfg.k_min * std::pow(cfg.k_max / cfg.k_min, static_cast<double>(i) / static_cast<double>(nodes - 1));
      values[i] = amp0 * std::pow(grid[i], sigma0);
    }
    const RadialFn forcing = [f_amp, f_k, f_w](double k) {
      const double z = (k - f_k) / f_w;
      return f_amp * std::exp(-z * z);
    };
    Outputs out(ctx, "kinetic-evolve", r.resolved(), cfg.seed);
    const auto result = evolve_spectrum(SpectrumFn::grid(grid, values), forcing, cfg, opt);
    {
      auto csv = out.csv("evolution.csv");
      write_evolution_csv(csv, result);
    }
    json report = meta;
    report["clamp_count"] = result.clamp_count;
    report["rejected_fraction"] = result.rejected_fraction;
    out.json_file("evolve_report.json", report);
    say(ctx, "evolved " + std::to_string(opt.steps) + " steps; clamps " + std::to_string(result.clamp_count) +
                 ", rejected fraction " + short_number(result.rejected_fraction));
    out.finish();
    return kExitOk;
  }

  throw ConfigError("unknown kinetic action '" + action + "' (scan, evolve, rj-check, kz-exponents)");
}

int run_guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingDataError& e) {
    err << "missing data: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ResourceLimitError& e) {
    err << "resource limit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "out of range: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace kzlab
