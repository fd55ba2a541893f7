#include "kzlab/moments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "kzlab/stats.hpp"

namespace kzlab {

namespace {

constexpr cplx kI{0.0, 1.0};

// Wick pairing count: permutations pi with lower[pi(i)] == upper[i] for all i.
std::size_t pairing_count(std::span<const std::size_t> upper, std::span<const std::size_t> lower) {
  if (upper.size() != lower.size()) return 0;
  std::vector<std::size_t> perm(lower.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t count = 0;
  do {
    bool match = true;
    for (std::size_t i = 0; i < upper.size() && match; ++i) match = upper[i] == lower[perm[i]];
    if (match) ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return count;
}

cplx sample_product(std::span<const cplx> v, std::span<const std::size_t> upper, std::span<const std::size_t> lower) {
  cplx u{1.0, 0.0};
  for (auto i : upper) u *= v[i];
  cplx w{1.0, 0.0};
  for (auto i : lower) w *= v[i];
  return u * std::conj(w);
}

struct ComplexStats {
  RunningStats re;
  RunningStats im;

  void add(cplx z) {
    re.add(z.real());
    im.add(z.imag());
  }
  cplx mean() const { return {re.mean(), im.mean()}; }
};

std::string describe(const ModeLattice& lattice, const SlotMoment& m) {
  std::vector<ModeIndex> up;
  std::vector<ModeIndex> lo;
  for (auto i : m.upper) up.push_back(lattice.mode(i));
  for (auto i : m.lower) lo.push_back(lattice.mode(i));
  return "M^{" + format_modes(up, lattice.dim()) + "}_{" + format_modes(lo, lattice.dim()) + "}";
}

cplx require(const MomentProvider& provider, const ModeLattice& lattice, const SlotMoment& m) {
  auto value = provider(m);
  if (!value) throw MissingDataError("moment " + describe(lattice, m) + " is not available");
  return *value;
}

double gamma_sum(const ModeLattice& lattice, const FourthIndex& q, const DampingProfile& damping) {
  return damping.rate(lattice.modulus(q.k)) + damping.rate(lattice.modulus(q.k1)) +
         damping.rate(lattice.modulus(q.k2)) + damping.rate(lattice.modulus(q.k3));
}

bool within(cplx diff, double se_re, double se_im, double sigmas) {
  return std::abs(diff.real()) <= sigmas * se_re && std::abs(diff.imag()) <= sigmas * se_im;
}

// Trajectories that completed without failure and kept their states.
std::vector<const Trajectory*> usable(const EnsembleRun& run) {
  std::vector<const Trajectory*> out;
  for (const auto& t : run.trajectories) {
    if (t.failure) continue;
    if (t.states.empty()) throw MissingDataError("ensemble run was made without keep_states");
    out.push_back(&t);
  }
  return out;
}

std::span<const cplx> state_at(const Trajectory& t, std::size_t snapshot, std::size_t n) {
  return std::span<const cplx>(t.states).subspan(snapshot * n, n);
}

void check_chain_window(const EnsembleRun& run, std::size_t s, std::size_t h) {
  if (h == 0) throw std::invalid_argument("difference stride must be positive");
  if (s < h || s + h >= run.taus.size()) {
    throw std::invalid_argument("snapshots " + std::to_string(s) + " +- " + std::to_string(h) + " fall outside the run (" +
                                std::to_string(run.taus.size()) + " snapshots)");
  }
}

}  // namespace

std::string format_modes(std::span<const ModeIndex> modes, int d) {
  std::string out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (i) out += '|';
    out += format_mode(modes[i], d);
  }
  return out;
}

std::vector<ModeIndex> parse_modes(const std::string& text, int d) {
  std::vector<ModeIndex> out;
  if (text.empty()) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, '|')) out.push_back(parse_mode(item, d));
  return out;
}

SlotMoment resolve(const ModeLattice& lattice, const MomentIndex& idx) {
  SlotMoment out;
  for (const auto& m : idx.upper) out.upper.push_back(lattice.index_of(m));
  for (const auto& m : idx.lower) out.lower.push_back(lattice.index_of(m));
  return out;
}

EnsembleSnapshot snapshot_of(const EnsembleRun& run, std::size_t snapshot) {
  if (snapshot >= run.taus.size()) throw std::out_of_range("snapshot index out of range");
  const std::size_t n = run.modes();
  EnsembleSnapshot out;
  out.lattice = run.lattice;
  out.tau = run.taus[snapshot];
  for (const Trajectory* t : usable(run)) {
    auto row = state_at(*t, snapshot, n);
    out.v.insert(out.v.end(), row.begin(), row.end());
    ++out.samples;
  }
  return out;
}

MomentEstimate estimate_moment(const EnsembleSnapshot& snapshot, const MomentIndex& idx) {
  const SlotMoment slots = resolve(*snapshot.lattice, idx);
  if (snapshot.samples < 2) throw MissingDataError("moment estimation needs at least 2 samples");
  ComplexStats acc;
  for (std::size_t j = 0; j < snapshot.samples; ++j) acc.add(sample_product(snapshot.sample(j), slots.upper, slots.lower));
  MomentEstimate out;
  out.value = acc.mean();
  out.stderr_re = acc.re.stderr_of_mean();
  out.stderr_im = acc.im.stderr_of_mean();
  out.samples = snapshot.samples;
  if (idx.order() % 2 == 1) out.warning = "odd-order moment; its expectation is zero";
  return out;
}

MomentEstimate estimate_moment_time_averaged(const EnsembleRun& run, const MomentIndex& idx, std::size_t first,
                                             std::size_t last) {
  if (first > last || last >= run.taus.size()) throw std::out_of_range("time-average window out of range");
  const SlotMoment slots = resolve(*run.lattice, idx);
  const auto trajectories = usable(run);
  if (trajectories.size() < 2) throw MissingDataError("moment estimation needs at least 2 samples");
  const std::size_t n = run.modes();
  ComplexStats acc;
  for (const Trajectory* t : trajectories) {
    cplx sum{0.0, 0.0};
    for (std::size_t s = first; s <= last; ++s) sum += sample_product(state_at(*t, s, n), slots.upper, slots.lower);
    acc.add(sum / static_cast<double>(last - first + 1));
  }
  MomentEstimate out;
  out.value = acc.mean();
  out.stderr_re = acc.re.stderr_of_mean();
  out.stderr_im = acc.im.stderr_of_mean();
  out.samples = trajectories.size();
  out.time_averaged = true;
  if (idx.order() % 2 == 1) out.warning = "odd-order moment; its expectation is zero";
  return out;
}

EnsembleStats estimate_moments(const EnsembleSnapshot& snapshot, std::span<const MomentIndex> indices) {
  EnsembleStats out;
  out.sample_count = snapshot.samples;
  out.tau = snapshot.tau;
  for (const auto& idx : indices) out.estimates.emplace(idx, estimate_moment(snapshot, idx));
  return out;
}

MomentProvider provider_from(const EnsembleStats& stats, const ModeLattice& lattice) {
  return [&stats, &lattice](const SlotMoment& m) -> std::optional<cplx> {
    MomentIndex idx;
    for (auto i : m.upper) idx.upper.push_back(lattice.mode(i));
    for (auto i : m.lower) idx.lower.push_back(lattice.mode(i));
    if (auto it = stats.estimates.find(idx); it != stats.estimates.end()) return it->second.value;
    std::swap(idx.upper, idx.lower);
    if (auto it = stats.estimates.find(idx); it != stats.estimates.end()) return std::conj(it->second.value);
    return std::nullopt;
  };
}

MomentProvider gaussian_provider(std::span<const double> second_moments) {
  std::vector<double> m(second_moments.begin(), second_moments.end());
  return [m = std::move(m)](const SlotMoment& idx) -> std::optional<cplx> {
    for (auto i : idx.upper) {
      if (i >= m.size()) return std::nullopt;
    }
    const std::size_t count = pairing_count(idx.upper, idx.lower);
    if (count == 0) return cplx{0.0, 0.0};
    double prod = static_cast<double>(count);
    for (auto i : idx.upper) prod *= m[i];
    return cplx{prod, 0.0};
  };
}

double chain_rhs_second(const ResonantSystem& system, std::size_t k, const MomentProvider& moments,
                        const DampingProfile& damping, const ForcingProfile& forcing, double rho) {
  const ModeLattice& lattice = system.lattice();
  const double gamma = damping.rate(lattice.modulus(k));
  const double b = forcing.amplitude(lattice.modulus(k));
  const double mkk = require(moments, lattice, {{k}, {k}}).real();
  double collision = 0.0;
  if (rho != 0.0) {
    for (const auto& q : system.nontrivial(k)) collision += require(moments, lattice, {{q.k1, q.k2}, {q.k, q.k3}}).imag();
  }
  return -2.0 * gamma * mkk + 2.0 * b * b + 2.0 * rho * collision;
}

bool noise_free(const FourthIndex& q) noexcept {
  return q.k != q.k1 && q.k != q.k2 && q.k3 != q.k1 && q.k3 != q.k2;
}

cplx chain_sixth_sum(const ResonantSystem& system, const FourthIndex& q, const MomentProvider& sixth, double rho) {
  if (rho == 0.0) return {0.0, 0.0};
  const ModeLattice& lattice = system.lattice();
  cplx acc{0.0, 0.0};
  for (const auto& t : system.quadruplets(q.k1)) acc -= require(sixth, lattice, {{t.k1, t.k2, q.k2}, {t.k3, q.k, q.k3}});
  for (const auto& t : system.quadruplets(q.k2)) acc -= require(sixth, lattice, {{q.k1, t.k1, t.k2}, {t.k3, q.k, q.k3}});
  for (const auto& t : system.quadruplets(q.k)) acc += require(sixth, lattice, {{q.k1, q.k2, t.k3}, {t.k1, t.k2, q.k3}});
  for (const auto& t : system.quadruplets(q.k3)) acc += require(sixth, lattice, {{q.k1, q.k2, t.k3}, {q.k, t.k1, t.k2}});
  return kI * rho * acc;
}

cplx chain_rhs_fourth(const ResonantSystem& system, const FourthIndex& q, const MomentProvider& moments,
                      const DampingProfile& damping, double rho) {
  if (!noise_free(q)) {
    throw std::invalid_argument("fourth-moment equation needs k, k3 distinct from k1, k2");
  }
  const ModeLattice& lattice = system.lattice();
  const cplx m = require(moments, lattice, {{q.k1, q.k2}, {q.k, q.k3}});
  return -gamma_sum(lattice, q, damping) * m + chain_sixth_sum(system, q, moments, rho);
}

cplx quasistationary_fourth(const ModeLattice& lattice, const FourthIndex& q, cplx f, const DampingProfile& damping) {
  const double g = gamma_sum(lattice, q, damping);
  if (g == 0.0) throw std::invalid_argument("damping sum is zero; no quasistationary value");
  return f / g;
}

cplx qg_closure_sixth(std::span<const std::size_t, 3> upper, std::span<const std::size_t, 3> lower,
                      std::span<const double> second_moments) {
  const std::size_t count = pairing_count(upper, lower);
  if (count == 0) return {0.0, 0.0};
  double prod = static_cast<double>(count);
  for (auto i : upper) prod *= second_moments[i];
  return {prod, 0.0};
}

ClosedRate closed_rhs_discrete(const ModeLattice& lattice, std::size_t k, std::span<const Quadruplet> quadruplets,
                               std::span<const double> second_moments, const DampingProfile& damping,
                               const ForcingProfile& forcing, double rho) {
  if (second_moments.size() != lattice.size()) throw std::invalid_argument("need one second moment per lattice mode");
  const auto& m = second_moments;
  const double gamma = damping.rate(lattice.modulus(k));
  const double b = forcing.amplitude(lattice.modulus(k));
  ClosedRate out;
  if (rho != 0.0) {
    double sum = 0.0;
    for (const auto& q : quadruplets) {
      if (q.trivial) continue;
      if (q.k != k) throw std::invalid_argument("quadruplet does not end at the requested mode");
      if (q.k1 == q.k2 || q.k == q.k3) {
        ++out.skipped;
        continue;
      }
      const double c = m[q.k1] * m[q.k2] * m[q.k3] + m[k] * m[q.k1] * m[q.k2] - m[k] * m[q.k2] * m[q.k3] -
                       m[k] * m[q.k1] * m[q.k3];
      sum += c / gamma_sum(lattice, {q.k1, q.k2, q.k, q.k3}, damping);
    }
    out.collision = 4.0 * rho * rho * sum;
  }
  out.value = -2.0 * gamma * m[k] + 2.0 * b * b + out.collision;
  return out;
}

ClosedRate closed_rhs_discrete(const ResonantSystem& system, std::size_t k, std::span<const double> second_moments,
                               const DampingProfile& damping, const ForcingProfile& forcing, double rho) {
  return closed_rhs_discrete(system.lattice(), k, system.nontrivial(k), second_moments, damping, forcing, rho);
}

bool CheckReport::all_pass() const noexcept {
  return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.pass; });
}

CheckReport chain2_check(const EnsembleRun& run, const ResonantSystem& system, std::size_t s, std::size_t h,
                         const DampingProfile& damping, const ForcingProfile& forcing, double rho, double sigmas) {
  check_chain_window(run, s, h);
  const ModeLattice& lattice = system.lattice();
  const std::size_t n = lattice.size();
  const auto trajectories = usable(run);
  if (trajectories.size() < 2) throw MissingDataError("chain check needs at least 2 trajectories");
  const double width = run.taus[s + h] - run.taus[s - h];
  const auto gamma = damping.rates(lattice);
  const auto b = forcing.amplitudes(lattice);

  CheckReport report;
  report.test = "chain2";
  report.tau = run.taus[s];
  report.samples = trajectories.size();
  report.tolerance_sigmas = sigmas;
  for (std::size_t k = 0; k < n; ++k) {
    RunningStats lhs, rhs, diff;
    for (const Trajectory* t : trajectories) {
      const auto before = state_at(*t, s - h, n);
      const auto now = state_at(*t, s, n);
      const auto after = state_at(*t, s + h, n);
      const double l = (std::norm(after[k]) - std::norm(before[k])) / width;
      double collision = 0.0;
      for (const auto& q : system.nontrivial(k)) {
        collision += (now[q.k1] * now[q.k2] * std::conj(now[q.k] * now[q.k3])).imag();
      }
      const double r = -2.0 * gamma[k] * std::norm(now[k]) + 2.0 * b[k] * b[k] + 2.0 * rho * collision;
      lhs.add(l);
      rhs.add(r);
      diff.add(l - r);
    }
    CheckEntry e;
    e.label = format_mode(lattice.mode(k), lattice.dim());
    e.lhs = lhs.mean();
    e.rhs = rhs.mean();
    e.stderr_re = diff.stderr_of_mean();
    e.pass = std::abs(diff.mean()) <= sigmas * e.stderr_re;
    report.entries.push_back(std::move(e));
  }
  return report;
}

CheckReport chain4_check(const EnsembleRun& run, const ResonantSystem& system, std::size_t s, std::size_t h,
                         std::span<const FourthIndex> indices, const DampingProfile& damping, double rho,
                         double sigmas) {
  check_chain_window(run, s, h);
  const ModeLattice& lattice = system.lattice();
  const std::size_t n = lattice.size();
  const auto trajectories = usable(run);
  if (trajectories.size() < 2) throw MissingDataError("chain check needs at least 2 trajectories");
  const double width = run.taus[s + h] - run.taus[s - h];

  CheckReport report;
  report.test = "chain4";
  report.tau = run.taus[s];
  report.samples = trajectories.size();
  report.tolerance_sigmas = sigmas;
  for (const auto& q : indices) {
    if (!noise_free(q)) throw std::invalid_argument("fourth-moment equation needs k, k3 distinct from k1, k2");
    const double g = gamma_sum(lattice, q, damping);
    const std::array<std::size_t, 2> up{q.k1, q.k2};
    const std::array<std::size_t, 2> lo{q.k, q.k3};
    ComplexStats lhs, rhs, diff;
    for (const Trajectory* t : trajectories) {
      const auto now = state_at(*t, s, n);
      const cplx l = (sample_product(state_at(*t, s + h, n), up, lo) - sample_product(state_at(*t, s - h, n), up, lo)) /
                     width;
      MomentProvider per_sample = [now](const SlotMoment& m) -> std::optional<cplx> {
        return sample_product(now, m.upper, m.lower);
      };
      const cplx r = -g * sample_product(now, up, lo) + chain_sixth_sum(system, q, per_sample, rho);
      lhs.add(l);
      rhs.add(r);
      diff.add(l - r);
    }
    CheckEntry e;
    e.label = "M^{" + format_modes(std::vector{lattice.mode(q.k1), lattice.mode(q.k2)}, lattice.dim()) + "}_{" +
              format_modes(std::vector{lattice.mode(q.k), lattice.mode(q.k3)}, lattice.dim()) + "}";
    e.lhs = lhs.mean();
    e.rhs = rhs.mean();
    e.stderr_re = diff.re.stderr_of_mean();
    e.stderr_im = diff.im.stderr_of_mean();
    e.pass = within(diff.mean(), e.stderr_re, e.stderr_im, sigmas);
    report.entries.push_back(std::move(e));
  }
  return report;
}

CheckReport closure_check(const EnsembleSnapshot& snapshot, std::span<const std::array<std::size_t, 6>> indices,
                          double sigmas) {
  if (snapshot.samples < 2) throw MissingDataError("closure check needs at least 2 samples");
  const ModeLattice& lattice = *snapshot.lattice;
  const std::size_t n = lattice.size();
  std::vector<RunningStats> second(n);
  for (std::size_t j = 0; j < snapshot.samples; ++j) {
    const auto v = snapshot.sample(j);
    for (std::size_t k = 0; k < n; ++k) second[k].add(std::norm(v[k]));
  }
  std::vector<double> m(n);
  for (std::size_t k = 0; k < n; ++k) m[k] = second[k].mean();

  CheckReport report;
  report.test = "closure";
  report.tau = snapshot.tau;
  report.samples = snapshot.samples;
  report.tolerance_sigmas = sigmas;
  for (const auto& idx : indices) {
    const std::array<std::size_t, 3> up{idx[0], idx[1], idx[2]};
    const std::array<std::size_t, 3> lo{idx[3], idx[4], idx[5]};
    for (auto i : idx) {
      if (i >= n) throw std::out_of_range("closure index outside the lattice");
    }
    const cplx closure = qg_closure_sixth(up, lo, m);
    // Delta method: the closure is a product of estimated second moments, so
    // its sampling fluctuation is linearised through per-sample influences.
    ComplexStats sixth, diff;
    for (std::size_t j = 0; j < snapshot.samples; ++j) {
      const auto v = snapshot.sample(j);
      const cplx x = sample_product(v, up, lo);
      double influence = 0.0;
      if (closure != cplx{0.0, 0.0}) {
        for (std::size_t a = 0; a < 3; ++a) {
          influence += closure.real() / m[up[a]] * (std::norm(v[up[a]]) - m[up[a]]);
        }
      }
      sixth.add(x);
      diff.add(x - influence);
    }
    CheckEntry e;
    std::vector<ModeIndex> um, lm;
    for (auto i : up) um.push_back(lattice.mode(i));
    for (auto i : lo) lm.push_back(lattice.mode(i));
    e.label = "M^{" + format_modes(um, lattice.dim()) + "}_{" + format_modes(lm, lattice.dim()) + "}";
    e.lhs = sixth.mean();
    e.rhs = closure;
    e.stderr_re = diff.re.stderr_of_mean();
    e.stderr_im = diff.im.stderr_of_mean();
    e.pass = within(e.lhs - e.rhs, e.stderr_re, e.stderr_im, sigmas);
    report.entries.push_back(std::move(e));
  }
  return report;
}

CheckReport ou_check(const EnsembleSnapshot& snapshot, const DampingProfile& damping, const ForcingProfile& forcing,
                     double sigmas) {
  if (snapshot.samples < 2) throw MissingDataError("OU check needs at least 2 samples");
  const ModeLattice& lattice = *snapshot.lattice;
  const std::size_t n = lattice.size();
  const auto gamma = damping.rates(lattice);
  const auto b = forcing.amplitudes(lattice);
  CheckReport report;
  report.test = "ou";
  report.tau = snapshot.tau;
  report.samples = snapshot.samples;
  report.tolerance_sigmas = sigmas;
  for (std::size_t k = 0; k < n; ++k) {
    RunningStats m2, m4;
    for (std::size_t j = 0; j < snapshot.samples; ++j) {
      const double p = std::norm(snapshot.sample(j)[k]);
      m2.add(p);
      m4.add(p * p);
    }
    const double target = b[k] * b[k] / gamma[k];
    const std::string label = format_mode(lattice.mode(k), lattice.dim());
    CheckEntry second{label + " second", m2.mean(), target, m2.stderr_of_mean(), 0.0, false};
    second.pass = std::abs(m2.mean() - target) <= sigmas * second.stderr_re;
    CheckEntry fourth{label + " fourth", m4.mean(), 2.0 * target * target, m4.stderr_of_mean(), 0.0, false};
    fourth.pass = std::abs(m4.mean() - 2.0 * target * target) <= sigmas * fourth.stderr_re;
    report.entries.push_back(std::move(second));
    report.entries.push_back(std::move(fourth));
  }
  return report;
}

void write_moments_csv(std::ostream& out, const ModeLattice& lattice, const EnsembleStats& stats) {
  out << "upper,lower,re,im,stderr_re,stderr_im,sample_count,time_averaged\n";
  char buf[160];
  for (const auto& [idx, est] : stats.estimates) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%zu,%d\n", est.value.real(), est.value.imag(),
                  est.stderr_re, est.stderr_im, est.samples, est.time_averaged ? 1 : 0);
    out << format_modes(idx.upper, lattice.dim()) << ',' << format_modes(idx.lower, lattice.dim()) << buf;
  }
}

}  // namespace kzlab
