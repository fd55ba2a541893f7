#include "kzlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "kzlab/errors.hpp"
#include "kzlab/parallel.hpp"
#include "kzlab/stats.hpp"

namespace kzlab {

namespace {

std::int64_t isqrt(std::int64_t n) {
  if (n <= 0) return 0;
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

std::int64_t ceil_sqrt(std::int64_t n) {
  const std::int64_t r = isqrt(n);
  return r * r == n ? r : r + 1;
}

bool is_trivial(std::size_t k1, std::size_t k2, std::size_t k3, std::size_t k) {
  return (k1 == k && k2 == k3) || (k1 == k3 && k2 == k);
}

}  // namespace

ModeIndex operator+(const ModeIndex& a, const ModeIndex& b) {
  return ModeIndex{{a.l[0] + b.l[0], a.l[1] + b.l[1], a.l[2] + b.l[2]}};
}

ModeIndex operator-(const ModeIndex& a, const ModeIndex& b) {
  return ModeIndex{{a.l[0] - b.l[0], a.l[1] - b.l[1], a.l[2] - b.l[2]}};
}

std::int64_t dot(const ModeIndex& a, const ModeIndex& b) {
  return std::int64_t{a.l[0]} * b.l[0] + std::int64_t{a.l[1]} * b.l[1] + std::int64_t{a.l[2]} * b.l[2];
}

std::string format_mode(const ModeIndex& m, int d) {
  std::string out;
  for (int c = 0; c < d; ++c) {
    if (c) out += ';';
    out += std::to_string(m.l[c]);
  }
  return out;
}

ModeIndex parse_mode(const std::string& text, int d) {
  ModeIndex m;
  std::istringstream in(text);
  std::string part;
  int c = 0;
  while (std::getline(in, part, ';')) {
    if (c >= d) throw std::invalid_argument("mode '" + text + "' has more than " + std::to_string(d) + " components");
    std::size_t used = 0;
    m.l[c] = std::stoi(part, &used);
    if (used != part.size()) throw std::invalid_argument("bad mode component '" + part + "'");
    ++c;
  }
  if (c != d) throw std::invalid_argument("mode '" + text + "' needs " + std::to_string(d) + " components");
  return m;
}

ModeLattice::ModeLattice(int d, double L, double K, LatticeOptions options) : d_(d), L_(L), K_(K) {
  if (d < 1 || d > 3) throw std::invalid_argument("lattice dimension must be 1, 2 or 3");
  if (!(L > 0) || !std::isfinite(L)) throw std::invalid_argument("lattice scale L must be positive");
  if (!(K > 0) || !std::isfinite(K)) throw std::invalid_argument("lattice cutoff K must be positive");

  const double r2 = (K * L) * (K * L);
  // Relative slack absorbs products such as 0.1 * 30 that should be integral.
  max_norm2_ = static_cast<std::int64_t>(std::floor(r2 * (1.0 + 1e-12)));
  radius_ = static_cast<int>(isqrt(max_norm2_));

  const double side = 2.0 * radius_ + 1.0;
  const double box = std::pow(side, d);
  if (box > 8.0 * static_cast<double>(options.max_modes) + 64.0) {
    throw ResourceLimitError("lattice with d=" + std::to_string(d) + ", K*L=" + std::to_string(K * L) +
                             " exceeds the mode cap of " + std::to_string(options.max_modes));
  }

  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
  for (int c = 0; c < d; ++c) {
    lo[c] = -radius_;
    hi[c] = radius_;
  }
  for (int a = lo[0]; a <= hi[0]; ++a) {
    for (int b = lo[1]; b <= hi[1]; ++b) {
      for (int c = lo[2]; c <= hi[2]; ++c) {
        ModeIndex m{{a, b, c}};
        if (m.norm2() <= max_norm2_) modes_.push_back(m);
      }
    }
  }
  if (modes_.size() > options.max_modes) {
    throw ResourceLimitError("lattice has " + std::to_string(modes_.size()) + " modes, cap is " +
                             std::to_string(options.max_modes));
  }

  lookup_.assign(static_cast<std::size_t>(box), -1);
  for (std::size_t i = 0; i < modes_.size(); ++i) lookup_[grid_offset(modes_[i])] = static_cast<std::int32_t>(i);

  std::int64_t top = 0;
  for (const auto& m : modes_) top = std::max(top, ceil_sqrt(m.norm2()));
  const auto needed = static_cast<std::int64_t>(std::ceil(K * L - 1e-9));
  const std::int64_t shells = std::max(top, needed);
  shell_edges_.resize(static_cast<std::size_t>(shells) + 1);
  for (std::int64_t j = 0; j <= shells; ++j) shell_edges_[static_cast<std::size_t>(j)] = static_cast<double>(j) / L_;
  shell_of_.resize(modes_.size());
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    shell_of_[i] = static_cast<std::size_t>(ceil_sqrt(modes_[i].norm2()));
  }
}

std::size_t ModeLattice::grid_offset(const ModeIndex& m) const noexcept {
  const std::size_t side = 2 * static_cast<std::size_t>(radius_) + 1;
  std::size_t off = 0;
  for (int c = 0; c < d_; ++c) off = off * side + static_cast<std::size_t>(m.l[c] + radius_);
  return off;
}

std::optional<std::size_t> ModeLattice::find(const ModeIndex& m) const noexcept {
  for (int c = 0; c < 3; ++c) {
    if (c >= d_) {
      if (m.l[c] != 0) return std::nullopt;
    } else if (m.l[c] < -radius_ || m.l[c] > radius_) {
      return std::nullopt;
    }
  }
  const std::int32_t idx = lookup_[grid_offset(m)];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

std::size_t ModeLattice::index_of(const ModeIndex& m) const {
  if (auto idx = find(m)) return *idx;
  throw std::out_of_range("mode " + format_mode(m, d_) + " is not in the lattice");
}

double ModeLattice::modulus(std::size_t i) const {
  return std::sqrt(static_cast<double>(norm2(i))) / L_;
}

void ModeLattice::set_shell_edges(std::vector<double> edges) {
  if (edges.size() < 2 || edges.front() != 0.0) throw std::invalid_argument("shell edges must start at 0");
  for (std::size_t j = 1; j < edges.size(); ++j) {
    if (!(edges[j] > edges[j - 1])) throw std::invalid_argument("shell edges must be strictly increasing");
  }
  if (edges.back() < K_) throw std::invalid_argument("shell edges must cover [0, K]");
  std::vector<std::size_t> assignment(modes_.size());
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    const double r = modulus(i);
    const auto it = std::lower_bound(edges.begin(), edges.end(), r);
    if (it == edges.end()) throw std::invalid_argument("shell edges do not reach the largest mode");
    assignment[i] = static_cast<std::size_t>(it - edges.begin());
  }
  shell_edges_ = std::move(edges);
  shell_of_ = std::move(assignment);
}

ModeLattice build_lattice(int d, double L, double K, LatticeOptions options) {
  return ModeLattice(d, L, K, options);
}

bool satisfies_resonance(const ModeLattice& lattice, const Quadruplet& q) {
  const auto& m1 = lattice.mode(q.k1);
  const auto& m2 = lattice.mode(q.k2);
  const auto& m3 = lattice.mode(q.k3);
  const auto& m = lattice.mode(q.k);
  return m1 + m2 == m + m3 && m1.norm2() + m2.norm2() == m.norm2() + m3.norm2();
}

namespace {

void enumerate_rectangles(const ModeLattice& lattice, std::size_t k, std::vector<Quadruplet>& out) {
  const ModeIndex& l = lattice.mode(k);
  const std::int64_t r2 = lattice.max_norm2();
  const auto modes = lattice.modes();
  for (std::size_t i1 = 0; i1 < modes.size(); ++i1) {
    const ModeIndex& l1 = modes[i1];
    const ModeIndex a = l1 - l;
    if (a.l[0] == 0 && a.l[1] == 0) {
      // k1 = k forces k2 = k3 with k3 free.
      for (std::size_t i3 = 0; i3 < modes.size(); ++i3) out.push_back({i1, i3, i3, k, true});
      continue;
    }
    // k3 lies on the line through k1 orthogonal to k1 - k; t = 0 is k3 = k1.
    out.push_back({i1, k, i1, k, true});
    const int g = std::gcd(std::abs(a.l[0]), std::abs(a.l[1]));
    const ModeIndex step{{-a.l[1] / g, a.l[0] / g, 0}};
    for (int sign : {1, -1}) {
      for (int t = 1;; ++t) {
        const ModeIndex l3{{l1.l[0] + sign * t * step.l[0], l1.l[1] + sign * t * step.l[1], 0}};
        if (l3.norm2() > r2) break;
        const auto i2 = lattice.find(l + l3 - l1);
        if (!i2) continue;
        const std::size_t i3 = *lattice.find(l3);
        out.push_back({i1, *i2, i3, k, is_trivial(i1, *i2, i3, k)});
      }
    }
  }
}

void enumerate_pairs(const ModeLattice& lattice, std::size_t k, std::vector<Quadruplet>& out) {
  const ModeIndex& l = lattice.mode(k);
  const auto modes = lattice.modes();
  for (std::size_t i1 = 0; i1 < modes.size(); ++i1) {
    for (std::size_t i3 = 0; i3 < modes.size(); ++i3) {
      const ModeIndex l2 = l + modes[i3] - modes[i1];
      const auto i2 = lattice.find(l2);
      if (!i2) continue;
      if (modes[i1].norm2() + l2.norm2() != l.norm2() + modes[i3].norm2()) continue;
      out.push_back({i1, *i2, i3, k, is_trivial(i1, *i2, i3, k)});
    }
  }
}

}  // namespace

std::vector<Quadruplet> enumerate_quadruplets(const ModeLattice& lattice, std::size_t k) {
  if (k >= lattice.size()) throw std::out_of_range("mode index outside the lattice");
  std::vector<Quadruplet> out;
  if (lattice.dim() == 2) {
    enumerate_rectangles(lattice, k, out);
  } else {
    enumerate_pairs(lattice, k, out);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Quadruplet> enumerate_quadruplets(const ModeLattice& lattice, const ModeIndex& k) {
  return enumerate_quadruplets(lattice, lattice.index_of(k));
}

std::vector<Quadruplet> enumerate_quadruplets_bruteforce(const ModeLattice& lattice, std::size_t k) {
  if (k >= lattice.size()) throw std::out_of_range("mode index outside the lattice");
  // Every (k1, k2, k3) is tested against both conditions; the innermost loop
  // runs over flat integer columns so the scan stays cheap.
  const std::size_t n = lattice.size();
  std::vector<std::int64_t> x(n), y(n), z(n), e(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = lattice.mode(i);
    x[i] = m.l[0];
    y[i] = m.l[1];
    z[i] = m.l[2];
    e[i] = m.norm2();
  }
  std::vector<Quadruplet> out;
  for (std::size_t i1 = 0; i1 < n; ++i1) {
    for (std::size_t i2 = 0; i2 < n; ++i2) {
      // k1 + k2 = k + k3 and |k1|^2 + |k2|^2 = |k|^2 + |k3|^2 fix k3.
      const std::int64_t tx = x[i1] + x[i2] - x[k];
      const std::int64_t ty = y[i1] + y[i2] - y[k];
      const std::int64_t tz = z[i1] + z[i2] - z[k];
      const std::int64_t te = e[i1] + e[i2] - e[k];
      for (std::size_t i3 = 0; i3 < n; ++i3) {
        if ((x[i3] == tx) & (y[i3] == ty) & (z[i3] == tz) & (e[i3] == te)) {
          out.push_back({i1, i2, i3, k, is_trivial(i1, i2, i3, k)});
        }
      }
    }
  }
  return out;
}

QuadrupletCounts quadruplet_count(const ModeLattice& lattice, unsigned threads) {
  QuadrupletCounts counts;
  counts.nontrivial.assign(lattice.size(), 0);
  counts.trivial.assign(lattice.size(), 0);
  parallel_for(lattice.size(), threads, [&](std::size_t k) {
    for (const auto& q : enumerate_quadruplets(lattice, k)) {
      if (q.trivial) {
        ++counts.trivial[k];
      } else {
        ++counts.nontrivial[k];
      }
    }
  });
  counts.total_nontrivial = std::accumulate(counts.nontrivial.begin(), counts.nontrivial.end(), std::size_t{0});
  counts.total_trivial = std::accumulate(counts.trivial.begin(), counts.trivial.end(), std::size_t{0});
  return counts;
}

ScalingReport count_scaling(int d, double K, std::span<const double> Ls, std::array<double, 3> probe_k,
                            unsigned threads) {
  ScalingReport report;
  std::vector<double> xs, totals, means, probes;
  for (double L : Ls) {
    const ModeLattice lattice(d, L, K);
    ModeIndex probe;
    for (int c = 0; c < 3; ++c) {
      const double scaled = probe_k[c] * L;
      const double rounded = std::round(scaled);
      if (std::abs(scaled - rounded) > 1e-9 || (c >= d && rounded != 0)) {
        throw std::invalid_argument("probe wavevector is not a lattice mode at L=" + std::to_string(L));
      }
      probe.l[c] = static_cast<int>(rounded);
    }
    const std::size_t probe_index = lattice.index_of(probe);
    const QuadrupletCounts counts = quadruplet_count(lattice, threads);
    ScalingPoint p;
    p.L = L;
    p.modes = lattice.size();
    p.total_nontrivial = counts.total_nontrivial;
    p.mean_per_mode = static_cast<double>(counts.total_nontrivial) / static_cast<double>(lattice.size());
    p.at_probe = counts.nontrivial[probe_index];
    report.points.push_back(p);
    if (p.total_nontrivial > 0 && p.at_probe > 0) {
      xs.push_back(L);
      totals.push_back(static_cast<double>(p.total_nontrivial));
      means.push_back(p.mean_per_mode);
      probes.push_back(static_cast<double>(p.at_probe));
    }
  }
  if (xs.size() >= 2) {
    report.slope_total = loglog_slope(xs, totals);
    report.slope_mean_per_mode = loglog_slope(xs, means);
    report.slope_at_probe = loglog_slope(xs, probes);
  }
  return report;
}

std::vector<ShellMean> shell_average(std::span<const double> values, const ModeLattice& lattice) {
  if (values.size() != lattice.size()) {
    throw std::invalid_argument("shell_average: expected one value per mode (" + std::to_string(lattice.size()) +
                                "), got " + std::to_string(values.size()));
  }
  const auto edges = lattice.shell_edges();
  std::vector<double> sums(edges.size(), 0.0);
  std::vector<ShellMean> shells(edges.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t s = lattice.shell_of(i);
    sums[s] += values[i];
    ++shells[s].count;
  }
  for (std::size_t s = 0; s < shells.size(); ++s) {
    shells[s].lower = s == 0 ? 0.0 : edges[s - 1];
    shells[s].upper = edges[s];
    if (shells[s].count > 0) shells[s].mean = sums[s] / static_cast<double>(shells[s].count);
  }
  return shells;
}

void write_quadruplets_csv(std::ostream& out, const ModeLattice& lattice, std::span<const Quadruplet> quads) {
  const int d = lattice.dim();
  out << "k1,k2,k3,k,trivial\n";
  for (const auto& q : quads) {
    out << format_mode(lattice.mode(q.k1), d) << ',' << format_mode(lattice.mode(q.k2), d) << ','
        << format_mode(lattice.mode(q.k3), d) << ',' << format_mode(lattice.mode(q.k), d) << ','
        << (q.trivial ? 1 : 0) << '\n';
  }
}

}  // namespace kzlab
