#pragma once

// Mode set of the periodic box: wavevectors k = l / L with integer l and
// |k| <= K, plus enumeration of resonant quadruplets
//   l1 + l2 = l + l3,   |l1|^2 + |l2|^2 = |l|^2 + |l3|^2.
// Every comparison that decides membership or resonance is integer exact.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kzlab {

struct ModeIndex {
  std::array<int, 3> l{};  // components beyond the lattice dimension are zero

  std::int64_t norm2() const noexcept {
    return std::int64_t{l[0]} * l[0] + std::int64_t{l[1]} * l[1] + std::int64_t{l[2]} * l[2];
  }
  friend auto operator<=>(const ModeIndex&, const ModeIndex&) = default;
};

ModeIndex operator+(const ModeIndex& a, const ModeIndex& b);
ModeIndex operator-(const ModeIndex& a, const ModeIndex& b);
std::int64_t dot(const ModeIndex& a, const ModeIndex& b);

// "1;-2" for d = 2.
std::string format_mode(const ModeIndex& m, int d);
ModeIndex parse_mode(const std::string& text, int d);

struct LatticeOptions {
  std::size_t max_modes = 2'000'000;
};

class ModeLattice {
 public:
  ModeLattice(int d, double L, double K, LatticeOptions options = {});

  int dim() const noexcept { return d_; }
  double scale() const noexcept { return L_; }
  double cutoff() const noexcept { return K_; }
  // Largest admissible |l|^2, i.e. floor((K L)^2).
  std::int64_t max_norm2() const noexcept { return max_norm2_; }

  std::size_t size() const noexcept { return modes_.size(); }
  std::span<const ModeIndex> modes() const noexcept { return modes_; }
  const ModeIndex& mode(std::size_t i) const { return modes_.at(i); }

  std::optional<std::size_t> find(const ModeIndex& m) const noexcept;
  bool contains(const ModeIndex& m) const noexcept { return find(m).has_value(); }
  // Throws std::out_of_range for modes outside the lattice.
  std::size_t index_of(const ModeIndex& m) const;

  std::int64_t norm2(std::size_t i) const { return modes_[i].norm2(); }
  // lambda_k = |k|^2 = |l|^2 / L^2
  double lambda(std::size_t i) const { return static_cast<double>(norm2(i)) / (L_ * L_); }
  double modulus(std::size_t i) const;

  // Radial bins in |k| units. Shell 0 holds |k| = 0 only; shell j >= 1 holds
  // shell_edges[j-1] < |k| <= shell_edges[j].
  std::span<const double> shell_edges() const noexcept { return shell_edges_; }
  std::size_t shell_count() const noexcept { return shell_edges_.size(); }
  std::size_t shell_of(std::size_t i) const { return shell_of_.at(i); }
  void set_shell_edges(std::vector<double> edges);

 private:
  std::size_t grid_offset(const ModeIndex& m) const noexcept;

  int d_;
  double L_;
  double K_;
  std::int64_t max_norm2_;
  int radius_;
  std::vector<ModeIndex> modes_;
  std::vector<std::int32_t> lookup_;  // dense box of side 2*radius+1, -1 = absent
  std::vector<double> shell_edges_;
  std::vector<std::size_t> shell_of_;
};

ModeLattice build_lattice(int d, double L, double K, LatticeOptions options = {});

// Indices into the owning lattice. The tuple is (k1, k2; k, k3):
// k1 + k2 = k + k3 with matching energies.
struct Quadruplet {
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::size_t k3 = 0;
  std::size_t k = 0;
  bool trivial = false;  // {k1, k2} == {k, k3}

  friend auto operator<=>(const Quadruplet&, const Quadruplet&) = default;
};

bool satisfies_resonance(const ModeLattice& lattice, const Quadruplet& q);

// All resonant quadruplets with the given k, sorted by (k1, k2, k3). Uses the
// rectangle characterisation in d = 2 and a pair loop otherwise.
std::vector<Quadruplet> enumerate_quadruplets(const ModeLattice& lattice, std::size_t k);
std::vector<Quadruplet> enumerate_quadruplets(const ModeLattice& lattice, const ModeIndex& k);

// Reference enumeration over every triple (k1, k2, k3); O(N^3) per k.
std::vector<Quadruplet> enumerate_quadruplets_bruteforce(const ModeLattice& lattice, std::size_t k);

struct QuadrupletCounts {
  std::vector<std::size_t> nontrivial;  // per mode
  std::vector<std::size_t> trivial;     // per mode
  std::size_t total_nontrivial = 0;
  std::size_t total_trivial = 0;
};

QuadrupletCounts quadruplet_count(const ModeLattice& lattice, unsigned threads = 1);

struct ScalingPoint {
  double L = 0;
  std::size_t modes = 0;
  std::size_t total_nontrivial = 0;
  double mean_per_mode = 0;
  std::size_t at_probe = 0;  // nontrivial count at the probe wavevector
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double slope_total = 0;
  double slope_mean_per_mode = 0;
  double slope_at_probe = 0;
};

// Nontrivial counts for each L at fixed cutoff K. The probe is the physical
// wavevector probe_k (components in |k| units); it must land on the lattice
// for every L, e.g. (1, 0) with integer L.
ScalingReport count_scaling(int d, double K, std::span<const double> Ls, std::array<double, 3> probe_k,
                            unsigned threads = 1);

struct ShellMean {
  double lower = 0;  // exclusive, except for shell 0
  double upper = 0;
  std::size_t count = 0;
  std::optional<double> mean;  // absent for empty shells
};

std::vector<ShellMean> shell_average(std::span<const double> values, const ModeLattice& lattice);

// CSV with header "k1,k2,k3,k,trivial"; components separated by ';'.
void write_quadruplets_csv(std::ostream& out, const ModeLattice& lattice, std::span<const Quadruplet> quads);

}  // namespace kzlab
