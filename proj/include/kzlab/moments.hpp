#pragma once

// Ensemble moments
//   M^{upper}_{lower}(tau) = E[ prod v_upper * prod conj(v_lower) ],
// right-hand sides of the order-2 and order-4 moment equations, the
// quasistationary resolution of the fourth moments and the Gaussian closure
// of the sixth moments.

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kzlab/effective.hpp"
#include "kzlab/lattice.hpp"

namespace kzlab {

struct MomentIndex {
  std::vector<ModeIndex> upper;
  std::vector<ModeIndex> lower;

  std::size_t order() const noexcept { return upper.size() + lower.size(); }
  friend auto operator<=>(const MomentIndex&, const MomentIndex&) = default;
};

// "1;0|0;1" for the upper modes, same for the lower ones.
std::string format_modes(std::span<const ModeIndex> modes, int d);
std::vector<ModeIndex> parse_modes(const std::string& text, int d);

// Same moment with lattice positions instead of wavevectors.
struct SlotMoment {
  std::vector<std::size_t> upper;
  std::vector<std::size_t> lower;
};

SlotMoment resolve(const ModeLattice& lattice, const MomentIndex& idx);

struct MomentEstimate {
  cplx value;
  double stderr_re = 0.0;
  double stderr_im = 0.0;
  std::size_t samples = 0;
  bool time_averaged = false;
  std::optional<std::string> warning;  // set for odd orders
};

// Amplitudes of every successful trajectory at one snapshot, sample-major.
struct EnsembleSnapshot {
  std::shared_ptr<const ModeLattice> lattice;
  double tau = 0.0;
  std::size_t samples = 0;
  std::vector<cplx> v;

  std::span<const cplx> sample(std::size_t j) const { return std::span<const cplx>(v).subspan(j * lattice->size(), lattice->size()); }
};

// Requires a run with keep_states. Trajectories that failed anywhere are
// excluded so that snapshots of the same run share one sample set.
EnsembleSnapshot snapshot_of(const EnsembleRun& run, std::size_t snapshot);

// Sample mean over trajectories. Throws std::out_of_range for modes outside
// the lattice and MissingDataError for fewer than two samples.
MomentEstimate estimate_moment(const EnsembleSnapshot& snapshot, const MomentIndex& idx);
// Per-trajectory average over snapshots [first, last], then the mean over
// trajectories. Only meaningful on a stationary window.
MomentEstimate estimate_moment_time_averaged(const EnsembleRun& run, const MomentIndex& idx, std::size_t first,
                                             std::size_t last);

struct EnsembleStats {
  std::map<MomentIndex, MomentEstimate> estimates;
  std::size_t sample_count = 0;
  double tau = 0.0;
};

EnsembleStats estimate_moments(const EnsembleSnapshot& snapshot, std::span<const MomentIndex> indices);

// Supplies a moment by lattice positions, or nothing if it is unknown.
using MomentProvider = std::function<std::optional<cplx>(const SlotMoment&)>;

MomentProvider provider_from(const EnsembleStats& stats, const ModeLattice& lattice);
// Gaussian moments built from per-mode second moments M (Wick pairing).
MomentProvider gaussian_provider(std::span<const double> second_moments);

// -2 gamma_k M^k_k + 2 b_k^2 + 2 rho sum_nontrivial Im M^{k1 k2}_{k k3}.
// Throws MissingDataError naming the first moment the provider lacks.
double chain_rhs_second(const ResonantSystem& system, std::size_t k, const MomentProvider& moments,
                        const DampingProfile& damping, const ForcingProfile& forcing, double rho);

// Index tuple of a fourth moment M^{k1 k2}_{k k3}.
struct FourthIndex {
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  std::size_t k = 0;
  std::size_t k3 = 0;
};

// True when k differs from k1, k2 and k3 differs from k1, k2; only then does
// the noise drop out of the fourth-order equation.
bool noise_free(const FourthIndex& q) noexcept;

// The four sixth-moment sums of the fourth-order equation, i.e. the rate
// minus its damping part, equal to
//   i rho [ - sum_{res(k1)} M^{p q k2}_{r k k3} - sum_{res(k2)} M^{k1 p q}_{r k k3}
//           + sum_{res(k)} M^{k1 k2 r}_{p q k3} + sum_{res(k3)} M^{k1 k2 r}_{k p q} ]
// where res(a) runs over (p, q; a, r) resonant quadruplets.
cplx chain_sixth_sum(const ResonantSystem& system, const FourthIndex& q, const MomentProvider& sixth, double rho);

// -(gamma_k + gamma_k1 + gamma_k2 + gamma_k3) M^{k1 k2}_{k k3} + chain_sixth_sum.
// Throws std::invalid_argument if the index violates noise_free.
cplx chain_rhs_fourth(const ResonantSystem& system, const FourthIndex& q, const MomentProvider& moments,
                      const DampingProfile& damping, double rho);

// f / (gamma_k + gamma_k1 + gamma_k2 + gamma_k3).
cplx quasistationary_fourth(const ModeLattice& lattice, const FourthIndex& q, cplx f, const DampingProfile& damping);

// prod_{l in upper} M_l times the number of permutations pairing every upper
// mode with an equal lower mode.
cplx qg_closure_sixth(std::span<const std::size_t, 3> upper, std::span<const std::size_t, 3> lower,
                      std::span<const double> second_moments);

struct ClosedRate {
  double value = 0.0;
  double collision = 0.0;
  std::size_t skipped = 0;  // quadruplets with coincident indices, left out
};

// -2 gamma_k M_k + 2 b_k^2 + 4 rho^2 sum_nontrivial C / (gamma_k + gamma_k1 + gamma_k2 + gamma_k3),
// C = M1 M2 M3 + Mk M1 M2 - Mk M2 M3 - Mk M1 M3.
ClosedRate closed_rhs_discrete(const ResonantSystem& system, std::size_t k, std::span<const double> second_moments,
                               const DampingProfile& damping, const ForcingProfile& forcing, double rho);
// Same on an explicit quadruplet list ending at k, for lattices too large to
// tabulate; trivial entries are ignored.
ClosedRate closed_rhs_discrete(const ModeLattice& lattice, std::size_t k, std::span<const Quadruplet> quadruplets,
                               std::span<const double> second_moments, const DampingProfile& damping,
                               const ForcingProfile& forcing, double rho);

struct CheckEntry {
  std::string label;
  cplx lhs;
  cplx rhs;
  double stderr_re = 0.0;  // standard error of the mean paired difference
  double stderr_im = 0.0;
  bool pass = false;
};

struct CheckReport {
  std::string test;
  double tau = 0.0;
  std::size_t samples = 0;
  double tolerance_sigmas = 3.0;
  std::vector<CheckEntry> entries;

  bool all_pass() const noexcept;
};

// Centered difference of E|v_k|^2 between snapshots s - h and s + h against
// the order-2 right-hand side at s, evaluated per trajectory so the
// difference carries a single standard error.
CheckReport chain2_check(const EnsembleRun& run, const ResonantSystem& system, std::size_t s, std::size_t h,
                         const DampingProfile& damping, const ForcingProfile& forcing, double rho,
                         double sigmas = 3.0);

// Same for noise-free fourth moments against the order-4 right-hand side.
CheckReport chain4_check(const EnsembleRun& run, const ResonantSystem& system, std::size_t s, std::size_t h,
                         std::span<const FourthIndex> indices, const DampingProfile& damping, double rho,
                         double sigmas = 3.0);

// Sixth-moment estimates against the Gaussian closure of the estimated
// second moments; the stderr includes the closure's own sampling error.
CheckReport closure_check(const EnsembleSnapshot& snapshot, std::span<const std::array<std::size_t, 6>> indices,
                          double sigmas = 3.0);

// rho = 0 stationary ensemble: E|v_k|^2 against b_k^2 / gamma_k and
// E|v_k|^4 against 2 (b_k^2 / gamma_k)^2 for every mode.
CheckReport ou_check(const EnsembleSnapshot& snapshot, const DampingProfile& damping, const ForcingProfile& forcing,
                     double sigmas = 3.0);

// Rows "upper,lower,re,im,stderr_re,stderr_im,sample_count,time_averaged".
void write_moments_csv(std::ostream& out, const ModeLattice& lattice, const EnsembleStats& stats);

}  // namespace kzlab
