#pragma once

// Slow-time dynamics of the mode amplitudes v_k:
//
//   dv_k = (-gamma_k v_k - i rho sum_{res} v_k1 v_k2 conj(v_k3)) dtau + b_k dbeta_k
//
// where the sum runs over resonant (k1, k2, k3) and beta_k has independent
// standard Wiener real and imaginary parts (E|beta_k(tau)|^2 = 2 tau). The
// full fast-rotating system keeps every momentum-conserving triple and is
// integrated in the interaction picture.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kzlab/errors.hpp"
#include "kzlab/lattice.hpp"
#include "kzlab/rng.hpp"

namespace kzlab {

using cplx = std::complex<double>;

// gamma(k) = eps1 + eps2 |k|^beta
struct DampingProfile {
  double eps1 = 0.0;
  double eps2 = 0.0;
  double beta = 0.0;

  double rate(double modulus) const;
  // Throws std::invalid_argument unless every rate is positive and finite.
  std::vector<double> rates(const ModeLattice& lattice) const;
};

// b(k) = b0 (1 + |k|^2)^(-p); b0 = 0 is the unforced case.
struct ForcingProfile {
  double b0 = 0.0;
  double p = 0.0;

  double amplitude(double modulus) const;
  std::vector<double> amplitudes(const ModeLattice& lattice) const;
};

struct FieldState {
  std::shared_ptr<const ModeLattice> lattice;
  std::vector<cplx> v;
  double tau = 0.0;

  FieldState() = default;
  FieldState(std::shared_ptr<const ModeLattice> lat, std::vector<cplx> amplitudes, double t = 0.0);
  static FieldState zeros(std::shared_ptr<const ModeLattice> lat);
  bool finite() const;
};

// Resonant interaction table: for each k every (k1, k2, k3) with both deltas,
// trivial pairs included.
class ResonantSystem {
 public:
  explicit ResonantSystem(std::shared_ptr<const ModeLattice> lattice);

  const ModeLattice& lattice() const noexcept { return *lattice_; }
  const std::shared_ptr<const ModeLattice>& lattice_ptr() const noexcept { return lattice_; }
  std::span<const Quadruplet> quadruplets(std::size_t k) const;
  std::span<const Quadruplet> nontrivial(std::size_t k) const;
  std::size_t term_count() const noexcept { return all_.size(); }

  // out_k = sum v_k1 v_k2 conj(v_k3)
  void interaction(std::span<const cplx> v, std::span<cplx> out) const;

 private:
  std::shared_ptr<const ModeLattice> lattice_;
  std::vector<Quadruplet> all_;
  std::vector<std::size_t> offsets_;
  std::vector<Quadruplet> nontrivial_;
  std::vector<std::size_t> nontrivial_offsets_;
};

// H_res = 1/4 sum_k conj(v_k) sum_res v_k1 v_k2 conj(v_k3)
double hamiltonian_res(const FieldState& state, const ResonantSystem& system);

// Wirtinger derivative dH_res / d conj(v_k) = 1/2 sum_res v_k1 v_k2 conj(v_k3).
std::vector<cplx> hamiltonian_gradient(const FieldState& state, const ResonantSystem& system);

// -i rho sum_res v_k1 v_k2 conj(v_k3); equal to -2 i rho dH_res/d conj(v_k).
std::vector<cplx> nonlinear_drift(const FieldState& state, const ResonantSystem& system, double rho);

// -gamma_k v_k plus the nonlinear drift.
std::vector<cplx> drift(const FieldState& state, const ResonantSystem& system, const DampingProfile& damping,
                        double rho);

struct SimConfig {
  double rho = 0.0;
  double dt = 1e-2;
  double T = 1.0;
  std::size_t ensemble_size = 1;
  std::uint64_t seed = 0;
  std::optional<double> nu_fast;  // present only for the full system
  std::size_t stride = 1;         // snapshot every `stride` steps
  double blowup_bound = 1e6;
  bool keep_states = true;
  std::optional<double> average_from;  // accumulate time-averaged |v|^2 for tau >= this
  double phase_threshold = 0.5;        // warn when dt * max(lambda) / nu exceeds this
  unsigned threads = 0;                // 0 = hardware concurrency

  void validate() const;
  std::size_t step_count() const;
  std::size_t snapshot_count() const;
};

class BlowUpError : public NumericalError {
 public:
  BlowUpError(std::size_t step, double tau, std::size_t mode, double magnitude);
  std::size_t step;
  double tau;
  std::size_t mode;
  double magnitude;
};

// One slow-time step of the effective equation: exact damping factors,
// explicit midpoint for the resonant drift and an additive noise increment
// weighted by the half-step damping factor.
class EffectiveStepper {
 public:
  EffectiveStepper(std::shared_ptr<const ResonantSystem> system, const DampingProfile& damping,
                   const ForcingProfile& forcing, double rho, double dt, double blowup_bound = 1e6);

  // Draws two standard normals per mode per step. Throws BlowUpError.
  void advance(FieldState& state, Rng& rng, std::size_t step_index = 0);

 private:
  std::shared_ptr<const ResonantSystem> system_;
  double rho_;
  double dt_;
  double bound_;
  std::vector<double> decay_;
  std::vector<double> half_decay_;
  std::vector<double> noise_scale_;
  std::vector<cplx> work_a_;
  std::vector<cplx> work_b_;
  std::normal_distribution<double> normal_;
};

// Every momentum-conserving triple (energy unconstrained) with its detuning
// Omega = lambda_k1 + lambda_k2 - lambda_k3 - lambda_k.
class MomentumSystem {
 public:
  explicit MomentumSystem(std::shared_ptr<const ModeLattice> lattice);

  const ModeLattice& lattice() const noexcept { return *lattice_; }
  double max_lambda() const noexcept { return max_lambda_; }
  std::size_t term_count() const noexcept { return terms_.size(); }

  // out_k = sum w_k1 w_k2 conj(w_k3) exp(-i Omega tau / nu)
  void interaction(std::span<const cplx> w, double tau, double nu, std::span<cplx> out) const;
  // Largest |Omega| over all stored triples.
  double max_detuning() const noexcept;

 private:
  struct Term {
    std::uint32_t k1, k2, k3;
    std::uint32_t detuning_slot;
  };
  std::shared_ptr<const ModeLattice> lattice_;
  std::vector<Term> terms_;
  std::vector<std::size_t> offsets_;
  std::vector<double> detunings_;  // distinct Omega values
  double max_lambda_ = 0.0;
  mutable std::vector<cplx> phase_cache_;
};

// Interaction-picture step of the full system. The state holds the physical
// amplitudes v; w_k = exp(i lambda_k tau / nu) v_k is advanced with exact
// rotation and damping, explicit midpoint for the oscillatory drift.
class FullStepper {
 public:
  FullStepper(std::shared_ptr<const MomentumSystem> system, const DampingProfile& damping,
              const ForcingProfile& forcing, double rho, double nu, double dt, double blowup_bound = 1e6);

  void advance(FieldState& state, Rng& rng, std::size_t step_index = 0);
  // dt * max(lambda) / nu
  double phase_per_step() const noexcept;

 private:
  std::shared_ptr<const MomentumSystem> system_;
  double rho_;
  double nu_;
  double dt_;
  double bound_;
  std::vector<double> lambda_;
  std::vector<double> decay_;
  std::vector<double> half_decay_;
  std::vector<double> noise_scale_;
  std::vector<cplx> w_;
  std::vector<cplx> work_a_;
  std::vector<cplx> work_b_;
  std::normal_distribution<double> normal_;
};

// Single-step conveniences; they rebuild the stepper on every call.
FieldState step(const FieldState& state, const std::shared_ptr<const ResonantSystem>& system, const SimConfig& config,
                const DampingProfile& damping, const ForcingProfile& forcing, Rng& rng);
FieldState step_full(const FieldState& state, const std::shared_ptr<const MomentumSystem>& system,
                     const SimConfig& config, const DampingProfile& damping, const ForcingProfile& forcing, Rng& rng);

// v_k(0) = mean_k + sqrt(variance_k / 2) (xi_re + i xi_im); empty vectors mean 0.
struct InitialCondition {
  std::vector<cplx> mean;
  std::vector<double> variance;
};

struct TrajectoryFailure {
  std::size_t trajectory = 0;
  std::size_t step = 0;
  double tau = 0.0;
  std::size_t mode = 0;
  std::string message;
};

struct Trajectory {
  std::vector<cplx> states;      // snapshot-major, one row of modes per snapshot
  std::vector<double> spectra;   // |v|^2, same layout
  std::vector<double> time_average;
  std::size_t averaged_steps = 0;
  std::size_t completed_snapshots = 0;
  std::optional<TrajectoryFailure> failure;
};

struct EnsembleRun {
  std::shared_ptr<const ModeLattice> lattice;
  SimConfig config;
  std::vector<double> taus;
  std::vector<Trajectory> trajectories;
  std::vector<std::string> warnings;

  std::size_t modes() const noexcept { return lattice ? lattice->size() : 0; }
  bool ok() const noexcept;
  std::vector<TrajectoryFailure> failures() const;
};

// Runs config.ensemble_size independent trajectories. Trajectory j draws its
// noise from make_stream(seed, j, kTrajectory) and its initial data from
// make_stream(seed, j, kInitialCondition); output is independent of the
// thread count. Blow-ups are recorded per trajectory, never thrown.
EnsembleRun simulate(const SimConfig& config, std::shared_ptr<const ModeLattice> lattice,
                     const DampingProfile& damping, const ForcingProfile& forcing,
                     const InitialCondition& initial = {});

struct ModeMean {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
};

// Ensemble mean of |v_k|^2 at one snapshot over successful trajectories.
std::vector<ModeMean> mean_spectrum(const EnsembleRun& run, std::size_t snapshot);
// Ensemble mean of the per-trajectory time averages.
std::vector<ModeMean> mean_time_averaged_spectrum(const EnsembleRun& run);

}  // namespace kzlab
