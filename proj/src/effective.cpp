#include "kzlab/effective.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "kzlab/parallel.hpp"
#include "kzlab/stats.hpp"

namespace kzlab {

namespace {

constexpr cplx kI{0.0, 1.0};

void require_lattice(const FieldState& state, const ModeLattice& lattice) {
  if (!state.lattice || state.lattice.get() != &lattice) {
    throw std::invalid_argument("field state belongs to a different lattice than the interaction table");
  }
  if (state.v.size() != lattice.size()) {
    throw std::invalid_argument("field state has " + std::to_string(state.v.size()) + " amplitudes for " +
                                std::to_string(lattice.size()) + " modes");
  }
}

void check_bound(std::span<const cplx> v, double bound, std::size_t step, double tau) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]);
    if (!(mag <= bound)) throw BlowUpError(step, tau, i, mag);
  }
}

}  // namespace

double DampingProfile::rate(double modulus) const {
  if (eps2 == 0.0) return eps1;
  return eps1 + eps2 * std::pow(modulus, beta);
}

std::vector<double> DampingProfile::rates(const ModeLattice& lattice) const {
  if (eps1 < 0 || eps2 < 0) throw std::invalid_argument("damping coefficients must be non-negative");
  std::vector<double> out(lattice.size());
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    out[i] = rate(lattice.modulus(i));
    if (!(out[i] > 0) || !std::isfinite(out[i])) {
      throw std::invalid_argument("damping rate is not positive at mode " + format_mode(lattice.mode(i), lattice.dim()));
    }
  }
  return out;
}

double ForcingProfile::amplitude(double modulus) const {
  return b0 * std::pow(1.0 + modulus * modulus, -p);
}

std::vector<double> ForcingProfile::amplitudes(const ModeLattice& lattice) const {
  if (b0 < 0) throw std::invalid_argument("forcing amplitude b0 must be non-negative");
  std::vector<double> out(lattice.size());
  for (std::size_t i = 0; i < lattice.size(); ++i) out[i] = amplitude(lattice.modulus(i));
  return out;
}

FieldState::FieldState(std::shared_ptr<const ModeLattice> lat, std::vector<cplx> amplitudes, double t)
    : lattice(std::move(lat)), v(std::move(amplitudes)), tau(t) {
  if (!lattice) throw std::invalid_argument("field state needs a lattice");
  if (v.size() != lattice->size()) throw std::invalid_argument("field state needs one amplitude per mode");
}

FieldState FieldState::zeros(std::shared_ptr<const ModeLattice> lat) {
  const std::size_t n = lat ? lat->size() : 0;
  return FieldState(std::move(lat), std::vector<cplx>(n), 0.0);
}

bool FieldState::finite() const {
  return std::all_of(v.begin(), v.end(), [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

ResonantSystem::ResonantSystem(std::shared_ptr<const ModeLattice> lattice) : lattice_(std::move(lattice)) {
  if (!lattice_) throw std::invalid_argument("resonant system needs a lattice");
  const std::size_t n = lattice_->size();
  offsets_.assign(n + 1, 0);
  nontrivial_offsets_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    auto quads = enumerate_quadruplets(*lattice_, k);
    for (const auto& q : quads) {
      all_.push_back(q);
      if (!q.trivial) nontrivial_.push_back(q);
    }
    offsets_[k + 1] = all_.size();
    nontrivial_offsets_[k + 1] = nontrivial_.size();
  }
}

std::span<const Quadruplet> ResonantSystem::quadruplets(std::size_t k) const {
  return std::span<const Quadruplet>(all_).subspan(offsets_.at(k), offsets_.at(k + 1) - offsets_[k]);
}

std::span<const Quadruplet> ResonantSystem::nontrivial(std::size_t k) const {
  return std::span<const Quadruplet>(nontrivial_).subspan(nontrivial_offsets_.at(k),
                                                          nontrivial_offsets_.at(k + 1) - nontrivial_offsets_[k]);
}

void ResonantSystem::interaction(std::span<const cplx> v, std::span<cplx> out) const {
  const std::size_t n = lattice_->size();
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t t = offsets_[k]; t < offsets_[k + 1]; ++t) {
      const Quadruplet& q = all_[t];
      acc += v[q.k1] * v[q.k2] * std::conj(v[q.k3]);
    }
    out[k] = acc;
  }
}

double hamiltonian_res(const FieldState& state, const ResonantSystem& system) {
  require_lattice(state, system.lattice());
  std::vector<cplx> n(state.v.size());
  system.interaction(state.v, n);
  cplx h{0.0, 0.0};
  for (std::size_t k = 0; k < n.size(); ++k) h += std::conj(state.v[k]) * n[k];
  return 0.25 * h.real();
}

std::vector<cplx> hamiltonian_gradient(const FieldState& state, const ResonantSystem& system) {
  require_lattice(state, system.lattice());
  std::vector<cplx> g(state.v.size());
  system.interaction(state.v, g);
  for (auto& z : g) z *= 0.5;
  return g;
}

std::vector<cplx> nonlinear_drift(const FieldState& state, const ResonantSystem& system, double rho) {
  require_lattice(state, system.lattice());
  std::vector<cplx> out(state.v.size());
  system.interaction(state.v, out);
  for (auto& z : out) z *= -kI * rho;
  return out;
}

std::vector<cplx> drift(const FieldState& state, const ResonantSystem& system, const DampingProfile& damping,
                        double rho) {
  auto out = nonlinear_drift(state, system, rho);
  const auto gamma = damping.rates(system.lattice());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= gamma[k] * state.v[k];
  return out;
}

void SimConfig::validate() const {
  if (!(dt > 0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  if (!(T >= dt)) throw std::invalid_argument("horizon T must be at least dt");
  if (ensemble_size < 1) throw std::invalid_argument("ensemble_size must be at least 1");
  if (!(rho >= 0)) throw std::invalid_argument("rho must be non-negative");
  if (stride < 1) throw std::invalid_argument("stride must be at least 1");
  if (nu_fast && !(*nu_fast > 0)) throw std::invalid_argument("nu_fast must be positive");
  if (!(blowup_bound > 0)) throw std::invalid_argument("blow-up bound must be positive");
}

std::size_t SimConfig::step_count() const {
  return static_cast<std::size_t>(std::floor(T / dt + 1e-9));
}

std::size_t SimConfig::snapshot_count() const {
  return step_count() / stride + 1;
}

BlowUpError::BlowUpError(std::size_t step_, double tau_, std::size_t mode_, double magnitude_)
    : NumericalError("amplitude of mode #" + std::to_string(mode_) + " reached " + std::to_string(magnitude_) +
                     " at step " + std::to_string(step_) + " (tau=" + std::to_string(tau_) + ")"),
      step(step_),
      tau(tau_),
      mode(mode_),
      magnitude(magnitude_) {}

EffectiveStepper::EffectiveStepper(std::shared_ptr<const ResonantSystem> system, const DampingProfile& damping,
                                   const ForcingProfile& forcing, double rho, double dt, double blowup_bound)
    : system_(std::move(system)), rho_(rho), dt_(dt), bound_(blowup_bound) {
  if (!system_) throw std::invalid_argument("stepper needs a resonant system");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const auto gamma = damping.rates(system_->lattice());
  const auto b = forcing.amplitudes(system_->lattice());
  const std::size_t n = gamma.size();
  decay_.resize(n);
  half_decay_.resize(n);
  noise_scale_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    decay_[k] = std::exp(-gamma[k] * dt);
    half_decay_[k] = std::exp(-0.5 * gamma[k] * dt);
    noise_scale_[k] = half_decay_[k] * b[k] * std::sqrt(dt);
  }
  work_a_.resize(n);
  work_b_.resize(n);
}

void EffectiveStepper::advance(FieldState& state, Rng& rng, std::size_t step_index) {
  require_lattice(state, system_->lattice());
  auto& v = state.v;
  const std::size_t n = v.size();
  const cplx coupling = -kI * rho_;

  if (rho_ != 0.0) {
    system_->interaction(v, work_a_);
    for (std::size_t k = 0; k < n; ++k) work_b_[k] = half_decay_[k] * (v[k] + 0.5 * dt_ * coupling * work_a_[k]);
    system_->interaction(work_b_, work_a_);
    for (std::size_t k = 0; k < n; ++k) v[k] = decay_[k] * v[k] + dt_ * half_decay_[k] * coupling * work_a_[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) v[k] *= decay_[k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double re = normal_(rng);
    const double im = normal_(rng);
    v[k] += noise_scale_[k] * cplx(re, im);
  }
  state.tau += dt_;
  check_bound(v, bound_, step_index, state.tau);
}

MomentumSystem::MomentumSystem(std::shared_ptr<const ModeLattice> lattice) : lattice_(std::move(lattice)) {
  if (!lattice_) throw std::invalid_argument("momentum system needs a lattice");
  const ModeLattice& lat = *lattice_;
  const std::size_t n = lat.size();
  std::map<std::int64_t, std::uint32_t> slots;
  std::vector<std::int64_t> numerators;
  offsets_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const ModeIndex& l = lat.mode(k);
    max_lambda_ = std::max(max_lambda_, lat.lambda(k));
    for (std::size_t i1 = 0; i1 < n; ++i1) {
      for (std::size_t i3 = 0; i3 < n; ++i3) {
        const auto i2 = lat.find(l + lat.mode(i3) - lat.mode(i1));
        if (!i2) continue;
        const std::int64_t omega = lat.norm2(i1) + lat.norm2(*i2) - lat.norm2(i3) - lat.norm2(k);
        auto [it, inserted] = slots.try_emplace(omega, static_cast<std::uint32_t>(numerators.size()));
        if (inserted) numerators.push_back(omega);
        terms_.push_back(
            {static_cast<std::uint32_t>(i1), static_cast<std::uint32_t>(*i2), static_cast<std::uint32_t>(i3), it->second});
      }
    }
    offsets_[k + 1] = terms_.size();
  }
  const double inv_l2 = 1.0 / (lat.scale() * lat.scale());
  for (auto num : numerators) detunings_.push_back(static_cast<double>(num) * inv_l2);
  phase_cache_.resize(detunings_.size());
}

double MomentumSystem::max_detuning() const noexcept {
  double out = 0.0;
  for (double w : detunings_) out = std::max(out, std::abs(w));
  return out;
}

void MomentumSystem::interaction(std::span<const cplx> w, double tau, double nu, std::span<cplx> out) const {
  for (std::size_t s = 0; s < detunings_.size(); ++s) phase_cache_[s] = std::polar(1.0, -detunings_[s] * tau / nu);
  const std::size_t n = lattice_->size();
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t t = offsets_[k]; t < offsets_[k + 1]; ++t) {
      const Term& term = terms_[t];
      acc += w[term.k1] * w[term.k2] * std::conj(w[term.k3]) * phase_cache_[term.detuning_slot];
    }
    out[k] = acc;
  }
}

FullStepper::FullStepper(std::shared_ptr<const MomentumSystem> system, const DampingProfile& damping,
                         const ForcingProfile& forcing, double rho, double nu, double dt, double blowup_bound)
    : system_(std::move(system)), rho_(rho), nu_(nu), dt_(dt), bound_(blowup_bound) {
  if (!system_) throw std::invalid_argument("stepper needs a momentum system");
  if (!(nu > 0)) throw std::invalid_argument("nu_fast must be positive");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const ModeLattice& lat = system_->lattice();
  const auto gamma = damping.rates(lat);
  const auto b = forcing.amplitudes(lat);
  const std::size_t n = lat.size();
  lambda_.resize(n);
  decay_.resize(n);
  half_decay_.resize(n);
  noise_scale_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    lambda_[k] = lat.lambda(k);
    decay_[k] = std::exp(-gamma[k] * dt);
    half_decay_[k] = std::exp(-0.5 * gamma[k] * dt);
    noise_scale_[k] = half_decay_[k] * b[k] * std::sqrt(dt);
  }
  w_.resize(n);
  work_a_.resize(n);
  work_b_.resize(n);
}

double FullStepper::phase_per_step() const noexcept {
  return dt_ * system_->max_lambda() / nu_;
}

void FullStepper::advance(FieldState& state, Rng& rng, std::size_t step_index) {
  if (!state.lattice || state.lattice.get() != &system_->lattice()) {
    throw std::invalid_argument("field state belongs to a different lattice than the interaction table");
  }
  auto& v = state.v;
  const std::size_t n = v.size();
  const double tau = state.tau;
  for (std::size_t k = 0; k < n; ++k) w_[k] = std::polar(1.0, lambda_[k] * tau / nu_) * v[k];

  if (rho_ != 0.0) {
    const cplx coupling = -kI * rho_;
    system_->interaction(w_, tau, nu_, work_a_);
    for (std::size_t k = 0; k < n; ++k) work_b_[k] = half_decay_[k] * (w_[k] + 0.5 * dt_ * coupling * work_a_[k]);
    system_->interaction(work_b_, tau + 0.5 * dt_, nu_, work_a_);
    for (std::size_t k = 0; k < n; ++k) w_[k] = decay_[k] * w_[k] + dt_ * half_decay_[k] * coupling * work_a_[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) w_[k] *= decay_[k];
  }
  // The rotated complex Gaussian increment has the law of the unrotated one,
  // so the noise is added to w directly.
  for (std::size_t k = 0; k < n; ++k) {
    const double re = normal_(rng);
    const double im = normal_(rng);
    w_[k] += noise_scale_[k] * cplx(re, im);
  }
  state.tau = tau + dt_;
  for (std::size_t k = 0; k < n; ++k) v[k] = std::polar(1.0, -lambda_[k] * state.tau / nu_) * w_[k];
  check_bound(w_, bound_, step_index, state.tau);
}

FieldState step(const FieldState& state, const std::shared_ptr<const ResonantSystem>& system, const SimConfig& config,
                const DampingProfile& damping, const ForcingProfile& forcing, Rng& rng) {
  config.validate();
  EffectiveStepper stepper(system, damping, forcing, config.rho, config.dt, config.blowup_bound);
  FieldState next = state;
  stepper.advance(next, rng);
  return next;
}

FieldState step_full(const FieldState& state, const std::shared_ptr<const MomentumSystem>& system,
                     const SimConfig& config, const DampingProfile& damping, const ForcingProfile& forcing, Rng& rng) {
  config.validate();
  if (!config.nu_fast) throw std::invalid_argument("step_full requires nu_fast");
  FullStepper stepper(system, damping, forcing, config.rho, *config.nu_fast, config.dt, config.blowup_bound);
  FieldState next = state;
  stepper.advance(next, rng);
  return next;
}

bool EnsembleRun::ok() const noexcept {
  return std::none_of(trajectories.begin(), trajectories.end(), [](const Trajectory& t) { return t.failure.has_value(); });
}

std::vector<TrajectoryFailure> EnsembleRun::failures() const {
  std::vector<TrajectoryFailure> out;
  for (const auto& t : trajectories) {
    if (t.failure) out.push_back(*t.failure);
  }
  return out;
}

namespace {

FieldState draw_initial(const std::shared_ptr<const ModeLattice>& lattice, const InitialCondition& initial,
                        std::uint64_t seed, std::size_t trajectory) {
  const std::size_t n = lattice->size();
  FieldState state = FieldState::zeros(lattice);
  if (!initial.mean.empty()) state.v = initial.mean;
  if (!initial.variance.empty()) {
    Rng rng = make_stream(seed, trajectory, StreamTag::kInitialCondition);
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < n; ++k) {
      const double sd = std::sqrt(0.5 * initial.variance[k]);
      const double re = normal(rng);
      const double im = normal(rng);
      state.v[k] += sd * cplx(re, im);
    }
  }
  return state;
}

template <typename Stepper>
void run_trajectory(Stepper& stepper, FieldState state, Rng& rng, const SimConfig& config, std::size_t id,
                    Trajectory& out) {
  const std::size_t n = state.v.size();
  const std::size_t steps = config.step_count();
  const std::size_t snapshots = config.snapshot_count();
  if (config.keep_states) out.states.assign(snapshots * n, cplx{});
  out.spectra.assign(snapshots * n, 0.0);
  if (config.average_from) out.time_average.assign(n, 0.0);

  auto record = [&](std::size_t slot) {
    for (std::size_t k = 0; k < n; ++k) {
      if (config.keep_states) out.states[slot * n + k] = state.v[k];
      out.spectra[slot * n + k] = std::norm(state.v[k]);
    }
    out.completed_snapshots = slot + 1;
  };

  record(0);
  for (std::size_t s = 1; s <= steps; ++s) {
    try {
      stepper.advance(state, rng, s);
    } catch (const BlowUpError& e) {
      out.failure = TrajectoryFailure{id, e.step, e.tau, e.mode, e.what()};
      return;
    }
    // Slow time is recomputed from the step count so snapshot times do not
    // accumulate roundoff.
    state.tau = static_cast<double>(s) * config.dt;
    if (config.average_from && state.tau >= *config.average_from - 1e-12) {
      for (std::size_t k = 0; k < n; ++k) out.time_average[k] += std::norm(state.v[k]);
      ++out.averaged_steps;
    }
    if (s % config.stride == 0) record(s / config.stride);
  }
  if (config.average_from && out.averaged_steps > 0) {
    for (auto& x : out.time_average) x /= static_cast<double>(out.averaged_steps);
  }
}

}  // namespace

EnsembleRun simulate(const SimConfig& config, std::shared_ptr<const ModeLattice> lattice,
                     const DampingProfile& damping, const ForcingProfile& forcing, const InitialCondition& initial) {
  config.validate();
  if (!lattice) throw std::invalid_argument("simulate needs a lattice");
  const std::size_t n = lattice->size();
  if (!initial.mean.empty() && initial.mean.size() != n) throw std::invalid_argument("initial mean needs one value per mode");
  if (!initial.variance.empty() && initial.variance.size() != n) {
    throw std::invalid_argument("initial variance needs one value per mode");
  }
  // Validates the profiles up front so bad input fails before any work.
  (void)damping.rates(*lattice);
  (void)forcing.amplitudes(*lattice);

  EnsembleRun run;
  run.lattice = lattice;
  run.config = config;
  const std::size_t snapshots = config.snapshot_count();
  run.taus.resize(snapshots);
  for (std::size_t j = 0; j < snapshots; ++j) run.taus[j] = static_cast<double>(j * config.stride) * config.dt;
  run.trajectories.resize(config.ensemble_size);

  std::shared_ptr<const ResonantSystem> resonant;
  std::shared_ptr<const MomentumSystem> momentum;
  if (config.nu_fast) {
    momentum = std::make_shared<const MomentumSystem>(lattice);
    const double phase = config.dt * momentum->max_lambda() / *config.nu_fast;
    if (phase > config.phase_threshold) {
      std::ostringstream msg;
      msg << "phase advance per step dt*max(lambda)/nu = " << phase << " exceeds " << config.phase_threshold;
      run.warnings.push_back(msg.str());
    }
  } else {
    resonant = std::make_shared<const ResonantSystem>(lattice);
  }

  parallel_for(config.ensemble_size, config.threads, [&](std::size_t j) {
    Rng rng = make_stream(config.seed, j, StreamTag::kTrajectory);
    FieldState state = draw_initial(lattice, initial, config.seed, j);
    if (momentum) {
      FullStepper stepper(momentum, damping, forcing, config.rho, *config.nu_fast, config.dt, config.blowup_bound);
      run_trajectory(stepper, std::move(state), rng, config, j, run.trajectories[j]);
    } else {
      EffectiveStepper stepper(resonant, damping, forcing, config.rho, config.dt, config.blowup_bound);
      run_trajectory(stepper, std::move(state), rng, config, j, run.trajectories[j]);
    }
  });
  return run;
}

std::vector<ModeMean> mean_spectrum(const EnsembleRun& run, std::size_t snapshot) {
  if (snapshot >= run.taus.size()) throw std::out_of_range("snapshot index out of range");
  const std::size_t n = run.modes();
  std::vector<RunningStats> acc(n);
  for (const auto& t : run.trajectories) {
    if (t.failure) continue;
    for (std::size_t k = 0; k < n; ++k) acc[k].add(t.spectra[snapshot * n + k]);
  }
  std::vector<ModeMean> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = {acc[k].mean(), acc[k].stderr_of_mean()};
  return out;
}

std::vector<ModeMean> mean_time_averaged_spectrum(const EnsembleRun& run) {
  if (!run.config.average_from) throw std::invalid_argument("run was not configured with average_from");
  const std::size_t n = run.modes();
  std::vector<RunningStats> acc(n);
  for (const auto& t : run.trajectories) {
    if (t.failure) continue;
    for (std::size_t k = 0; k < n; ++k) acc[k].add(t.time_average[k]);
  }
  std::vector<ModeMean> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = {acc[k].mean(), acc[k].stderr_of_mean()};
  return out;
}

}  // namespace kzlab
