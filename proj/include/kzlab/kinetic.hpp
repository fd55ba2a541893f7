#pragma once

// Continuum kinetic equation for isotropic spectra n(|k|):
//
//   dn/dt = -2 gamma(k) n(k) + b2(k) + eps4 * int T(k, k1, k2, k3) F(n) dmu
//
// with F = n1 n2 n3 + n n1 n2 - n n2 n3 - n n1 n3, T = 1 / (phi (gamma + gamma1
// + gamma2 + gamma3)), gamma(k) = damping_coeff |k|^m, and mu the measure of
// the resonant manifold k + k3 = k1 + k2, |k|^2 + |k3|^2 = |k1|^2 + |k2|^2.
// In d = 2, with k3 free and k1 on the circle of center (k + k3)/2 through
// k and k3 at angle theta, dmu = dk3 dtheta / 4.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "kzlab/lattice.hpp"

namespace kzlab {

using Rational = boost::rational<std::int64_t>;

struct KineticConfig {
  int d = 2;
  double m = 0.0;               // gamma(k) = damping_coeff |k|^m
  double damping_coeff = 1.0;
  double eps4 = 1.0;            // collision prefactor
  double phi_const = 4.18879020478639098;  // 4 pi / 3
  double k_min = 0.1;
  double k_max = 10.0;
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  double u_max = 60.0;          // truncation of the log-radius proposals

  void validate() const;
  double gamma(double modulus) const;
};

// Isotropic spectrum. Outside the window a power law either extends
// analytically or rejects; a grid always rejects.
class SpectrumFn {
 public:
  enum class Extension { kExact, kReject };

  static SpectrumFn power_law(double amplitude, double sigma, double k_min, double k_max,
                              Extension ext = Extension::kExact);
  // Log-log interpolation between nodes; nodes strictly increasing and
  // positive, values positive.
  static SpectrumFn grid(std::vector<double> nodes, std::vector<double> values);

  // Nothing for rejected moduli.
  std::optional<double> operator()(double modulus) const;

  bool is_grid() const noexcept { return !nodes_.empty(); }
  std::span<const double> nodes() const noexcept { return nodes_; }
  std::span<const double> values() const noexcept { return values_; }
  double sigma() const noexcept { return sigma_; }

 private:
  double amplitude_ = 1.0;
  double sigma_ = 0.0;
  double k_min_ = 0.0;
  double k_max_ = 0.0;
  Extension ext_ = Extension::kExact;
  std::vector<double> nodes_;
  std::vector<double> values_;
  std::vector<double> log_nodes_;
  std::vector<double> log_values_;
};

// phi^{-1} / (gamma(k) + gamma(k1) + gamma(k2) + gamma(k3)).
double kernel_T(double k, double k1, double k2, double k3, const KineticConfig& config);

// n1 n2 n3 + n n1 n2 - n n2 n3 - n n1 n3 for (n, n1, n2, n3) = (n_k, n_k1, n_k2, n_k3).
double collision_factor(double n, double n1, double n2, double n3) noexcept;

// 1 + (k3/k)^x - (k1/k)^x - (k2/k)^x.
double zakharov_bracket(double x, double k, double k1, double k2, double k3);

// x = 2 - 3 sigma - m - 3 d.
double x_of_sigma(double sigma, double m, int d) noexcept;
Rational x_of_sigma(Rational sigma, Rational m, int d);

struct KzExponents {
  Rational sigma1;  // -(m + 3d - 2) / 3
  Rational sigma2;  // -(m + 3d) / 3
  Rational rj_flat{0};
  Rational rj_equipartition{-2};
};

KzExponents kz_exponents(int d, Rational m);
std::string format_rational(const Rational& r);

// One point of the d = 2 resonant manifold at external wavevector (|k|, 0),
// with 1/density of the mixture proposal relative to mu.
struct ManifoldSample {
  std::array<double, 2> k1;
  std::array<double, 2> k2;
  std::array<double, 2> k3;
  double weight;
};

// Draws count samples (deterministic in seed). The proposal mixes three
// channels: k3 log-radial with theta uniform, and k1 (or k2) log-radial with
// k3 displaced along the circle's chord direction by a Cauchy distance.
std::vector<ManifoldSample> draw_manifold_samples(double k_modulus, std::size_t count, std::uint64_t seed,
                                                  double u_max = 60.0);

// f(|k|, |k1|, |k2|, |k3|); nothing marks a rejected sample.
using ManifoldIntegrand = std::function<std::optional<double>(double, double, double, double)>;

struct McEstimate {
  double value = 0.0;
  double stderr_of_mean = 0.0;
  std::size_t samples = 0;
  std::size_t rejected = 0;

  double rejected_fraction() const noexcept {
    return samples ? static_cast<double>(rejected) / static_cast<double>(samples) : 0.0;
  }
};

// Importance-sampled int f dmu for every integrand on the same samples
// (common random numbers). Samples come in blocks with their own substreams;
// results do not depend on the thread count.
std::vector<McEstimate> integrate_manifold(double k_modulus, std::span<const ManifoldIntegrand> integrands,
                                           std::size_t samples, std::uint64_t seed, unsigned threads = 0,
                                           double u_max = 60.0);

// eps4 * int T F(n) dmu. Throws UnsupportedError for d != 2.
McEstimate collision_integral(double k_modulus, const SpectrumFn& n, const KineticConfig& config);
// Several spectra on common random numbers.
std::vector<McEstimate> collision_integrals(double k_modulus, std::span<const SpectrumFn> spectra,
                                            const KineticConfig& config);

using RadialFn = std::function<double(double)>;

struct KineticRate {
  double value = 0.0;
  double collision = 0.0;
  double stderr_of_mean = 0.0;
};

// -2 gamma(k) n(k) + b2(k) + collision_integral. Throws MissingDataError if
// n is rejected at k itself.
KineticRate kinetic_rhs(double k_modulus, const SpectrumFn& n, const RadialFn& forcing_sq,
                        const KineticConfig& config);

struct ScanRow {
  double sigma = 0.0;
  McEstimate residual;
};

struct ScanResult {
  double k_eval = 0.0;
  std::vector<ScanRow> rows;
  std::vector<double> dips;  // sigma at interior local minima of |residual|
};

// n = k^sigma for every sigma on common random numbers.
ScanResult stationarity_scan(std::span<const double> sigma_grid, double k_eval, const KineticConfig& config);

struct EvolveOptions {
  double dt = 1e-3;
  std::size_t steps = 1000;
  std::size_t record_every = 100;
  double floor = 1e-300;
  double bound = 1e12;
};

struct EvolveResult {
  std::vector<double> nodes;
  std::vector<std::size_t> recorded_steps;
  std::vector<std::vector<double>> profiles;  // one per recorded step
  std::size_t clamp_count = 0;
  double rejected_fraction = 0.0;  // of the frozen quadrature, over the run
};

// Forward Euler on the grid nodes with a frozen quadrature: one set of
// config.samples manifold samples at |k| = 1, rescaled to every node. Throws
// NumericalError when a node exceeds the bound or turns non-finite.
EvolveResult evolve_spectrum(const SpectrumFn& n0, const RadialFn& forcing_sq, const KineticConfig& config,
                             const EvolveOptions& options);

// Rows "sigma,residual,stderr".
void write_scan_csv(std::ostream& out, const ScanResult& scan);
// Rows "step,k_node,n".
void write_evolution_csv(std::ostream& out, const EvolveResult& result);

}  // namespace kzlab
