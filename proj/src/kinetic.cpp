#include "kzlab/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "kzlab/errors.hpp"
#include "kzlab/parallel.hpp"
#include "kzlab/rng.hpp"
#include "kzlab/stats.hpp"

namespace kzlab {

namespace {

using Vec2 = std::array<double, 2>;

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kBlockSize = std::size_t{1} << 16;
constexpr double kRadialScale = 1.5;
constexpr std::array<double, 3> kChannelWeights{0.4, 0.3, 0.3};

Vec2 add(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 scale(const Vec2& a, double s) { return {a[0] * s, a[1] * s}; }
Vec2 rot90(const Vec2& a) { return {-a[1], a[0]}; }
double dot2(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
double len(const Vec2& a) { return std::hypot(a[0], a[1]); }

// Isotropic proposal on R^2 whose log-radius u = log(|v| / k) is Cauchy with
// scale kRadialScale, truncated to |u| <= u_max.
struct LogRadial {
  double k;
  double u_max;
  double half_angle;  // atan(u_max / scale)

  LogRadial(double k_, double u_max_) : k(k_), u_max(u_max_), half_angle(std::atan(u_max_ / kRadialScale)) {}

  Vec2 draw(Rng& rng, std::uniform_real_distribution<double>& unit) const {
    const double u = kRadialScale * std::tan((2.0 * unit(rng) - 1.0) * half_angle);
    const double phi = 2.0 * kPi * unit(rng);
    const double r = k * std::exp(u);
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  double density(const Vec2& v) const {
    const double r = len(v);
    if (!(r > 0)) return 0.0;
    const double u = std::log(r / k);
    if (std::abs(u) > u_max) return 0.0;
    const double z = u / kRadialScale;
    const double pu = 1.0 / (2.0 * half_angle * kRadialScale * (1.0 + z * z));
    return pu / (2.0 * kPi * r * r);
  }
};

// Density relative to mu of "pick a log-radially, then displace k3 from a
// along the chord direction by a Cauchy distance of scale |a - k|".
double chord_density(const LogRadial& radial, const Vec2& kvec, const Vec2& a, const Vec2& k3) {
  const Vec2 d = sub(a, kvec);
  const double s = len(d);
  if (!(s > 0)) return 0.0;
  const Vec2 e = scale(d, 1.0 / s);
  const double t = dot2(sub(k3, a), rot90(e));
  const double z = t / s;
  const double pt = 1.0 / (kPi * s * (1.0 + z * z));
  return radial.density(a) * pt * 2.0 * s;
}

void generate_block(double k_modulus, std::size_t block, std::size_t count, std::uint64_t seed, double u_max,
                    std::vector<ManifoldSample>& out) {
  Rng rng = make_stream(seed, block, StreamTag::kCollisionBlock);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const LogRadial radial(k_modulus, u_max);
  const Vec2 kvec{k_modulus, 0.0};
  out.clear();
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = unit(rng);
    Vec2 k1, k2, k3;
    if (pick < kChannelWeights[0]) {
      k3 = radial.draw(rng, unit);
      const double theta = 2.0 * kPi * unit(rng);
      const Vec2 c = scale(add(kvec, k3), 0.5);
      const double r = 0.5 * len(sub(k3, kvec));
      k1 = add(c, {r * std::cos(theta), r * std::sin(theta)});
      k2 = sub(add(kvec, k3), k1);
    } else {
      Vec2 a = radial.draw(rng, unit);
      const Vec2 d = sub(a, kvec);
      const double s = len(d);
      const double t = s * std::tan(kPi * (unit(rng) - 0.5));
      const Vec2 e = s > 0 ? scale(d, 1.0 / s) : Vec2{1.0, 0.0};
      k3 = add(a, scale(rot90(e), t));
      Vec2 b = sub(add(kvec, k3), a);
      if (pick < kChannelWeights[0] + kChannelWeights[1]) {
        k1 = a;
        k2 = b;
      } else {
        k1 = b;
        k2 = a;
      }
    }
    const double density = kChannelWeights[0] * 2.0 * radial.density(k3) / kPi +
                           kChannelWeights[1] * chord_density(radial, kvec, k1, k3) +
                           kChannelWeights[2] * chord_density(radial, kvec, k2, k3);
    out.push_back({k1, k2, k3, density > 0 ? 1.0 / density : 0.0});
  }
}

std::size_t block_count(std::size_t samples) { return (samples + kBlockSize - 1) / kBlockSize; }
std::size_t block_length(std::size_t samples, std::size_t b) { return std::min(kBlockSize, samples - b * kBlockSize); }

ManifoldIntegrand collision_integrand(const SpectrumFn& n, const KineticConfig& config) {
  return [&n, &config](double m0, double m1, double m2, double m3) -> std::optional<double> {
    const auto n0 = n(m0);
    const auto n1 = n(m1);
    const auto n2 = n(m2);
    const auto n3 = n(m3);
    if (!n0 || !n1 || !n2 || !n3) return std::nullopt;
    const double f = collision_factor(*n0, *n1, *n2, *n3);
    if (f == 0.0) return 0.0;
    return config.eps4 * kernel_T(m0, m1, m2, m3, config) * f;
  };
}

}  // namespace

void KineticConfig::validate() const {
  if (d < 1) throw std::invalid_argument("dimension must be at least 1");
  if (!(k_min > 0) || !(k_max > k_min)) throw std::invalid_argument("need 0 < k_min < k_max");
  if (!(eps4 >= 0)) throw std::invalid_argument("eps4 must be non-negative");
  if (!(phi_const > 0)) throw std::invalid_argument("phi_const must be positive");
  if (!(damping_coeff >= 0)) throw std::invalid_argument("damping coefficient must be non-negative");
  if (samples < 2) throw std::invalid_argument("need at least 2 quadrature samples");
  if (!(u_max > 0)) throw std::invalid_argument("u_max must be positive");
}

double KineticConfig::gamma(double modulus) const {
  if (m == 0.0) return damping_coeff;
  return damping_coeff * std::pow(modulus, m);
}

SpectrumFn SpectrumFn::power_law(double amplitude, double sigma, double k_min, double k_max, Extension ext) {
  if (!(amplitude > 0)) throw std::invalid_argument("power-law amplitude must be positive");
  if (!(k_min > 0) || !(k_max > k_min)) throw std::invalid_argument("power-law window needs 0 < k_min < k_max");
  SpectrumFn out;
  out.amplitude_ = amplitude;
  out.sigma_ = sigma;
  out.k_min_ = k_min;
  out.k_max_ = k_max;
  out.ext_ = ext;
  return out;
}

SpectrumFn SpectrumFn::grid(std::vector<double> nodes, std::vector<double> values) {
  if (nodes.size() < 2 || nodes.size() != values.size()) {
    throw std::invalid_argument("grid spectrum needs at least two nodes and one value per node");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!(nodes[i] > 0) || (i > 0 && !(nodes[i] > nodes[i - 1]))) {
      throw std::invalid_argument("grid nodes must be positive and strictly increasing");
    }
    if (!(values[i] > 0)) throw std::invalid_argument("grid values must be positive");
  }
  SpectrumFn out;
  out.k_min_ = nodes.front();
  out.k_max_ = nodes.back();
  out.ext_ = Extension::kReject;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out.log_nodes_.push_back(std::log(nodes[i]));
    out.log_values_.push_back(std::log(values[i]));
  }
  out.nodes_ = std::move(nodes);
  out.values_ = std::move(values);
  return out;
}

std::optional<double> SpectrumFn::operator()(double modulus) const {
  if (ext_ == Extension::kReject && !(modulus >= k_min_ && modulus <= k_max_)) return std::nullopt;
  if (!is_grid()) return amplitude_ * std::pow(modulus, sigma_);
  const double x = std::log(modulus);
  auto it = std::upper_bound(log_nodes_.begin(), log_nodes_.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - log_nodes_.begin());
  hi = std::clamp<std::size_t>(hi, 1, log_nodes_.size() - 1);
  const std::size_t lo = hi - 1;
  const double w = (x - log_nodes_[lo]) / (log_nodes_[hi] - log_nodes_[lo]);
  return std::exp(log_values_[lo] + w * (log_values_[hi] - log_values_[lo]));
}

double kernel_T(double k, double k1, double k2, double k3, const KineticConfig& config) {
  const double sum = config.gamma(k) + config.gamma(k1) + config.gamma(k2) + config.gamma(k3);
  if (!(sum > 0) || !std::isfinite(sum)) {
    throw std::invalid_argument("kernel T: damping sum is zero or not finite");
  }
  return 1.0 / (config.phi_const * sum);
}

double collision_factor(double n, double n1, double n2, double n3) noexcept {
  return n1 * n2 * n3 + n * n1 * n2 - n * n2 * n3 - n * n1 * n3;
}

double zakharov_bracket(double x, double k, double k1, double k2, double k3) {
  if (!(k > 0)) throw std::invalid_argument("zakharov_bracket needs k > 0");
  return 1.0 + std::pow(k3 / k, x) - std::pow(k1 / k, x) - std::pow(k2 / k, x);
}

double x_of_sigma(double sigma, double m, int d) noexcept {
  return 2.0 - 3.0 * sigma - m - 3.0 * d;
}

Rational x_of_sigma(Rational sigma, Rational m, int d) {
  return Rational(2) - Rational(3) * sigma - m - Rational(3 * d);
}

KzExponents kz_exponents(int d, Rational m) {
  KzExponents out;
  out.sigma1 = -(m + Rational(3 * d - 2)) / Rational(3);
  out.sigma2 = -(m + Rational(3 * d)) / Rational(3);
  return out;
}

std::string format_rational(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

std::vector<ManifoldSample> draw_manifold_samples(double k_modulus, std::size_t count, std::uint64_t seed,
                                                  double u_max) {
  if (!(k_modulus > 0)) throw std::invalid_argument("manifold sampling needs |k| > 0");
  std::vector<ManifoldSample> out;
  out.reserve(count);
  std::vector<ManifoldSample> block;
  for (std::size_t b = 0; b < block_count(count); ++b) {
    generate_block(k_modulus, b, block_length(count, b), seed, u_max, block);
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

std::vector<McEstimate> integrate_manifold(double k_modulus, std::span<const ManifoldIntegrand> integrands,
                                           std::size_t samples, std::uint64_t seed, unsigned threads,
                                           double u_max) {
  if (!(k_modulus > 0)) throw std::invalid_argument("manifold integration needs |k| > 0");
  if (samples < 2) throw std::invalid_argument("need at least 2 samples");
  const std::size_t nf = integrands.size();
  const std::size_t blocks = block_count(samples);
  std::vector<std::vector<RunningStats>> stats(blocks, std::vector<RunningStats>(nf));
  std::vector<std::vector<std::size_t>> rejected(blocks, std::vector<std::size_t>(nf, 0));

  parallel_for(blocks, threads, [&](std::size_t b) {
    std::vector<ManifoldSample> block;
    generate_block(k_modulus, b, block_length(samples, b), seed, u_max, block);
    for (const auto& s : block) {
      const double m1 = len(s.k1);
      const double m2 = len(s.k2);
      const double m3 = len(s.k3);
      for (std::size_t f = 0; f < nf; ++f) {
        double x = 0.0;
        if (s.weight > 0) {
          const auto value = integrands[f](k_modulus, m1, m2, m3);
          if (value) {
            x = *value * s.weight;
          } else {
            ++rejected[b][f];
          }
          if (!std::isfinite(x)) {
            ++rejected[b][f];
            x = 0.0;
          }
        }
        stats[b][f].add(x);
      }
    }
  });

  std::vector<McEstimate> out(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    RunningStats total;
    std::size_t rej = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      total.merge(stats[b][f]);
      rej += rejected[b][f];
    }
    out[f] = {total.mean(), total.stderr_of_mean(), total.count(), rej};
  }
  return out;
}

std::vector<McEstimate> collision_integrals(double k_modulus, std::span<const SpectrumFn> spectra,
                                            const KineticConfig& config) {
  config.validate();
  if (config.d != 2) {
    throw UnsupportedError("the continuum collision integral is implemented for d = 2 only (got d = " +
                           std::to_string(config.d) + ")");
  }
  std::vector<ManifoldIntegrand> fs;
  for (const auto& n : spectra) fs.push_back(collision_integrand(n, config));
  return integrate_manifold(k_modulus, fs, config.samples, config.seed, config.threads, config.u_max);
}

McEstimate collision_integral(double k_modulus, const SpectrumFn& n, const KineticConfig& config) {
  return collision_integrals(k_modulus, std::span<const SpectrumFn>(&n, 1), config).front();
}

KineticRate kinetic_rhs(double k_modulus, const SpectrumFn& n, const RadialFn& forcing_sq,
                        const KineticConfig& config) {
  const auto nk = n(k_modulus);
  if (!nk) throw MissingDataError("spectrum is not defined at k = " + std::to_string(k_modulus));
  KineticRate out;
  if (config.eps4 != 0.0) {
    const auto c = collision_integral(k_modulus, n, config);
    out.collision = c.value;
    out.stderr_of_mean = c.stderr_of_mean;
  } else {
    config.validate();
  }
  const double b2 = forcing_sq ? forcing_sq(k_modulus) : 0.0;
  out.value = -2.0 * config.gamma(k_modulus) * *nk + b2 + out.collision;
  return out;
}

ScanResult stationarity_scan(std::span<const double> sigma_grid, double k_eval, const KineticConfig& config) {
  if (sigma_grid.empty()) throw std::invalid_argument("empty sigma grid");
  for (double s : sigma_grid) {
    if (!std::isfinite(s)) throw std::invalid_argument("sigma grid must be finite");
  }
  if (!(k_eval >= config.k_min && k_eval <= config.k_max)) {
    throw std::invalid_argument("k_eval lies outside the inertial window");
  }
  std::vector<SpectrumFn> spectra;
  for (double s : sigma_grid) spectra.push_back(SpectrumFn::power_law(1.0, s, config.k_min, config.k_max));
  const auto estimates = collision_integrals(k_eval, spectra, config);
  ScanResult out;
  out.k_eval = k_eval;
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) out.rows.push_back({sigma_grid[i], estimates[i]});
  for (std::size_t i = 1; i + 1 < out.rows.size(); ++i) {
    const double here = std::abs(out.rows[i].residual.value);
    if (here < std::abs(out.rows[i - 1].residual.value) && here < std::abs(out.rows[i + 1].residual.value)) {
      out.dips.push_back(out.rows[i].sigma);
    }
  }
  return out;
}

EvolveResult evolve_spectrum(const SpectrumFn& n0, const RadialFn& forcing_sq, const KineticConfig& config,
                             const EvolveOptions& options) {
  config.validate();
  if (!n0.is_grid()) throw std::invalid_argument("evolve_spectrum needs a grid spectrum");
  if (n0.nodes().size() < 32) throw std::invalid_argument("evolve_spectrum needs at least 32 radial nodes");
  if (!(options.dt > 0)) throw std::invalid_argument("dt must be positive");
  if (options.record_every == 0) throw std::invalid_argument("record_every must be positive");
  if (config.eps4 != 0.0 && config.d != 2) {
    throw UnsupportedError("the continuum collision integral is implemented for d = 2 only");
  }

  const std::vector<double> nodes(n0.nodes().begin(), n0.nodes().end());
  std::vector<double> n(n0.values().begin(), n0.values().end());
  const std::size_t nn = nodes.size();

  // Unit-|k| quadrature; rescaling moduli by k and weights by k^2 gives the
  // same manifold at |k|.
  struct UnitSample {
    double m1, m2, m3, weight;
  };
  std::vector<UnitSample> quad;
  if (config.eps4 != 0.0) {
    for (const auto& s : draw_manifold_samples(1.0, config.samples, config.seed, config.u_max)) {
      if (s.weight > 0) quad.push_back({len(s.k1), len(s.k2), len(s.k3), s.weight});
    }
  }
  const double inv_samples = 1.0 / static_cast<double>(config.samples);

  std::vector<double> gamma(nn), forcing(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    gamma[i] = config.gamma(nodes[i]);
    forcing[i] = forcing_sq ? forcing_sq(nodes[i]) : 0.0;
  }

  EvolveResult out;
  out.nodes = nodes;
  out.recorded_steps.push_back(0);
  out.profiles.push_back(n);
  std::vector<double> rate(nn);
  std::vector<std::size_t> rejected(nn);
  std::size_t rejected_total = 0;
  std::size_t evaluated_total = 0;

  for (std::size_t step = 1; step <= options.steps; ++step) {
    const SpectrumFn current = SpectrumFn::grid(nodes, n);
    parallel_for(nn, config.threads, [&](std::size_t i) {
      const double k = nodes[i];
      double collision = 0.0;
      std::size_t rej = 0;
      for (const auto& s : quad) {
        const auto n1 = current(k * s.m1);
        const auto n2 = current(k * s.m2);
        const auto n3 = current(k * s.m3);
        if (!n1 || !n2 || !n3) {
          ++rej;
          continue;
        }
        const double f = collision_factor(n[i], *n1, *n2, *n3);
        collision += kernel_T(k, k * s.m1, k * s.m2, k * s.m3, config) * f * s.weight * k * k;
      }
      rejected[i] = rej;
      rate[i] = -2.0 * gamma[i] * n[i] + forcing[i] + config.eps4 * collision * inv_samples;
    });
    for (std::size_t i = 0; i < nn; ++i) {
      rejected_total += rejected[i];
      evaluated_total += quad.size();
      double next = n[i] + options.dt * rate[i];
      if (!std::isfinite(next) || next > options.bound) {
        std::ostringstream msg;
        msg << "spectrum at node k=" << nodes[i] << " reached " << next << " at step " << step
            << "; reduce dt or the collision prefactor";
        throw NumericalError(msg.str());
      }
      if (next < options.floor) {
        next = options.floor;
        ++out.clamp_count;
      }
      n[i] = next;
    }
    if (step % options.record_every == 0 || step == options.steps) {
      out.recorded_steps.push_back(step);
      out.profiles.push_back(n);
    }
  }
  out.rejected_fraction =
      evaluated_total ? static_cast<double>(rejected_total) / static_cast<double>(evaluated_total) : 0.0;
  return out;
}

void write_scan_csv(std::ostream& out, const ScanResult& scan) {
  out << "sigma,residual,stderr\n";
  char buf[96];
  for (const auto& row : scan.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", row.sigma, row.residual.value, row.residual.stderr_of_mean);
    out << buf;
  }
}

void write_evolution_csv(std::ostream& out, const EvolveResult& result) {
  out << "step,k_node,n\n";
  char buf[96];
  for (std::size_t r = 0; r < result.recorded_steps.size(); ++r) {
    for (std::size_t i = 0; i < result.nodes.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", result.recorded_steps[r], result.nodes[i],
                    result.profiles[r][i]);
      out << buf;
    }
  }
}

}  // namespace kzlab
