#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "kzlab/errors.hpp"
#include "kzlab/kinetic.hpp"

using namespace kzlab;

namespace {

constexpr double kPi = 3.14159265358979323846;

KineticConfig small_config(std::size_t samples = 200'000) {
  KineticConfig c;
  c.samples = samples;
  c.seed = 17;
  c.threads = 1;
  return c;
}

double norm2(const std::array<double, 2>& a) { return a[0] * a[0] + a[1] * a[1]; }

std::vector<double> log_nodes(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return out;
}

}  // namespace

TEST(Kernel, ConstantDampingGivesConstantKernel) {
  KineticConfig c;
  c.m = 0;
  c.damping_coeff = 2.0;
  EXPECT_DOUBLE_EQ(kernel_T(1, 2, 3, 4, c), 1.0 / (c.phi_const * 8.0));
  EXPECT_DOUBLE_EQ(kernel_T(0.1, 7, 3, 9, c), kernel_T(1, 2, 3, 4, c));
}

TEST(Kernel, HomogeneousOfDegreeMinusM) {
  KineticConfig c;
  c.m = 1.5;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 5);
  for (int i = 0; i < 100; ++i) {
    const double k = u(rng), a = u(rng), b = u(rng), d = u(rng), lam = u(rng);
    const double base = kernel_T(k, a, b, d, c);
    EXPECT_NEAR(kernel_T(lam * k, lam * a, lam * b, lam * d, c), std::pow(lam, -c.m) * base, 1e-12 * base);
    // Symmetric in every argument.
    EXPECT_DOUBLE_EQ(kernel_T(k, a, b, d, c), kernel_T(a, k, d, b, c));
    EXPECT_DOUBLE_EQ(kernel_T(k, a, b, d, c), kernel_T(d, b, a, k, c));
  }
}

TEST(Kernel, ZeroDampingSumThrows) {
  KineticConfig c;
  c.damping_coeff = 0;
  EXPECT_THROW(kernel_T(1, 1, 1, 1, c), std::invalid_argument);
}

TEST(CollisionFactor, ExamplesAndSymmetries) {
  EXPECT_DOUBLE_EQ(collision_factor(1, 1, 1, 1), 0.0);
  EXPECT_DOUBLE_EQ(collision_factor(1, 2, 3, 4), 24 + 6 - 12 - 8);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 3);
  for (int i = 0; i < 100; ++i) {
    const double n = u(rng), a = u(rng), b = u(rng), d = u(rng);
    EXPECT_NEAR(collision_factor(n, a, b, d), collision_factor(n, b, a, d), 1e-12);
    // Exchanging the in and out pairs flips the sign.
    EXPECT_NEAR(collision_factor(a, n, d, b), -collision_factor(n, a, b, d), 1e-12);
    // A constant spectrum is a zero everywhere.
    EXPECT_NEAR(collision_factor(n, n, n, n), 0.0, 1e-12);
  }
}

TEST(Zakharov, BracketZeros) {
  EXPECT_DOUBLE_EQ(zakharov_bracket(0, 1, 2, 3, 4), 0.0);
  // x = 2: 1 + k3^2 - k1^2 - k2^2 vanishes on the resonant shell with |k| = 1.
  EXPECT_NEAR(zakharov_bracket(2, 1, std::sqrt(2.0), std::sqrt(3.0), 2.0), 0.0, 1e-14);
  EXPECT_THROW(zakharov_bracket(1, 0, 1, 1, 1), std::invalid_argument);
}

TEST(Exponents, XOfSigmaAndKzValues) {
  EXPECT_DOUBLE_EQ(x_of_sigma(-1.0, 0.0, 2), -1.0);
  const auto e = kz_exponents(2, Rational(0));
  EXPECT_EQ(e.sigma1, Rational(-4, 3));
  EXPECT_EQ(e.sigma2, Rational(-2));
  EXPECT_EQ(x_of_sigma(e.sigma1, Rational(0), 2), Rational(0));
  EXPECT_EQ(x_of_sigma(e.sigma2, Rational(0), 2), Rational(2));
  const auto e3 = kz_exponents(3, Rational(1, 2));
  EXPECT_EQ(e3.sigma1, Rational(-15, 6));
  EXPECT_EQ(e3.sigma2, Rational(-19, 6));
  EXPECT_EQ(format_rational(e.sigma1), "-4/3");
  EXPECT_EQ(format_rational(e.sigma2), "-2");
  for (int d = 1; d <= 3; ++d) {
    for (int m2 = -4; m2 <= 4; ++m2) {
      const Rational m(m2, 2);
      const auto kz = kz_exponents(d, m);
      EXPECT_EQ(x_of_sigma(kz.sigma1, m, d), Rational(0));
      EXPECT_EQ(x_of_sigma(kz.sigma2, m, d), Rational(2));
    }
  }
}

TEST(Spectrum, PowerLawAndGrid) {
  const auto p = SpectrumFn::power_law(2.0, -1.5, 0.1, 10);
  EXPECT_DOUBLE_EQ(*p(4.0), 2.0 * std::pow(4.0, -1.5));
  EXPECT_TRUE(p(100.0).has_value());
  const auto r = SpectrumFn::power_law(1.0, -1.0, 0.1, 10, SpectrumFn::Extension::kReject);
  EXPECT_FALSE(r(100.0).has_value());
  EXPECT_FALSE(r(0.01).has_value());
  const auto nodes = log_nodes(0.1, 10, 9);
  std::vector<double> values;
  for (double k : nodes) values.push_back(3.0 * std::pow(k, -0.7));
  const auto g = SpectrumFn::grid(nodes, values);
  EXPECT_NEAR(*g(1.234), 3.0 * std::pow(1.234, -0.7), 1e-12);
  EXPECT_FALSE(g(20.0).has_value());
  EXPECT_THROW(SpectrumFn::grid({1.0, 0.5}, {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(SpectrumFn::grid({1.0, 2.0}, {1.0, -1.0}), std::invalid_argument);
  EXPECT_THROW(SpectrumFn::power_law(-1.0, 0, 0.1, 1), std::invalid_argument);
}

TEST(Manifold, SamplesSatisfyBothResonanceConditions) {
  for (double k : {0.3, 1.0, 4.0}) {
    for (const auto& s : draw_manifold_samples(k, 20000, 9)) {
      const std::array<double, 2> kv{k, 0.0};
      const double scale = 1.0 + norm2(s.k1) + norm2(s.k2) + norm2(s.k3) + k * k;
      EXPECT_NEAR(kv[0] + s.k3[0], s.k1[0] + s.k2[0], 1e-10 * std::sqrt(scale));
      EXPECT_NEAR(kv[1] + s.k3[1], s.k1[1] + s.k2[1], 1e-10 * std::sqrt(scale));
      EXPECT_NEAR(k * k + norm2(s.k3), norm2(s.k1) + norm2(s.k2), 1e-10 * scale);
      EXPECT_GE(s.weight, 0.0);
    }
  }
}

TEST(Manifold, DeterministicInSeed) {
  const auto a = draw_manifold_samples(1.0, 1000, 5);
  const auto b = draw_manifold_samples(1.0, 1000, 5);
  const auto c = draw_manifold_samples(1.0, 1000, 6);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].k1, b[i].k1);
  EXPECT_NE(a[0].k1, c[0].k1);
}

TEST(Manifold, KnownIntegral) {
  // int exp(-|k3|^2) dk3 dtheta / 4 = pi * (2 pi / 4).
  const ManifoldIntegrand g = [](double, double, double, double m3) -> std::optional<double> {
    return std::exp(-m3 * m3);
  };
  const std::vector<ManifoldIntegrand> fs{g};
  for (double k : {0.5, 2.0}) {
    const auto e = integrate_manifold(k, fs, 400'000, 3, 1)[0];
    EXPECT_NEAR(e.value, kPi * kPi / 2, 4 * e.stderr_of_mean) << k;
    EXPECT_LT(e.stderr_of_mean, 0.01 * kPi * kPi / 2);
  }
}

TEST(Manifold, SecondKnownIntegralInTheOuterModes) {
  // The measure is symmetric between (k, k3) and (k1, k2), so integrating a
  // function of |k1| gives the same value.
  const ManifoldIntegrand g = [](double, double m1, double, double) -> std::optional<double> {
    return std::exp(-m1 * m1);
  };
  const std::vector<ManifoldIntegrand> fs{g};
  const auto e = integrate_manifold(1.0, fs, 400'000, 4, 1)[0];
  EXPECT_NEAR(e.value, kPi * kPi / 2, 4 * e.stderr_of_mean);
}

TEST(Manifold, ThreadCountDoesNotChangeResult) {
  const ManifoldIntegrand g = [](double, double m1, double m2, double m3) -> std::optional<double> {
    return std::exp(-(m1 * m1 + m2 * m2 + m3 * m3));
  };
  const std::vector<ManifoldIntegrand> fs{g};
  const auto a = integrate_manifold(1.0, fs, 300'000, 8, 1)[0];
  const auto b = integrate_manifold(1.0, fs, 300'000, 8, 4)[0];
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.stderr_of_mean, b.stderr_of_mean);
}

TEST(Manifold, RejectionsAreCounted) {
  const ManifoldIntegrand g = [](double, double, double, double m3) -> std::optional<double> {
    if (m3 > 1.0) return std::nullopt;
    return 1.0;
  };
  const std::vector<ManifoldIntegrand> fs{g};
  const auto e = integrate_manifold(1.0, fs, 10'000, 4, 1)[0];
  EXPECT_GT(e.rejected, 0u);
  EXPECT_LT(e.rejected, e.samples);
  EXPECT_GT(e.rejected_fraction(), 0.0);
}

TEST(Collision, RayleighJeansSpectraAreZeros) {
  auto c = small_config();
  c.m = 0;
  const auto flat = SpectrumFn::power_law(2.0, 0.0, c.k_min, c.k_max);
  const auto eq = SpectrumFn::power_law(1.0, -2.0, c.k_min, c.k_max);
  const std::vector<SpectrumFn> spectra{flat, eq};
  const auto r = collision_integrals(1.0, spectra, c);
  EXPECT_EQ(r[0].value, 0.0);
  // The equipartition zero holds up to cancellation roundoff; bound it by the
  // integral of the absolute terms on the same samples.
  const ManifoldIntegrand magnitude = [&](double k, double a, double b, double d) -> std::optional<double> {
    const double n = *eq(k), n1 = *eq(a), n2 = *eq(b), n3 = *eq(d);
    return kernel_T(k, a, b, d, c) * (n1 * n2 * n3 + n * n1 * n2 + n * n2 * n3 + n * n1 * n3);
  };
  const std::vector<ManifoldIntegrand> fs{magnitude};
  const double scale = integrate_manifold(1.0, fs, c.samples, c.seed, 1, c.u_max)[0].value;
  EXPECT_GT(scale, 0.0);
  EXPECT_LE(std::abs(r[1].value), 1e-10 * scale);
}

TEST(Collision, OnlyTwoDimensionsSupported) {
  auto c = small_config();
  c.d = 3;
  EXPECT_THROW(collision_integral(1.0, SpectrumFn::power_law(1, -1, 0.1, 10), c), UnsupportedError);
}

TEST(Collision, ScalesWithCollisionPrefactor) {
  auto c = small_config(100'000);
  const auto n = SpectrumFn::power_law(1.0, -1.0, c.k_min, c.k_max);
  const double base = collision_integral(1.0, n, c).value;
  c.eps4 = 3.0;
  EXPECT_NEAR(collision_integral(1.0, n, c).value, 3.0 * base, 1e-12 * std::abs(base));
}

TEST(Scan, FindsTheDipNearTheFluxExponent) {
  auto c = small_config(400'000);
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(-2.0 + i / 6.0);
  const auto scan = stationarity_scan(grid, 1.0, c);
  ASSERT_EQ(scan.rows.size(), grid.size());
  bool near = false;
  for (double s : scan.dips) near = near || std::abs(s + 4.0 / 3.0) < 0.2;
  EXPECT_TRUE(near);
  EXPECT_THROW(stationarity_scan(grid, 50.0, c), std::invalid_argument);
  std::ostringstream out;
  write_scan_csv(out, scan);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "sigma,residual,stderr");
}

TEST(Rhs, LinearPartWithoutCollisions) {
  auto c = small_config(1000);
  c.eps4 = 0.0;
  c.m = 2.0;
  const auto n = SpectrumFn::power_law(1.0, -1.0, c.k_min, c.k_max);
  const RadialFn b2 = [](double k) { return 1.0 / (1 + k * k); };
  const auto r = kinetic_rhs(2.0, n, b2, c);
  EXPECT_DOUBLE_EQ(r.value, -2.0 * 4.0 * 0.5 + 0.2);
  EXPECT_EQ(r.collision, 0.0);
  const auto rejecting = SpectrumFn::power_law(1.0, -1.0, c.k_min, c.k_max, SpectrumFn::Extension::kReject);
  EXPECT_THROW(kinetic_rhs(50.0, rejecting, b2, c), MissingDataError);
}

TEST(Evolve, PureRelaxationMatchesEulerExactly) {
  auto c = small_config(1000);
  c.eps4 = 0.0;
  c.m = 1.0;
  const auto nodes = log_nodes(0.1, 10, 40);
  std::vector<double> values(nodes.size(), 1.0);
  EvolveOptions o;
  o.dt = 0.01;
  o.steps = 50;
  o.record_every = 25;
  const auto r = evolve_spectrum(SpectrumFn::grid(nodes, values), nullptr, c, o);
  ASSERT_EQ(r.profiles.size(), 3u);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    EXPECT_NEAR(r.profiles.back()[i], std::pow(1 - 2 * o.dt * nodes[i], 50), 1e-12);
  }
  std::ostringstream out;
  write_evolution_csv(out, r);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "step,k_node,n");
}

TEST(Evolve, RayleighJeansConstantIsStationaryUnderCollisions) {
  // Forcing balances damping exactly, so only the collision term could move
  // the constant spectrum.
  auto c = small_config(20'000);
  const auto nodes = log_nodes(0.1, 10, 32);
  const std::vector<double> values(nodes.size(), 0.5);
  EvolveOptions o;
  o.dt = 0.01;
  o.steps = 10;
  const RadialFn balance = [](double) { return 1.0; };
  const auto r = evolve_spectrum(SpectrumFn::grid(nodes, values), balance, c, o);
  for (double v : r.profiles.back()) EXPECT_NEAR(v, 0.5, 1e-12);
  EXPECT_GT(r.rejected_fraction, 0.0);
}

TEST(Evolve, InstabilityAndBadInputsThrow) {
  auto c = small_config(1000);
  c.eps4 = 0.0;
  c.damping_coeff = 1e-3;
  const auto nodes = log_nodes(0.1, 10, 32);
  EvolveOptions o;
  o.dt = 1.0;
  o.steps = 200;
  const RadialFn huge = [](double) { return 1e11; };
  EXPECT_THROW(evolve_spectrum(SpectrumFn::grid(nodes, std::vector<double>(32, 1.0)), huge, c, o), NumericalError);
  const auto few = log_nodes(0.1, 10, 10);
  EXPECT_THROW(evolve_spectrum(SpectrumFn::grid(few, std::vector<double>(10, 1.0)), nullptr, c, o),
               std::invalid_argument);
  EXPECT_THROW(evolve_spectrum(SpectrumFn::power_law(1, 0, 0.1, 10), nullptr, c, o), std::invalid_argument);
}

TEST(Evolve, ClampsAtTheFloor) {
  auto c = small_config(1000);
  c.eps4 = 0.0;
  c.damping_coeff = 1.0;
  const auto nodes = log_nodes(0.1, 10, 32);
  EvolveOptions o;
  o.dt = 0.6;  // 1 - 2 gamma dt < 0
  o.steps = 1;
  const auto r = evolve_spectrum(SpectrumFn::grid(nodes, std::vector<double>(32, 1.0)), nullptr, c, o);
  EXPECT_EQ(r.clamp_count, 32u);
  for (double v : r.profiles.back()) EXPECT_EQ(v, o.floor);
}

TEST(Config, Validation) {
  KineticConfig c;
  EXPECT_NO_THROW(c.validate());
  c.eps4 = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.eps4 = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = KineticConfig{};
  c.k_min = 5;
  c.k_max = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
