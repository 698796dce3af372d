#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "iontrap/cavity.hpp"
#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/presets.hpp"

using namespace iontrap;
using iontrap::testing::Gen;
using iontrap::testing::rel_err;
using units::angular;

namespace {

const IonSpecies kYb = IonSpecies::ytterbium174();

// k0 = 2 pi / lambda written out independently of the library.
double eta_oracle(double f, double w, double lambda) {
  const double k0 = 2.0 * constants::pi / lambda;
  return 24.0 * f / (constants::pi * w * w * k0 * k0);
}

}  // namespace

TEST_CASE("cooperativity: reported values and linearity") {
  CHECK(cooperativity(12500, 38e-6, 369e-9) == doctest::Approx(0.23).epsilon(0.02));
  CHECK(cooperativity(2400, 38e-6, 369e-9) == doctest::Approx(0.044).epsilon(0.02));
  CHECK(cooperativity(2400, 38e-6, 369e-9) == doctest::Approx(eta_oracle(2400, 38e-6, 369e-9)).epsilon(1e-14));
  CHECK(cooperativity(4800, 38e-6, 369e-9) == 2.0 * cooperativity(2400, 38e-6, 369e-9));
}

TEST_CASE("property: finesse recovered from cooperativity") {
  Gen gen(41);
  for (int i = 0; i < 100; ++i) {
    const double f = gen.uniform(10, 1e5);
    const double w = gen.uniform(5e-6, 200e-6);
    const double l = gen.uniform(200e-9, 1.6e-6);
    const double k0 = 2.0 * constants::pi / l;
    const double eta = cooperativity(f, w, l);
    CHECK(rel_err(eta * (w * w * k0 * k0 * constants::pi / 24.0), f) < 1e-12);
  }
}

TEST_CASE("g_from_eta round trip and example") {
  CHECK(g_from_eta(0.0, 1e7, 1e8) == 0.0);
  const double g = g_from_eta(0.044, angular(2.7e6), angular(19.9e6));
  // sqrt(eta kappa Gamma) / 2 with angular FWHM widths.
  CHECK(g / constants::two_pi == doctest::Approx(0.7694e6).epsilon(1e-3));
  Gen gen(42);
  for (int i = 0; i < 100; ++i) {
    const double eta = gen.uniform(0.0, 5.0);
    const double k = gen.uniform(1e5, 1e9);
    const double gm = gen.uniform(1e6, 1e9);
    CHECK(std::abs(eta_from_g(g_from_eta(eta, k, gm), k, gm) - eta) <= 1e-12 * std::max(eta, 1e-300));
  }
}

TEST_CASE("kappa from finesse") {
  const double k = kappa_from_finesse(2.2e-2, 2400);
  CHECK(k / constants::two_pi == doctest::Approx(2.84e6).epsilon(0.005));
  CHECK(std::abs(k / angular(2.7e6) - 1.0) < 0.06);
  CHECK(kappa_from_finesse(1.1e-2, 2400) == doctest::Approx(2.0 * k).epsilon(1e-15));
  CHECK(kappa_from_finesse(2.2e-2, 1e300) < 1e-280);
  double prev = 1e300;
  for (double f = 10; f < 1e6; f *= 1.7) {
    const double kf = kappa_from_finesse(2.2e-2, f);
    CHECK(kf < prev);
    CHECK(kf * f == doctest::Approx(k * 2400).epsilon(1e-14));
    prev = kf;
  }
}

TEST_CASE("cavity params: derived values and validation") {
  CavityParams c;
  c.length = 2.2e-2;
  c.finesse = 2400;
  c.waist = 38e-6;
  c.wavelength = 369.5e-9;
  CHECK(c.free_spectral_range() == doctest::Approx(constants::speed_of_light / 4.4e-2));
  CHECK(c.kappa_value() == doctest::Approx(kappa_from_finesse(2.2e-2, 2400)));
  CHECK(!c.output_coupling_value());
  c.transmission = 1.8e-4;
  CHECK(*c.output_coupling_value() == doctest::Approx(1.8e-4 * 2400 / constants::pi));
  c.loss = constants::pi / 2400 - 1.8e-4;
  CHECK(*c.output_coupling_value() == doctest::Approx(1.8e-4 * 2400 / constants::pi).epsilon(1e-9));
  c.validate();
  c.loss = 0.01;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.loss.reset();
  c.output_coupling = 0.13;
  c.kappa = angular(2.7e6);
  CHECK(*c.output_coupling_value() == 0.13);
  CHECK(c.kappa_value() == angular(2.7e6));
  c.waist = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("scattering chain") {
  const ScatteringResult r = scattering_chain(kYb, 10.0, -2.5 * kYb.linewidth);
  const double s = 10.0 / (1.0 + 25.0);
  CHECK(r.saturation == doctest::Approx(s).epsilon(1e-14));
  CHECK(r.rate == doctest::Approx(1.7e7).epsilon(0.03));
  CHECK(r.rate == doctest::Approx(s / (1 + s) * kYb.linewidth / 2).epsilon(1e-14));
  CHECK(r.coherent_fraction == doctest::Approx(0.72).epsilon(0.01 / 0.72));
  const ScatteringResult zero = scattering_chain(kYb, 0.0, 0.0);
  CHECK(zero.rate == 0.0);
  CHECK(zero.coherent_fraction == 1.0);
  const ScatteringResult big = scattering_chain(kYb, 1e6, 0.0);
  CHECK(std::abs(big.rate / (kYb.linewidth / 2) - 1.0) < 1e-5);
  Gen gen(43);
  for (int i = 0; i < 100; ++i) {
    const ScatteringResult x =
        scattering_chain(kYb, gen.uniform(0.0, 1e4), gen.uniform(-10.0, 10.0) * kYb.linewidth);
    CHECK(x.rate < kYb.linewidth / 2);
  }
  CHECK_THROWS_AS(scattering_chain(kYb, -1.0, 0.0), DomainError);
}

namespace {

struct BudgetInputs {
  ProbeParams probe;
  CavityParams cavity;
  double eta;
};

BudgetInputs paper_inputs() {
  const Preset& p = get_preset("paper-2012");
  return {p.probe, p.cavity, cooperativity(2400, 38e-6, 369e-9)};
}

}  // namespace

TEST_CASE("photon budget: reported inputs give about 375 counts/s") {
  const BudgetInputs in = paper_inputs();
  const PhotonBudget b = photon_budget(kYb, in.probe, in.cavity, in.eta, 0.5);
  CHECK(b.total >= 365.0);
  CHECK(b.total <= 375.0);
  // Product of the itemized factors, recomputed by hand.
  const double s = 10.0 / 26.0;
  const double expect = s / (1 + s) * kYb.linewidth / 2 * (1 / (1 + s)) * 0.5 * in.eta *
                        (2.7 / (2.7 + 4.9)) * (1.0 / 3.0) * 0.5 * 0.13 * 0.9 * 0.7 * 0.28;
  CHECK(b.total == doctest::Approx(expect).epsilon(1e-12));
  CHECK(b.factor("output_coupling").value == 0.13);
  CHECK(b.factors.back().running == doctest::Approx(b.total).epsilon(1e-15));
  CHECK_THROWS_AS(b.factor("nonexistent"), ConfigError);
}

TEST_CASE("photon budget: zero cooperativity, localization, validation") {
  const BudgetInputs in = paper_inputs();
  CHECK(photon_budget(kYb, in.probe, in.cavity, 0.0).total == 0.0);
  const double half = photon_budget(kYb, in.probe, in.cavity, in.eta, 0.5).total;
  CHECK(photon_budget(kYb, in.probe, in.cavity, in.eta, 1.0).total == doctest::Approx(2 * half).epsilon(1e-15));
  CHECK_THROWS_AS(photon_budget(kYb, in.probe, in.cavity, in.eta, 0.4), DomainError);
  ProbeParams bad = in.probe;
  bad.detector_qe = 1.2;
  CHECK_THROWS_AS(photon_budget(kYb, bad, in.cavity, in.eta), DomainError);
}

TEST_CASE("property: budget is multiplicative in every efficiency") {
  Gen gen(44);
  const BudgetInputs in = paper_inputs();
  const double base = photon_budget(kYb, in.probe, in.cavity, in.eta).total;
  for (int i = 0; i < 50; ++i) {
    const double a = gen.uniform(0.05, 1.0);
    ProbeParams p = in.probe;
    CavityParams c = in.cavity;
    double eta = in.eta;
    switch (i % 6) {
      case 0: p.polarization_factor *= a; break;
      case 1: p.port_fraction *= a; break;
      case 2: p.mode_match *= a; break;
      case 3: p.optics *= a; break;
      case 4: p.detector_qe *= a; break;
      default: eta *= a; break;
    }
    CHECK(photon_budget(kYb, p, c, eta).total == doctest::Approx(a * base).epsilon(1e-13));
    c.output_coupling = *in.cavity.output_coupling * a;
    CHECK(photon_budget(kYb, in.probe, c, in.eta).total == doctest::Approx(a * base).epsilon(1e-13));
  }
}

TEST_CASE("thermometry: reported visibility") {
  const ThermometryResult t = visibility_to_temperature(0.65, angular(1.14e6), kYb, 369.5e-9);
  CHECK(t.sigma == doctest::Approx(27e-9).epsilon(1.0 / 27.0));
  CHECK(t.doppler_ratio == doctest::Approx(1.6).epsilon(0.1 / 1.6));
  // hbar Gamma / (2 k_B) with Gamma = 2 pi 19.9 MHz.
  const double td = constants::hbar * angular(19.9e6) / (2.0 * constants::boltzmann);
  CHECK(td == doctest::Approx(0.477e-3).epsilon(0.01));
  CHECK(t.doppler_temperature == doctest::Approx(td).epsilon(1e-12));
  const double k = 2.0 * constants::pi / 369.5e-9;
  CHECK(t.sigma == doctest::Approx(std::sqrt(-std::log(0.65) / (2 * k * k))).epsilon(1e-14));

  const ThermometryResult one = visibility_to_temperature(1.0, angular(1.14e6), kYb, 369.5e-9);
  CHECK(one.temperature == 0.0);
  CHECK(one.sigma == 0.0);
  CHECK_THROWS_AS(visibility_to_temperature(0.0, angular(1e6), kYb, 369.5e-9), DomainError);
  CHECK_THROWS_AS(visibility_to_temperature(1.01, angular(1e6), kYb, 369.5e-9), DomainError);
}

TEST_CASE("property: thermometry inverse pair and monotonicity") {
  Gen gen(45);
  for (int i = 0; i < 200; ++i) {
    const double v = gen.uniform(1e-6, 1.0);
    const double w = angular(gen.uniform(0.1e6, 5e6));
    const ThermometryResult t = visibility_to_temperature(v, w, kYb, 369.5e-9);
    const ThermometryResult back = temperature_to_visibility(t.temperature, w, kYb, 369.5e-9);
    CHECK(std::abs(back.visibility - v) < 1e-12);
    const ThermometryResult hotter = temperature_to_visibility(t.temperature * 1.1 + 1e-9, w, kYb, 369.5e-9);
    CHECK(hotter.visibility < back.visibility);
  }
}

TEST_CASE("fringes: flat, peak/valley, period, fit round trip") {
  std::vector<double> z;
  for (int i = 0; i < 400; ++i) z.push_back(i * 2e-9);
  for (double r : fringe_scan(z, 0.0, 100.0, 369.5e-9)) CHECK(r == 100.0);
  CHECK(fringe_peak_valley(0.65) == doctest::Approx(1.65 / 0.35).epsilon(1e-14));
  CHECK(fringe_peak_valley(0.65) == doctest::Approx(4.71).epsilon(0.001));
  const std::vector<double> r = fringe_scan(z, 0.65, 100.0, 369.5e-9);
  const std::vector<double> shifted = fringe_scan({z[7] + 369.5e-9 / 2}, 0.65, 100.0, 369.5e-9);
  CHECK(shifted[0] == doctest::Approx(r[7]).epsilon(1e-12));

  std::mt19937_64 rng(46);
  std::normal_distribution<double> noise(0.0, 3.0);
  std::vector<double> noisy = r;
  for (double& x : noisy) x += noise(rng);
  const FringeFit f = fit_fringe(z, noisy, 369.5e-9);
  CHECK(f.visibility_error > 0.0);
  CHECK(std::abs(f.visibility - 0.65) < 3.0 * f.visibility_error);
  CHECK(f.base_rate == doctest::Approx(100.0).epsilon(0.01));
  const FringeFit exact = fit_fringe(z, r, 369.5e-9);
  CHECK(exact.visibility == doctest::Approx(0.65).epsilon(1e-10));
}

TEST_CASE("collective threshold") {
  CHECK(collective_threshold(0.044) == 23);
  CHECK(collective_threshold(0.23) == 5);
  CHECK(collective_threshold(1.0) == 1);
  CHECK_THROWS_AS(collective_threshold(0.0), DomainError);
  Gen gen(47);
  for (int i = 0; i < 500; ++i) {
    const double eta = std::exp(gen.uniform(std::log(1e-4), std::log(3.0)));
    const int n = collective_threshold(eta);
    CHECK(n * eta >= 1.0);
    CHECK((n - 1) * eta < 1.0);
  }
}

TEST_CASE("lattice geometry") {
  CHECK(lattice_geometry(369.5e-9, 1e9).period == doctest::Approx(184.75e-9).epsilon(1e-14));
  CHECK(lattice_geometry(370e-9, 1e9).period == doctest::Approx(185e-9).epsilon(1e-14));
  CHECK(lattice_geometry(369.5e-9, 1e9).peak_intensity == 1e9);
  Gen gen(48);
  for (int i = 0; i < 50; ++i) {
    const double l = gen.uniform(1e-7, 2e-6);
    CHECK(lattice_geometry(l, 0.0).period * 2.0 / l == doctest::Approx(1.0).epsilon(1e-15));
  }
}
